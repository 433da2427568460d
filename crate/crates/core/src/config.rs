//! JSON run configuration for the `vh` binary.
//!
//! Every section rejects unknown keys. Defaults are materialized on load, so
//! serializing a [`RunConfig`] gives the fully resolved configuration that the
//! command outputs embed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curves::CurveSpec;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::KernelSpec;
use crate::lift::NodeRule;
use crate::montecarlo::Functional;
use crate::riccati::{ModelParams, Scheme};
use crate::transform::PricingOptions;

pub const SCHEMA_VERSION: u32 = 1;

/// Prefix of the first line of every CSV output.
pub const CSV_CONFIG_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub model: ModelParams,
    pub kernel: KernelSpec,
    pub curve: CurveSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_check: Option<KernelCheckSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_check: Option<CurveCheckSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charfn: Option<CharfnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<PriceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lift_compare: Option<LiftCompareSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::with_horizon(self.horizon, self.dt)
            .map_err(|e| Error::Config(format!("grid: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelCheckSpec {
    /// Shifts `h` for the shifted-kernel reconstruction; grid nodes.
    pub shifts: Vec<f64>,
    /// Bound on the maximal relative reconstruction error.
    pub reconstruction_tol: f64,
}

impl Default for KernelCheckSpec {
    fn default() -> Self {
        Self {
            shifts: vec![0.1],
            reconstruction_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CurveCheckSpec {
    /// Shift ladder; the grid's dyadic ladder when absent.
    pub ladder: Option<Vec<f64>>,
    /// Absolute tolerance; `1e-9·max(1, ‖g‖)` when absent.
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharfnSpec {
    pub z: Vec<f64>,
    #[serde(default)]
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSpec {
    pub strikes: Vec<f64>,
    #[serde(default)]
    pub options: PricingOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StoreMode {
    #[default]
    Full,
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub n_paths: usize,
    #[serde(default)]
    pub store: StoreMode,
    /// Write `paths.bin` (needs `store = full`).
    #[serde(default = "yes")]
    pub export_paths: bool,
    #[serde(default = "default_functionals")]
    pub functionals: Vec<Functional>,
}

fn yes() -> bool {
    true
}

fn default_functionals() -> Vec<Functional> {
    vec![Functional::TerminalS, Functional::TerminalVMoment { p: 1 }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftCompareSpec {
    /// Node counts.
    pub n: Vec<usize>,
    #[serde(default)]
    pub rule: NodeRule,
    /// Characteristic-function argument for the CF error.
    #[serde(default = "unit")]
    pub z: f64,
}

fn unit() -> f64 {
    1.0
}

impl RunConfig {
    /// Parses a JSON config. Also accepts the outputs of `vh`: a JSON report
    /// with a `config` member or a CSV whose first line is
    /// `# config: {...}`.
    pub fn parse(text: &str) -> Result<Self> {
        let body = match text.lines().next() {
            Some(first) if first.starts_with(CSV_CONFIG_PREFIX) => {
                &first[CSV_CONFIG_PREFIX.len()..]
            }
            _ => text,
        };
        let value: serde_json::Value =
            serde_json::from_str(body).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        let value = match value {
            serde_json::Value::Object(mut m)
                if !m.contains_key("schema") && m.contains_key("config") =>
            {
                m.remove("config").expect("checked")
            }
            v => v,
        };
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                self.schema
            )));
        }
        self.model
            .validate()
            .map_err(|e| Error::Config(format!("model: {e}")))?;
        self.kernel.build()?;
        self.grid.build()?;
        Ok(())
    }

    /// Compact single-line JSON of the resolved configuration.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "schema": 1,
        "model": { "lambda": 2.0, "nu": 0.3, "rho": -0.7, "S0": 1.0 },
        "kernel": { "kind": "fractional", "alpha": 0.6 },
        "curve": { "kind": "classical", "V0": 0.04, "theta": 0.04 },
        "grid": { "dt": 0.01, "T": 1.0 },
        "simulate": { "n_paths": 10 }
    }"#;

    #[test]
    fn defaults_are_materialized() {
        let cfg = RunConfig::parse(BASE).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.kernel.c, 1.0);
        let sim = cfg.simulate.as_ref().unwrap();
        assert_eq!(sim.store, StoreMode::Full);
        assert!(sim.export_paths);
        assert_eq!(sim.functionals.len(), 2);
        assert!(cfg.charfn.is_none());
    }

    #[test]
    fn embedded_configs_parse_back() {
        let cfg = RunConfig::parse(BASE).unwrap();
        let line = cfg.to_json_line();
        let csv = format!("{CSV_CONFIG_PREFIX}{line}\nz,re,im\n0,1,0\n");
        assert_eq!(RunConfig::parse(&csv).unwrap(), cfg);
        let report = format!(r#"{{"pass": true, "config": {line}}}"#);
        assert_eq!(RunConfig::parse(&report).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_schema() {
        let extra = BASE.replace("\"schema\": 1", "\"schema\": 1, \"extra\": 0");
        assert!(matches!(RunConfig::parse(&extra), Err(Error::Config(_))));
        let schema = BASE.replace("\"schema\": 1", "\"schema\": 2");
        assert!(matches!(RunConfig::parse(&schema), Err(Error::Config(_))));
        let alpha = BASE.replace("0.6", "0.3");
        assert!(RunConfig::parse(&alpha).is_err());
    }
}
