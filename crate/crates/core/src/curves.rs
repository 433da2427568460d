//! Input curves `g_0`, the admissibility condition and the forward variance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::{
    loglog_slope, resolvent_first_kind, shifted_resolvent_values, GridMeasure, Kernel,
    KernelWeights,
};

/// `θ` in `g_0 = V_0 + K∗θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Theta {
    Const(f64),
    /// Piecewise linear through `(t, θ(t))`, flat outside the table.
    Table(Table),
}

/// Piecewise-linear table with flat extrapolation on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Table {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::domain("table needs matching nonempty columns"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("table times must be strictly increasing"));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::domain("table entries must be finite"));
        }
        Ok(Self { times, values })
    }

    pub fn from_pairs(pairs: &[[f64; 2]]) -> Result<Self> {
        Self::new(
            pairs.iter().map(|p| p[0]).collect(),
            pairs.iter().map(|p| p[1]).collect(),
        )
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&x| x <= t);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        self.values[i - 1] * (1.0 - w) + self.values[i] * w
    }

    /// Breakpoints inside `(lo, hi)` together with the endpoints, sorted.
    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = vec![lo];
        pts.extend(self.times.iter().copied().filter(|&x| x > lo && x < hi));
        pts.push(hi);
        pts
    }
}

/// An input curve `g_0` on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InputCurve {
    Tabulated(Table),
    /// `g_0(t) = V_0 + ∫_0^t K(t−s) θ(s) ds`.
    ThetaForm {
        v0: f64,
        theta: Theta,
        kernel: Kernel,
    },
}

impl InputCurve {
    /// Constant curve `g_0 ≡ v`.
    pub fn flat(v: f64) -> Self {
        InputCurve::Tabulated(Table {
            times: vec![0.0],
            values: vec![v],
        })
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Table::new(times, values).map(InputCurve::Tabulated)
    }

    /// Curve sampled on `grid`.
    pub fn from_grid(grid: &TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::domain("grid values do not match the grid"));
        }
        Self::tabulated(grid.times(), values)
    }

    /// `V_0 + K∗θ`; rejects `V_0 < 0` and, on `grid`, any cell where the
    /// measure `θ(s)ds + V_0 L(ds)` is negative.
    pub fn theta_form(v0: f64, theta: Theta, kernel: &Kernel, grid: &TimeGrid) -> Result<Self> {
        if !(v0 >= 0.0) {
            return Err(Error::domain(format!("V0 must be >= 0, got {v0}")));
        }
        let min_theta = match &theta {
            Theta::Const(c) => *c,
            Theta::Table(t) => t.values.iter().copied().fold(f64::INFINITY, f64::min),
        };
        if !min_theta.is_finite() {
            return Err(Error::domain("theta must be finite"));
        }
        let curve = InputCurve::ThetaForm {
            v0,
            theta,
            kernel: kernel.clone(),
        };
        if min_theta < 0.0 {
            let l = resolvent_first_kind(kernel, grid)?;
            let dt = grid.dt();
            let masses = l.cell_masses();
            let mut worst = v0 * l.atom0;
            for (k, m) in masses.iter().enumerate() {
                let (a, b) = (k as f64 * dt, (k + 1) as f64 * dt);
                let theta_mass = match &curve {
                    InputCurve::ThetaForm { theta, .. } => theta.integral(a, b),
                    _ => unreachable!(),
                };
                worst = worst.min(theta_mass + v0 * m);
            }
            if worst < -1e-12 {
                return Err(Error::domain(format!(
                    "theta(s)ds + V0 L(ds) is not a nonnegative measure (cell mass {worst:e})"
                )));
            }
        }
        Ok(curve)
    }

    /// `V_0 + ∫_0^t K(s) λθ ds`.
    pub fn classical(v0: f64, theta: f64, lambda: f64, kernel: &Kernel) -> Result<Self> {
        if !(v0 >= 0.0) || !(theta >= 0.0) || !(lambda >= 0.0) {
            return Err(Error::domain(format!(
                "classical curve needs V0, theta, lambda >= 0 (got {v0}, {theta}, {lambda})"
            )));
        }
        Ok(InputCurve::ThetaForm {
            v0,
            theta: Theta::Const(lambda * theta),
            kernel: kernel.clone(),
        })
    }

    /// Reads a two-column `t,value` CSV with a header line.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("curve csv: {msg}"));
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(e.to_string()))?;
        if header.len() != 2 || header.iter().any(|h| h.parse::<f64>().is_ok()) {
            return Err(bad("expected header line `t,value`".into()));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for row in reader.deserialize::<(f64, f64)>() {
            let (t, v) = row.map_err(|e| bad(e.to_string()))?;
            times.push(t);
            values.push(v);
        }
        Self::tabulated(times, values).map_err(|e| bad(e.to_string()))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            InputCurve::Tabulated(table) => table.eval(t),
            InputCurve::ThetaForm { v0, theta, kernel } => {
                if t <= 0.0 {
                    return *v0;
                }
                v0 + match theta {
                    Theta::Const(c) => c * kernel.integral(0.0, t),
                    Theta::Table(table) => {
                        // θ linear between breakpoints; lag interval [t − b, t − a]
                        let pts = table.breakpoints(0.0, t);
                        pts.windows(2)
                            .map(|w| {
                                let (a, b) = (w[0], w[1]);
                                let (wa, wb) = kernel.linear_weights(t - b, t - a);
                                wa * table.eval(b) + wb * table.eval(a)
                            })
                            .sum::<f64>()
                    }
                }
            }
        }
    }

    /// `g_0(offset + t_j)` for every node of `grid`.
    pub fn sample(&self, grid: &TimeGrid, offset: f64) -> Vec<f64> {
        (0..grid.n_points())
            .map(|j| self.eval(offset + grid.time(j)))
            .collect()
    }
}

impl Theta {
    fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Theta::Const(c) => c * (b - a),
            Theta::Table(t) => t
                .breakpoints(a, b)
                .windows(2)
                .map(|w| 0.5 * (w[1] - w[0]) * (t.eval(w[0]) + t.eval(w[1])))
                .sum(),
        }
    }
}

/// `t ↦ g_0(t_0 + t)` tabulated on `grid`.
pub fn shift_curve(g0: &InputCurve, t0: f64, grid: &TimeGrid) -> Result<InputCurve> {
    if !(t0 >= 0.0) || !t0.is_finite() {
        return Err(Error::domain(format!(
            "shift t0 must be finite and >= 0, got {t0}"
        )));
    }
    if t0 == 0.0 {
        if let InputCurve::Tabulated(_) = g0 {
            return Ok(g0.clone());
        }
    }
    InputCurve::from_grid(grid, g0.sample(grid, t0))
}

/// Solves `u + λ K∗u = g_0` on the grid by implicit product integration.
pub fn forward_variance(
    g0: &InputCurve,
    lambda: f64,
    kernel: &Kernel,
    grid: &TimeGrid,
) -> Vec<f64> {
    forward_variance_values(&g0.sample(grid, 0.0), lambda, kernel, grid)
}

/// [`forward_variance`] for a curve already sampled on the grid.
pub fn forward_variance_values(
    g: &[f64],
    lambda: f64,
    kernel: &Kernel,
    grid: &TimeGrid,
) -> Vec<f64> {
    let n = grid.n_steps().min(g.len().saturating_sub(1));
    let mut u = vec![0.0; n + 1];
    if g.is_empty() {
        return Vec::new();
    }
    u[0] = g[0];
    if lambda == 0.0 {
        return g[..=n].to_vec();
    }
    let w = KernelWeights::for_grid(kernel, grid);
    for j in 1..=n {
        let hist: f64 = w.history(&u, j);
        u[j] = (g[j] - lambda * (hist + w.far[1] * u[j - 1])) / (1.0 + lambda * w.near[1]);
    }
    u
}

/// One point where the left side of the admissibility inequality is below
/// `-tol`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Violation {
    pub h: f64,
    pub t: f64,
    pub value: f64,
}

/// Outcome of [`check_admissible`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AdmissibilityReport {
    pub pass: bool,
    /// Minimum over the ladder and grid of the admissibility functional and of
    /// `g_0(0)`; `+∞` if nothing was evaluated.
    pub worst_violation: f64,
    /// Up to [`MAX_REPORTED`] violating points, worst first.
    pub violations: Vec<Violation>,
    pub tolerance: f64,
    pub shift_ladder: Vec<f64>,
    pub g0_at_zero: f64,
    /// Log-log slope of the sup-norm increments of `g_0`.
    pub holder_slope: f64,
    /// Set when the slope is below `γ/2 − 0.1`; informational only.
    pub holder_flag: bool,
}

pub const MAX_REPORTED: usize = 50;

/// Default tolerance `1e-9·max(1, ‖g‖_∞)`.
pub fn default_tolerance(values: &[f64]) -> f64 {
    1e-9 * values.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
}

/// Evaluates `Δ_h g − (Δ_hK∗L)(0) g − d(Δ_hK∗L)∗g` on a grid for a fixed kernel
/// and shift ladder. `Δ_hK∗L` is computed once per shift, so one checker can
/// be applied to many curves.
#[derive(Debug, Clone)]
pub struct AdmissibilityChecker {
    grid: TimeGrid,
    ladder: Vec<f64>,
    shifts: Vec<usize>,
    phi: Vec<Vec<f64>>,
    holder_gamma: f64,
}

impl AdmissibilityChecker {
    /// `ladder` entries must be grid multiples in `[0, T]`.
    pub fn new(kernel: &Kernel, grid: &TimeGrid, ladder: &[f64]) -> Result<Self> {
        let l = resolvent_first_kind(kernel, grid)?;
        Self::with_resolvent(kernel, &l, ladder)
    }

    pub fn with_resolvent(kernel: &Kernel, l: &GridMeasure, ladder: &[f64]) -> Result<Self> {
        let grid = l.grid;
        let mut shifts = Vec::with_capacity(ladder.len());
        let mut phi = Vec::with_capacity(ladder.len());
        for &h in ladder {
            let m = grid
                .index_of(h)
                .ok_or_else(|| Error::domain(format!("shift {h} is not a node of the grid")))?;
            shifts.push(m);
            phi.push(shifted_resolvent_values(kernel, l, h)?);
        }
        Ok(Self {
            grid,
            ladder: ladder.to_vec(),
            shifts,
            phi,
            holder_gamma: kernel.holder_gamma(),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `g` sampled on `[0, 2T]` with the checker's step (`2N + 1` values).
    pub fn check_values(&self, g: &[f64], tol: f64) -> AdmissibilityReport {
        let n = self.grid.n_steps();
        assert!(g.len() > 2 * n, "curve must be sampled on [0, 2T]");
        let mut worst = g[0];
        let mut violations = Vec::new();
        if g[0] < -tol {
            violations.push(Violation {
                h: 0.0,
                t: 0.0,
                value: g[0],
            });
        }
        for (idx, (&m, phi)) in self.shifts.iter().zip(&self.phi).enumerate() {
            let h = self.ladder[idx];
            for j in 0..=n {
                let mut conv = phi[0] * g[j];
                for k in 0..j {
                    conv += (phi[k + 1] - phi[k]) * 0.5 * (g[j - k] + g[j - k - 1]);
                }
                let value = g[j + m] - conv;
                worst = worst.min(value);
                if value < -tol {
                    violations.push(Violation {
                        h,
                        t: self.grid.time(j),
                        value,
                    });
                }
            }
        }
        violations.sort_by(|a, b| a.value.total_cmp(&b.value));
        violations.truncate(MAX_REPORTED);
        let holder_slope = holder_slope(&g[..=n], self.grid.dt());
        AdmissibilityReport {
            pass: worst >= -tol,
            worst_violation: worst,
            violations,
            tolerance: tol,
            shift_ladder: self.ladder.clone(),
            g0_at_zero: g[0],
            holder_slope,
            holder_flag: holder_slope < self.holder_gamma / 2.0 - 0.1,
        }
    }

    pub fn check(&self, g0: &InputCurve, tol: Option<f64>) -> AdmissibilityReport {
        let wide = self
            .grid
            .resized(2 * self.grid.n_steps())
            .expect("valid grid");
        let g = g0.sample(&wide, 0.0);
        let tol = tol.unwrap_or_else(|| default_tolerance(&g));
        self.check_values(&g, tol)
    }
}

/// Checks `g_0(0) ≥ 0` and the admissibility inequality at every grid time for
/// each shift in `ladder` (default: the grid's dyadic ladder). `tol` defaults to
/// [`default_tolerance`] of `g_0` on `[0, 2T]`.
pub fn check_admissible(
    g0: &InputCurve,
    kernel: &Kernel,
    grid: &TimeGrid,
    ladder: Option<&[f64]>,
    tol: Option<f64>,
) -> Result<AdmissibilityReport> {
    let default = grid.dyadic_ladder();
    let checker = AdmissibilityChecker::new(kernel, grid, ladder.unwrap_or(&default))?;
    Ok(checker.check(g0, tol))
}

/// Log-log slope of `max_t |g(t+δ) − g(t)|` against `δ = Δt·2^k`; `+∞` for
/// flat curves.
fn holder_slope(g: &[f64], dt: f64) -> f64 {
    let n = g.len().saturating_sub(1);
    let mut deltas = Vec::new();
    let mut incs = Vec::new();
    let mut lag = 1;
    while lag <= n / 4 && deltas.len() < 8 {
        let inc = (0..=n - lag)
            .map(|i| (g[i + lag] - g[i]).abs())
            .fold(0.0, f64::max);
        deltas.push(lag as f64 * dt);
        incs.push(inc);
        lag *= 2;
    }
    loglog_slope(&deltas, &incs)
}

/// Curve section of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CurveSpec {
    /// `g_0` through `(t, value)` points, or loaded from a `t,value` CSV.
    Tabulated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<[f64; 2]>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        csv: Option<String>,
    },
    /// `V0 + K∗θ` with `θ` a constant or `(t, θ)` points.
    Theta {
        #[serde(rename = "V0")]
        v0: f64,
        theta: ThetaSpec,
    },
    /// `V0 + λθ ∫_0^t K`, with `λ` taken from the model.
    Classical {
        #[serde(rename = "V0")]
        v0: f64,
        theta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSpec {
    Const(f64),
    Table(Vec<[f64; 2]>),
}

impl CurveSpec {
    pub fn build(&self, kernel: &Kernel, lambda: f64, grid: &TimeGrid) -> Result<InputCurve> {
        let cfg = |e: Error| match e {
            Error::Config(_) | Error::Io(_) => e,
            other => Error::Config(format!("curve: {other}")),
        };
        match self {
            CurveSpec::Tabulated { points, csv } => match (points, csv) {
                (Some(p), None) => Table::from_pairs(p).map(InputCurve::Tabulated).map_err(cfg),
                (None, Some(path)) => InputCurve::from_csv(Path::new(path)).map_err(cfg),
                _ => Err(Error::Config(
                    "curve: give exactly one of `points` and `csv`".into(),
                )),
            },
            CurveSpec::Theta { v0, theta } => {
                let theta = match theta {
                    ThetaSpec::Const(c) => Theta::Const(*c),
                    ThetaSpec::Table(p) => Theta::Table(Table::from_pairs(p).map_err(cfg)?),
                };
                InputCurve::theta_form(*v0, theta, kernel, grid).map_err(cfg)
            }
            CurveSpec::Classical { v0, theta } => {
                InputCurve::classical(*v0, *theta, lambda, kernel).map_err(cfg)
            }
        }
    }
}
