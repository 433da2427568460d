//! Batch commands behind the `vh` binary.
//!
//! Each command reads a [`RunConfig`], writes its artifacts into an output
//! directory and reports whether its diagnostics passed. Every artifact embeds
//! the resolved configuration: CSV files on a first line `# config: {...}`,
//! JSON files under a `config` member.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{
    CharfnSpec, KernelCheckSpec, LiftCompareSpec, PriceSpec, RunConfig, SimulateSpec, StoreMode,
    CSV_CONFIG_PREFIX,
};
use crate::curves::{check_admissible, forward_variance, InputCurve};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::{
    reconstruct_shifted_kernel, resolvent_first_kind, resolvent_residual, tol, Kernel,
};
use crate::lift::{discretize_measure, kernel_l2_error};
use crate::montecarlo::{mc_stats, simulate, Storage};
use crate::riccati::FLArgument;
use crate::transform::{fourier_laplace, lift_transform, Pricer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    KernelCheck,
    CurveCheck,
    Charfn,
    Price,
    Simulate,
    LiftCompare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::KernelCheck => "kernel-check",
            Command::CurveCheck => "curve-check",
            Command::Charfn => "charfn",
            Command::Price => "price",
            Command::Simulate => "simulate",
            Command::LiftCompare => "lift-compare",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub emit_plot_data: bool,
}

/// What a command produced.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub command: &'static str,
    pub pass: bool,
    pub files: Vec<PathBuf>,
}

/// Fills in the optional sections `cmd` uses, so the echoed config is complete.
pub fn resolve(cmd: Command, mut cfg: RunConfig) -> Result<RunConfig> {
    let missing = |name: &str| Error::Config(format!("`{}` needs a `{name}` section", cmd.name()));
    match cmd {
        Command::KernelCheck => {
            cfg.kernel_check
                .get_or_insert_with(KernelCheckSpec::default);
        }
        Command::CurveCheck => {
            cfg.curve_check.get_or_insert_with(Default::default);
        }
        Command::Charfn => {
            cfg.charfn.as_ref().ok_or_else(|| missing("charfn"))?;
        }
        Command::Price => {
            cfg.price.as_ref().ok_or_else(|| missing("price"))?;
        }
        Command::Simulate => {
            cfg.simulate.as_ref().ok_or_else(|| missing("simulate"))?;
        }
        Command::LiftCompare => {
            cfg.lift_compare
                .as_ref()
                .ok_or_else(|| missing("lift_compare"))?;
        }
    }
    Ok(cfg)
}

pub fn run(cmd: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome> {
    let cfg = resolve(cmd, cfg.clone())?;
    fs::create_dir_all(&opts.out)?;
    let mut ctx = Ctx {
        cfg: &cfg,
        opts,
        files: Vec::new(),
    };
    let kernel = cfg.kernel.build()?;
    let grid = cfg.grid.build()?;
    info!(
        "{} on {} steps of {}",
        cmd.name(),
        grid.n_steps(),
        grid.dt()
    );
    let pass = match cmd {
        Command::KernelCheck => kernel_check(&mut ctx, &kernel, &grid)?,
        Command::CurveCheck => curve_check(&mut ctx, &kernel, &grid)?,
        Command::Charfn => charfn(&mut ctx, &kernel, &grid)?,
        Command::Price => price(&mut ctx, &kernel, &grid)?,
        Command::Simulate => simulate_cmd(&mut ctx, &kernel, &grid)?,
        Command::LiftCompare => lift_compare(&mut ctx, &kernel, &grid)?,
    };
    Ok(Outcome {
        command: cmd.name(),
        pass,
        files: ctx.files,
    })
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    opts: &'a RunOptions,
    files: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.opts.out.join(name);
        fs::write(&path, bytes)?;
        info!("wrote {}", path.display());
        self.files.push(path);
        Ok(())
    }

    /// CSV with the config line, a header and `rows`.
    fn csv(&mut self, name: &str, header: &str, rows: &str) -> Result<()> {
        self.csv_table(name, &format!("{header}\n{rows}"))
    }

    /// `table` already starts with its header.
    fn csv_table(&mut self, name: &str, table: &str) -> Result<()> {
        let text = format!("{CSV_CONFIG_PREFIX}{}\n{table}", self.cfg.to_json_line());
        self.write(name, text.as_bytes())
    }

    /// JSON report with the config under `config`.
    fn json(&mut self, name: &str, report: serde_json::Value) -> Result<()> {
        let mut body = json!({ "config": self.cfg });
        if let (Some(dst), serde_json::Value::Object(src)) = (body.as_object_mut(), report) {
            dst.extend(src);
        }
        let mut text =
            serde_json::to_string_pretty(&body).map_err(|e| Error::State(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// `x y` series for external plotting.
    fn plot(&mut self, name: &str, pts: impl IntoIterator<Item = (f64, f64)>) -> Result<()> {
        if !self.opts.emit_plot_data {
            return Ok(());
        }
        let mut text = String::new();
        for (x, y) in pts {
            writeln!(text, "{x} {y}").expect("string write");
        }
        self.write(name, text.as_bytes())
    }
}

fn curve(cfg: &RunConfig, kernel: &Kernel, grid: &TimeGrid) -> Result<InputCurve> {
    cfg.curve.build(kernel, cfg.model.lambda, grid)
}

fn kernel_check(ctx: &mut Ctx, kernel: &Kernel, grid: &TimeGrid) -> Result<bool> {
    let spec = ctx.cfg.kernel_check.clone().expect("resolved");
    let closed = match kernel {
        Kernel::ExpSum { terms } => terms.len() == 1 && terms[0].rate == 0.0,
        _ => true,
    };
    let threshold = if closed {
        tol::RESOLVENT_CLOSED
    } else {
        tol::RESOLVENT_DECONVOLVED
    };
    let l = resolvent_first_kind(kernel, grid)?;
    let residual = resolvent_residual(kernel, &l);
    let gamma = kernel.gamma_check(grid);
    let mut pass = residual <= threshold && gamma.pass;
    let mut recon = Vec::new();
    for &h in &spec.shifts {
        if grid.index_of(h).is_none() {
            return Err(Error::Config(format!(
                "kernel_check: shift {h} is not a grid node"
            )));
        }
        let r = reconstruct_shifted_kernel(kernel, &l, h)?;
        let ok = r.max_rel_error <= spec.reconstruction_tol;
        pass &= ok;
        recon.push(json!({ "h": h, "max_rel_error": r.max_rel_error, "pass": ok }));
        let series: Vec<(f64, f64)> = r
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let t = grid.time(j + 1);
                let want = kernel.value(t + h);
                (t, (v - want).abs() / want.abs())
            })
            .collect();
        ctx.plot(&format!("reconstruction_h{h}.dat"), series)?;
    }
    ctx.json(
        "kernel_check.json",
        json!({
            "pass": pass,
            "singular": kernel.is_singular(),
            "gamma": gamma,
            "resolvent": {
                "closed_form": closed,
                "residual": residual,
                "threshold": threshold,
                "pass": residual <= threshold,
            },
            "reconstruction": recon,
        }),
    )?;
    Ok(pass)
}

fn curve_check(ctx: &mut Ctx, kernel: &Kernel, grid: &TimeGrid) -> Result<bool> {
    let spec = ctx.cfg.curve_check.clone().expect("resolved");
    let g0 = curve(ctx.cfg, kernel, grid)?;
    let report = check_admissible(&g0, kernel, grid, spec.ladder.as_deref(), spec.tol)?;
    let pass = report.pass;
    ctx.json(
        "curve_check.json",
        json!({ "pass": pass, "report": report }),
    )?;
    let wide = grid.resized(2 * grid.n_steps())?;
    let pts: Vec<(f64, f64)> = wide.times().into_iter().map(|t| (t, g0.eval(t))).collect();
    ctx.plot("curve.dat", pts)?;
    Ok(pass)
}

fn charfn(ctx: &mut Ctx, kernel: &Kernel, grid: &TimeGrid) -> Result<bool> {
    let CharfnSpec { z, scheme } = ctx.cfg.charfn.clone().expect("resolved");
    let g0 = curve(ctx.cfg, kernel, grid)?;
    let p = ctx.cfg.model;
    let vals: Vec<_> = z
        .par_iter()
        .map(|&z| fourier_laplace(kernel, &p, &g0, &FLArgument::charfn(z), grid, scheme))
        .collect::<Result<_>>()?;
    let mut rows = String::new();
    for (z, v) in z.iter().zip(&vals) {
        writeln!(rows, "{z},{},{}", v.value.re, v.value.im).expect("string write");
    }
    ctx.csv("charfn.csv", "z,re,im", &rows)?;
    ctx.plot(
        "charfn_re.dat",
        z.iter().zip(&vals).map(|(z, v)| (*z, v.value.re)),
    )?;
    ctx.plot(
        "charfn_im.dat",
        z.iter().zip(&vals).map(|(z, v)| (*z, v.value.im)),
    )?;
    Ok(true)
}

fn price(ctx: &mut Ctx, kernel: &Kernel, grid: &TimeGrid) -> Result<bool> {
    let PriceSpec { strikes, options } = ctx.cfg.price.clone().expect("resolved");
    let g0 = curve(ctx.cfg, kernel, grid)?;
    let pricer = Pricer::new(kernel, &ctx.cfg.model, &g0, grid, &strikes, &options)?;
    info!("{} transform evaluations", pricer.n_evaluations());
    let quotes: Vec<_> = strikes.iter().map(|&k| pricer.quote(k)).collect();
    let mut rows = String::new();
    for q in &quotes {
        let iv = q.implied_vol.map(|v| v.to_string()).unwrap_or_default();
        writeln!(rows, "{},{},{iv}", q.strike, q.price).expect("string write");
    }
    ctx.csv("prices.csv", "strike,price,iv", &rows)?;
    ctx.plot("price.dat", quotes.iter().map(|q| (q.strike, q.price)))?;
    ctx.plot(
        "iv.dat",
        quotes
            .iter()
            .filter_map(|q| q.implied_vol.map(|v| (q.strike, v))),
    )?;
    Ok(true)
}

fn simulate_cmd(ctx: &mut Ctx, kernel: &Kernel, grid: &TimeGrid) -> Result<bool> {
    let SimulateSpec {
        n_paths,
        store,
        export_paths,
        functionals,
    } = ctx.cfg.simulate.clone().expect("resolved");
    if export_paths && store == StoreMode::Terminal {
        return Err(Error::Config(
            "simulate: export_paths needs store = \"full\"".into(),
        ));
    }
    let g0 = curve(ctx.cfg, kernel, grid)?;
    let storage = match store {
        StoreMode::Full => Storage::Full { increments: false },
        StoreMode::Terminal => Storage::Terminal,
    };
    let p = ctx.cfg.model;
    let ps = simulate(&p, &g0, kernel, grid, n_paths, ctx.cfg.seed, storage)?;
    info!("truncation fraction {}", ps.truncation_fraction());
    if export_paths {
        ctx.write("paths.bin", &ps.to_bytes()?)?;
    }
    if store == StoreMode::Full {
        let summary = ps.summary_csv()?;
        ctx.csv_table("summary.csv", &summary)?;
        let mut pts = Vec::new();
        for line in summary.lines().skip(1) {
            let mut it = line
                .split(',')
                .map(|s| s.parse::<f64>().unwrap_or(f64::NAN));
            if let (Some(t), Some(m)) = (it.next(), it.next()) {
                pts.push((t, m));
            }
        }
        ctx.plot("mean_v.dat", pts)?;
    }
    let fv = forward_variance(&g0, p.lambda, kernel, grid);
    let stats: Vec<_> = functionals
        .iter()
        .map(|f| json!({ "functional": f, "stats": mc_stats(&ps, f) }))
        .collect();
    ctx.json(
        "simulate.json",
        json!({
            "n_paths": n_paths,
            "truncation_fraction": ps.truncation_fraction(),
            "forward_variance_T": fv.last().copied().unwrap_or(f64::NAN),
            "results": stats,
        }),
    )?;
    Ok(true)
}

fn lift_compare(ctx: &mut Ctx, kernel: &Kernel, grid: &TimeGrid) -> Result<bool> {
    let LiftCompareSpec { n, rule, z } = ctx.cfg.lift_compare.clone().expect("resolved");
    let p = ctx.cfg.model;
    let arg = FLArgument::charfn(z);
    let g0 = curve(ctx.cfg, kernel, grid)?;
    let volterra = fourier_laplace(kernel, &p, &g0, &arg, grid, Default::default())?.value;
    let mut rows = String::new();
    let mut timing = String::from("n,seconds\n");
    let mut l2_pts = Vec::new();
    let mut cf_pts = Vec::new();
    for &m in &n {
        let start = Instant::now();
        let dm = discretize_measure(kernel, m, grid, rule)?;
        let l2 = kernel_l2_error(kernel, &dm, grid);
        let g_lift = curve(ctx.cfg, &dm.kernel(), grid)?;
        let lifted = lift_transform(&dm, &p, &g_lift, &arg, grid)?.value;
        let cf_err = (lifted - volterra).norm();
        writeln!(rows, "{m},{l2},{cf_err}").expect("string write");
        writeln!(timing, "{m},{}", start.elapsed().as_secs_f64()).expect("string write");
        l2_pts.push((m as f64, l2));
        cf_pts.push((m as f64, cf_err));
    }
    ctx.csv("lift_compare.csv", "n,l2_error,cf_error", &rows)?;
    // wall-clock times vary between runs, so they live outside the CSV
    ctx.write("lift_compare_timing.csv", timing.as_bytes())?;
    ctx.plot("lift_l2.dat", l2_pts)?;
    ctx.plot("lift_cf.dat", cf_pts)?;
    Ok(true)
}

/// JSON body printed on failure.
pub fn error_body(e: &Error) -> serde_json::Value {
    match e {
        Error::NumericalFailure { what, residual } => {
            json!({ "error": "numerical_failure", "message": what, "residual": residual })
        }
        Error::Blowup { last_valid_time } => {
            json!({ "error": "blowup", "message": e.to_string(), "last_valid_time": last_valid_time })
        }
        Error::Config(_) => json!({ "error": "config", "message": e.to_string() }),
        Error::Domain(_) => json!({ "error": "domain", "message": e.to_string() }),
        Error::State(_) => json!({ "error": "state", "message": e.to_string() }),
        Error::Io(_) => json!({ "error": "io", "message": e.to_string() }),
    }
}

/// `0` pass, `1` numerical failure or failed diagnostic, `2` usage or config error.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) if o.pass => 0,
        Ok(_) => 1,
        Err(Error::Config(_) | Error::Domain(_)) => 2,
        Err(_) => 1,
    }
}
