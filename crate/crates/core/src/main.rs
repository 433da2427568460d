use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use volterra_heston::cli::{self, Command, RunOptions};
use volterra_heston::config::RunConfig;
use volterra_heston::Error;

/// Volterra Heston toolkit: kernel and curve diagnostics, transforms, pricing,
/// Monte Carlo and the Markovian lift.
///
/// Every output embeds the resolved config (CSV: first line `# config: {...}`;
/// JSON: `config` member) and can be passed back to `--config`.
///
/// Exit codes: 0 pass, 1 numerical failure or failed diagnostic (JSON error
/// body on stdout), 2 usage or config error.
///
/// Log level: `VH_LOG` (e.g. `VH_LOG=info`).
#[derive(Parser)]
#[command(name = "vh", version)]
struct Args {
    #[command(subcommand)]
    command: Cmd,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Also write `x y` series files for plotting.
    #[arg(long, global = true)]
    emit_plot_data: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Hölder exponent fit, resolvent residual `‖K∗L − 1‖` and shifted-kernel
    /// reconstruction. Writes `kernel_check.json`.
    KernelCheck,
    /// Admissibility of the input curve over a shift ladder. Writes
    /// `curve_check.json`.
    CurveCheck,
    /// Characteristic function of `log S_T`. Writes `charfn.csv` with columns
    /// `z,re,im`.
    Charfn,
    /// Call prices by Fourier inversion. Writes `prices.csv` with columns
    /// `strike,price,iv` (`iv` empty when no implied volatility exists).
    Price,
    /// Monte Carlo paths. Writes `simulate.json` (functional estimates),
    /// `summary.csv` with columns
    /// `t,mean_v,stderr_v,mean_s,stderr_s,negative_fraction` and `paths.bin`
    /// (magic `VHPS`, u32 version, u64 n_paths, u64 n_steps, f64 dt, then
    /// row-major f64 V and log S, little endian).
    Simulate,
    /// Lift against the Volterra route. Writes `lift_compare.csv` with columns
    /// `n,l2_error,cf_error` and `lift_compare_timing.csv` with `n,seconds`.
    LiftCompare,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::KernelCheck => Command::KernelCheck,
            Cmd::CurveCheck => Command::CurveCheck,
            Cmd::Charfn => Command::Charfn,
            Cmd::Price => Command::Price,
            Cmd::Simulate => Command::Simulate,
            Cmd::LiftCompare => Command::LiftCompare,
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter("VH_LOG")).init();
    let result = execute(&args);
    match &result {
        Ok(outcome) => println!(
            "{}",
            serde_json::to_string(outcome).expect("outcome serializes")
        ),
        Err(e) => println!("{}", cli::error_body(e)),
    }
    ExitCode::from(cli::exit_code(&result) as u8)
}

fn execute(args: &Args) -> volterra_heston::Result<cli::Outcome> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let opts = RunOptions {
        out: args.out.clone(),
        emit_plot_data: args.emit_plot_data,
    };
    let command = Command::from(args.command);
    match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?
            .install(|| cli::run(command, &cfg, &opts)),
        None => cli::run(command, &cfg, &opts),
    }
}
