//! Monte Carlo simulation of the truncated Volterra Heston equation.

use std::io::Write;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{AdmissibilityChecker, InputCurve};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::{Kernel, KernelWeights};
use crate::riccati::ModelParams;

/// What a [`PathSet`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    /// Whole `V` and `log S` paths, optionally with the Brownian increments `ΔW`.
    Full { increments: bool },
    /// Terminal values only.
    Terminal,
}

/// Contents of a `paths.bin` file: `(n_paths, n_steps, Δt, V, log S)`.
pub type PathsFile = (usize, usize, f64, Vec<f64>, Vec<f64>);

/// Simulated paths. `V` is stored before the positive-part map.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub grid: TimeGrid,
    pub params: ModelParams,
    pub n_paths: usize,
    pub seed: u64,
    pub storage: Storage,
    v: Vec<f64>,
    log_s: Vec<f64>,
    dw: Option<Vec<f64>>,
    /// Number of `(t_j, path)` cells with `V < 0`.
    pub negative_cells: u64,
}

/// Per-path random stream: ChaCha8 keyed by the seed, stream = path index.
pub(crate) fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// `(ΔW, ΔW^⊥)` for one step.
#[inline]
pub(crate) fn draw_step(rng: &mut ChaCha8Rng, sqrt_dt: f64) -> (f64, f64) {
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    (sqrt_dt * z1, sqrt_dt * z2)
}

/// `−λV dt + ν√(V^+) ΔW`.
#[inline]
pub(crate) fn variance_shock(p: &ModelParams, v: f64, dt: f64, dw: f64) -> f64 {
    -p.lambda * v * dt + p.nu * v.max(0.0).sqrt() * dw
}

/// Log-Euler step of `log S`.
#[inline]
pub(crate) fn log_s_step(p: &ModelParams, v: f64, dt: f64, dw: f64, dw_perp: f64) -> f64 {
    let vp = v.max(0.0);
    -0.5 * vp * dt + vp.sqrt() * (p.rho * dw + (1.0 - p.rho * p.rho).sqrt() * dw_perp)
}

/// Dot product with a fixed summation order (four interleaved partial sums).
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Cell averages `k̄_m = (1/Δt)∫_{(m−1)Δt}^{mΔt} K` in reverse order:
/// `rev[i] = k̄_{len − i}`, so `Σ_l k̄_{j−l} z_l` is `dot(rev[len−j..], z)`.
fn reversed_cell_averages(kernel: &Kernel, dt: f64, len: usize) -> Vec<f64> {
    let w = KernelWeights::new(kernel, dt, len);
    (0..len).map(|i| w.total[len - i] / dt).collect()
}

struct OnePath {
    v: Vec<f64>,
    log_s: Vec<f64>,
    dw: Vec<f64>,
    negative: u64,
}

/// Explicit Volterra–Euler scheme
/// `V_j = g_0(t_j) + Σ_{l<j} k̄_{j−l}(−λV_l Δt + ν√(V_l^+) ΔW_l)` with log-Euler
/// for `log S`. Paths are independent of the thread count: path `i` uses its
/// own random stream.
pub fn simulate(
    params: &ModelParams,
    g0: &InputCurve,
    kernel: &Kernel,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    storage: Storage,
) -> Result<PathSet> {
    params.validate()?;
    if n_paths == 0 {
        return Err(Error::domain("n_paths must be >= 1"));
    }
    let n = grid.n_steps();
    let dt = grid.dt();
    let g = g0.sample(grid, 0.0);
    let rev = reversed_cell_averages(kernel, dt, n);
    let keep_dw = matches!(storage, Storage::Full { increments: true });
    let log_s0 = params.s0.ln();

    let paths: Vec<OnePath> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let sqrt_dt = dt.sqrt();
            let mut dz = vec![0.0; n];
            let mut v = vec![0.0; n + 1];
            let mut dws = vec![0.0; n];
            let mut x = log_s0;
            let mut log_s = Vec::with_capacity(n + 1);
            log_s.push(x);
            let mut negative = 0;
            for j in 0..=n {
                let vj = g[j] + dot(&rev[n - j..], &dz[..j]);
                v[j] = vj;
                if vj < 0.0 {
                    negative += 1;
                }
                if j == n {
                    break;
                }
                let (dw, dw_perp) = draw_step(&mut rng, sqrt_dt);
                dws[j] = dw;
                dz[j] = variance_shock(params, vj, dt, dw);
                x += log_s_step(params, vj, dt, dw, dw_perp);
                log_s.push(x);
            }
            OnePath {
                v,
                log_s,
                dw: dws,
                negative,
            }
        })
        .collect();

    let negative_cells = paths.iter().map(|p| p.negative).sum();
    let (v, log_s, dw) = match storage {
        Storage::Terminal => (
            paths.iter().map(|p| p.v[n]).collect(),
            paths.iter().map(|p| p.log_s[n]).collect(),
            None,
        ),
        Storage::Full { .. } => {
            let mut v = Vec::with_capacity(n_paths * (n + 1));
            let mut log_s = Vec::with_capacity(n_paths * (n + 1));
            let mut dw = Vec::with_capacity(if keep_dw { n_paths * n } else { 0 });
            for p in &paths {
                v.extend_from_slice(&p.v);
                log_s.extend_from_slice(&p.log_s);
                if keep_dw {
                    dw.extend_from_slice(&p.dw);
                }
            }
            (v, log_s, keep_dw.then_some(dw))
        }
    };
    Ok(PathSet {
        grid: *grid,
        params: *params,
        n_paths,
        seed,
        storage,
        v,
        log_s,
        dw,
        negative_cells,
    })
}

const MAGIC: &[u8; 4] = b"VHPS";
const FORMAT_VERSION: u32 = 1;

impl PathSet {
    fn row_len(&self) -> usize {
        match self.storage {
            Storage::Full { .. } => self.grid.n_points(),
            Storage::Terminal => 1,
        }
    }

    fn full(&self) -> Result<()> {
        match self.storage {
            Storage::Full { .. } => Ok(()),
            Storage::Terminal => Err(Error::State(
                "paths were stored at the terminal time only".into(),
            )),
        }
    }

    /// Pre-truncation variance path.
    pub fn v_path(&self, i: usize) -> Result<&[f64]> {
        self.full()?;
        let r = self.row_len();
        Ok(&self.v[i * r..(i + 1) * r])
    }

    pub fn log_s_path(&self, i: usize) -> Result<&[f64]> {
        self.full()?;
        let r = self.row_len();
        Ok(&self.log_s[i * r..(i + 1) * r])
    }

    /// Brownian increments `ΔW` of path `i` (length `N`).
    pub fn dw_path(&self, i: usize) -> Result<&[f64]> {
        let n = self.grid.n_steps();
        self.dw
            .as_ref()
            .map(|d| &d[i * n..(i + 1) * n])
            .ok_or_else(|| Error::State("paths were simulated without stored increments".into()))
    }

    pub fn v_terminal(&self, i: usize) -> f64 {
        let r = self.row_len();
        self.v[i * r + r - 1]
    }

    pub fn log_s_terminal(&self, i: usize) -> f64 {
        let r = self.row_len();
        self.log_s[i * r + r - 1]
    }

    /// Value at node `j` of path `i` (`j = N` always available).
    pub fn v_at(&self, i: usize, j: usize) -> Result<f64> {
        if j == self.grid.n_steps() {
            return Ok(self.v_terminal(i));
        }
        Ok(self.v_path(i)?[j])
    }

    pub fn log_s_at(&self, i: usize, j: usize) -> Result<f64> {
        if j == self.grid.n_steps() {
            return Ok(self.log_s_terminal(i));
        }
        Ok(self.log_s_path(i)?[j])
    }

    /// Fraction of `(t_j, path)` cells with `V < 0` before truncation.
    pub fn truncation_fraction(&self) -> f64 {
        self.negative_cells as f64 / (self.n_paths as f64 * self.grid.n_points() as f64)
    }

    /// Binary layout (little endian): `VHPS`, version `u32`, `n_paths u64`,
    /// `n_steps u64`, `Δt f64`, then `V` and `log S` as row-major `f64`
    /// matrices of shape `n_paths × (n_steps + 1)`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        self.full()?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_paths as u64).to_le_bytes())?;
        w.write_all(&(self.grid.n_steps() as u64).to_le_bytes())?;
        w.write_all(&self.grid.dt().to_le_bytes())?;
        for x in self.v.iter().chain(&self.log_s) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(32 + 16 * self.v.len());
        self.write_binary(&mut out)?;
        Ok(out)
    }

    /// Reads the layout written by [`PathSet::write_binary`].
    pub fn read_binary(bytes: &[u8]) -> Result<PathsFile> {
        let bad = || Error::State("not a VHPS v1 file".into());
        if bytes.len() < 32 || &bytes[..4] != MAGIC {
            return Err(bad());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(4) != FORMAT_VERSION {
            return Err(bad());
        }
        let n_paths = u64_at(8) as usize;
        let n_steps = u64_at(16) as usize;
        let dt = f64::from_bits(u64_at(24));
        let len = n_paths * (n_steps + 1);
        if bytes.len() != 32 + 16 * len {
            return Err(bad());
        }
        let vals: Vec<f64> = bytes[32..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (v, s) = vals.split_at(len);
        Ok((n_paths, n_steps, dt, v.to_vec(), s.to_vec()))
    }

    /// CSV with columns `t,mean_v,stderr_v,mean_s,stderr_s,negative_fraction`.
    pub fn summary_csv(&self) -> Result<String> {
        self.full()?;
        let mut out = String::from("t,mean_v,stderr_v,mean_s,stderr_s,negative_fraction\n");
        for j in 0..self.grid.n_points() {
            let v: Vec<f64> = (0..self.n_paths)
                .map(|i| self.v[i * self.row_len() + j])
                .collect();
            let s: Vec<f64> = (0..self.n_paths)
                .map(|i| self.log_s[i * self.row_len() + j].exp())
                .collect();
            let neg = v.iter().filter(|x| **x < 0.0).count() as f64 / self.n_paths as f64;
            let sv = McStats::from_real(&v);
            let ss = McStats::from_real(&s);
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.grid.time(j),
                sv.mean.re,
                sv.stderr,
                ss.mean.re,
                ss.stderr,
                neg
            ));
        }
        Ok(out)
    }
}

/// `g_{t_0}(x_k) = g_0(t_0 + x_k) + Σ_{l<n_0} k̄_{n_0+k−l}(−λV_l Δt + ν√(V_l^+) ΔW_l)`
/// for `k = 0..=n_out`, tabulated on the simulation step. At `x = 0` this is the
/// same floating-point sum as the path's `V_{t_0}`.
pub fn evolve_forward_curve(
    ps: &PathSet,
    path: usize,
    t0: f64,
    g0: &InputCurve,
    kernel: &Kernel,
    n_out: usize,
) -> Result<InputCurve> {
    let values = evolve_forward_values(ps, path, t0, g0, kernel, n_out)?;
    let out_grid = TimeGrid::new(ps.grid.dt(), n_out)?;
    InputCurve::from_grid(&out_grid, values)
}

/// Grid values behind [`evolve_forward_curve`].
pub fn evolve_forward_values(
    ps: &PathSet,
    path: usize,
    t0: f64,
    g0: &InputCurve,
    kernel: &Kernel,
    n_out: usize,
) -> Result<Vec<f64>> {
    let rev = ForwardEvolver::new(ps, t0, kernel, n_out)?;
    rev.values(ps, path, g0)
}

/// Precomputed kernel averages for evolving many paths from the same `t_0`.
pub struct ForwardEvolver {
    n0: usize,
    n_out: usize,
    rev: Vec<f64>,
}

impl ForwardEvolver {
    pub fn new(ps: &PathSet, t0: f64, kernel: &Kernel, n_out: usize) -> Result<Self> {
        let n0 = ps
            .grid
            .index_of(t0)
            .ok_or_else(|| Error::domain(format!("t0 = {t0} is not a grid node")))?;
        let len = (n0 + n_out).max(1);
        let rev = reversed_cell_averages(kernel, ps.grid.dt(), len);
        Ok(Self { n0, n_out, rev })
    }

    pub fn values(&self, ps: &PathSet, path: usize, g0: &InputCurve) -> Result<Vec<f64>> {
        let (n0, n_out) = (self.n0, self.n_out);
        let dt = ps.grid.dt();
        let t0 = ps.grid.time(n0);
        let len = self.rev.len();
        let v = if n0 > 0 { ps.v_path(path)? } else { &[][..] };
        let dw = if n0 > 0 { ps.dw_path(path)? } else { &[][..] };
        let dz: Vec<f64> = (0..n0)
            .map(|l| variance_shock(&ps.params, v[l], dt, dw[l]))
            .collect();
        Ok((0..=n_out)
            .map(|k| {
                let base = if k == 0 {
                    g0.eval(t0)
                } else {
                    g0.eval(t0 + ps.grid.time(k))
                };
                let start = len - n0 - k;
                base + dot(&self.rev[start..start + n0], &dz)
            })
            .collect())
    }
}

/// Fraction of paths whose `g_{t_0}` passes the admissibility check on
/// `[0, T − t_0]` (curves evolved on `[0, 2(T − t_0)]`). `tol` is relative to
/// `max(1, ‖g_{t_0}‖_∞)`.
pub fn empirical_admissibility(
    ps: &PathSet,
    t0: f64,
    g0: &InputCurve,
    kernel: &Kernel,
    ladder: Option<&[f64]>,
    rel_tol: f64,
) -> Result<f64> {
    let n0 = ps
        .grid
        .index_of(t0)
        .ok_or_else(|| Error::domain(format!("t0 = {t0} is not a grid node")))?;
    let m = ps.grid.n_steps() - n0;
    if m == 0 {
        return Err(Error::domain("t0 must be before the horizon"));
    }
    let sub = TimeGrid::new(ps.grid.dt(), m)?;
    let default = sub.dyadic_ladder();
    let checker = AdmissibilityChecker::new(kernel, &sub, ladder.unwrap_or(&default))?;
    let evolver = ForwardEvolver::new(ps, t0, kernel, 2 * m)?;
    let passed: Vec<bool> = (0..ps.n_paths)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let g = evolver.values(ps, i, g0)?;
            let scale = g.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
            Ok(checker.check_values(&g, rel_tol * scale).pass)
        })
        .collect::<Result<_>>()?;
    Ok(passed.iter().filter(|p| **p).count() as f64 / ps.n_paths as f64)
}

/// Sample mean with standard error; complex-valued for characteristic
/// functions. `stderr` is `√((Var Re + Var Im)/n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McStats {
    pub mean: C64,
    pub stderr: f64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    /// 95% normal interval for the real part.
    pub ci95: [f64; 2],
    pub n: usize,
}

impl McStats {
    pub fn from_complex(x: &[C64]) -> Self {
        let n = x.len();
        let nf = n as f64;
        let mean: C64 = x.iter().sum::<C64>() / nf;
        let (mut vr, mut vi) = (0.0, 0.0);
        for v in x {
            vr += (v.re - mean.re).powi(2);
            vi += (v.im - mean.im).powi(2);
        }
        let denom = if n > 1 { nf - 1.0 } else { 1.0 };
        let stderr_re = (vr / denom / nf).sqrt();
        let stderr_im = (vi / denom / nf).sqrt();
        Self {
            mean,
            stderr: (stderr_re.powi(2) + stderr_im.powi(2)).sqrt(),
            stderr_re,
            stderr_im,
            ci95: [mean.re - 1.96 * stderr_re, mean.re + 1.96 * stderr_re],
            n,
        }
    }

    pub fn from_real(x: &[f64]) -> Self {
        let c: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        Self::from_complex(&c)
    }

    /// `|mean − target| ≤ k · stderr`.
    pub fn within(&self, target: C64, k: f64) -> bool {
        (self.mean - target).norm() <= k * self.stderr
    }
}

/// Terminal functionals for [`mc_stats`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    Constant {
        value: f64,
    },
    /// `V_T^p` (pre-truncation).
    TerminalVMoment {
        p: i32,
    },
    /// `S_T`.
    TerminalS,
    /// `exp(i z log S_T)`.
    CharFn {
        z: f64,
    },
    /// `(S_T − K)^+`.
    Call {
        strike: f64,
    },
}

pub fn mc_stats(ps: &PathSet, f: &Functional) -> McStats {
    let vals: Vec<C64> = (0..ps.n_paths)
        .map(|i| {
            let v = ps.v_terminal(i);
            let x = ps.log_s_terminal(i);
            match *f {
                Functional::Constant { value } => C64::new(value, 0.0),
                Functional::TerminalVMoment { p } => C64::new(v.powi(p), 0.0),
                Functional::TerminalS => C64::new(x.exp(), 0.0),
                Functional::CharFn { z } => C64::new(0.0, z * x).exp(),
                Functional::Call { strike } => C64::new((x.exp() - strike).max(0.0), 0.0),
            }
        })
        .collect();
    McStats::from_complex(&vals)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_params(lambda: f64, nu: f64) -> ModelParams {
        ModelParams::new(lambda, nu, -0.7, 1.0).unwrap()
    }

    #[test]
    fn dot_is_plain_sum() {
        let a: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let b = vec![1.0; 11];
        assert_eq!(dot(&a, &b), 55.0);
        assert_eq!(dot(&[], &[]), 0.0);
    }

    #[test]
    fn deterministic_variance_without_noise() {
        let grid = TimeGrid::with_horizon(1.0, 0.01).unwrap();
        let k = Kernel::fractional(1.0, 0.6).unwrap();
        let g = InputCurve::classical(0.04, 0.04, 0.3, &k).unwrap();
        let ps = simulate(
            &flat_params(0.0, 0.0),
            &g,
            &k,
            &grid,
            3,
            1,
            Storage::Full { increments: false },
        )
        .unwrap();
        let g_vals = g.sample(&grid, 0.0);
        for i in 0..3 {
            assert_eq!(ps.v_path(i).unwrap(), &g_vals[..]);
        }
    }

    #[test]
    fn forward_curve_at_zero_is_path_value() {
        let grid = TimeGrid::with_horizon(1.0, 0.01).unwrap();
        let k = Kernel::fractional(1.0, 0.6).unwrap();
        let g = InputCurve::classical(0.04, 0.04, 0.3, &k).unwrap();
        let ps = simulate(
            &flat_params(0.3, 0.3),
            &g,
            &k,
            &grid,
            4,
            9,
            Storage::Full { increments: true },
        )
        .unwrap();
        for i in 0..4 {
            let c = evolve_forward_values(&ps, i, 0.5, &g, &k, 10).unwrap();
            assert_eq!(c[0], ps.v_path(i).unwrap()[50]);
        }
        let c0 = evolve_forward_values(&ps, 0, 0.0, &g, &k, 10).unwrap();
        assert_eq!(c0, g.sample(&TimeGrid::new(0.01, 10).unwrap(), 0.0));
        let no_dw = simulate(
            &flat_params(0.3, 0.3),
            &g,
            &k,
            &grid,
            1,
            9,
            Storage::Full { increments: false },
        )
        .unwrap();
        assert!(matches!(
            evolve_forward_values(&no_dw, 0, 0.5, &g, &k, 10),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn binary_roundtrip() {
        let grid = TimeGrid::with_horizon(0.1, 0.01).unwrap();
        let k = Kernel::constant(1.0).unwrap();
        let ps = simulate(
            &flat_params(1.0, 0.3),
            &InputCurve::flat(0.04),
            &k,
            &grid,
            3,
            5,
            Storage::Full { increments: false },
        )
        .unwrap();
        let bytes = ps.to_bytes().unwrap();
        let (np, ns, dt, v, s) = PathSet::read_binary(&bytes).unwrap();
        assert_eq!((np, ns, dt), (3, 10, 0.01));
        assert_eq!(v, ps.v);
        assert_eq!(s, ps.log_s);
        let term = simulate(
            &flat_params(1.0, 0.3),
            &InputCurve::flat(0.04),
            &k,
            &grid,
            3,
            5,
            Storage::Terminal,
        )
        .unwrap();
        assert!(term.to_bytes().is_err());
        assert_eq!(term.v_terminal(2), ps.v_terminal(2));
    }

    #[test]
    fn constant_functional() {
        let grid = TimeGrid::with_horizon(0.1, 0.01).unwrap();
        let k = Kernel::constant(1.0).unwrap();
        let ps = simulate(
            &flat_params(1.0, 0.3),
            &InputCurve::flat(0.04),
            &k,
            &grid,
            10,
            5,
            Storage::Terminal,
        )
        .unwrap();
        let s = mc_stats(&ps, &Functional::Constant { value: 1.0 });
        assert_eq!(s.mean, C64::new(1.0, 0.0));
        assert_eq!(s.stderr, 0.0);
    }
}
