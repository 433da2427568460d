//! Fourier–Laplace transforms, the forward-curve characteristic functional and
//! Fourier pricing of European calls.

use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::curves::InputCurve;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::Kernel;
use crate::lift::DiscretizedMeasure;
use crate::quad;
use crate::riccati::{
    solve_chi2, solve_psi2, solve_xi, FLArgument, ModelParams, RiccatiSolution, Scheme,
};

/// `exp(log_s_part + u2_part + integral_part)` with the parts kept apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformValue {
    pub value: C64,
    /// `ψ_1(T) log S_0`.
    pub log_s_part: C64,
    /// `u_2 g_0(T)`.
    pub u2_part: C64,
    /// `∫_0^T F(ψ_1, ψ_2)(s) g_0(T − s) ds`.
    pub integral_part: C64,
}

impl TransformValue {
    fn assemble(log_s_part: C64, u2_part: C64, integral_part: C64) -> Self {
        Self {
            value: (log_s_part + u2_part + integral_part).exp(),
            log_s_part,
            u2_part,
            integral_part,
        }
    }
}

/// A solved Riccati system that can be paired with many curves and spot values.
#[derive(Debug, Clone)]
pub struct TransformSolver {
    pub solution: RiccatiSolution,
    u2: C64,
}

impl TransformSolver {
    pub fn new(
        kernel: &Kernel,
        params: &ModelParams,
        arg: &FLArgument,
        grid: &TimeGrid,
        scheme: Scheme,
    ) -> Result<Self> {
        Ok(Self {
            solution: solve_psi2(kernel, arg, params, grid, scheme)?,
            u2: arg.u2,
        })
    }

    /// Transform for a curve sampled on the solver grid (`g[j] = g(t_j)`).
    pub fn evaluate(&self, g: &[f64], log_s: f64) -> TransformValue {
        let s = &self.solution;
        pair_with_curve(&s.psi1, &s.f_vals, s.dt, self.u2, g, log_s)
    }
}

fn pair_with_curve(
    psi1: &[C64],
    f: &[C64],
    dt: f64,
    u2: C64,
    g: &[f64],
    log_s: f64,
) -> TransformValue {
    let n = f.len() - 1;
    let mut integral = C64::new(0.0, 0.0);
    for j in 0..=n {
        let w = if j == 0 || j == n { 0.5 } else { 1.0 };
        integral += f[j] * (w * g[n - j]);
    }
    integral *= dt;
    TransformValue::assemble(psi1[n] * log_s, u2 * g[n], integral)
}

/// [`fourier_laplace`] through the lifted Riccati system on the atoms of `dm`.
pub fn lift_transform(
    dm: &DiscretizedMeasure,
    params: &ModelParams,
    g0: &InputCurve,
    arg: &FLArgument,
    grid: &TimeGrid,
) -> Result<TransformValue> {
    let s = solve_chi2(dm, arg, params, grid)?;
    let g = g0.sample(grid, 0.0);
    Ok(pair_with_curve(
        &s.psi1,
        &s.f_vals,
        grid.dt(),
        arg.u2,
        &g,
        params.s0.ln(),
    ))
}

/// `E[exp(u_1 log S_T + u_2 V_T + (f∗X)_T)]` for a horizon `T = grid.horizon()`.
pub fn fourier_laplace(
    kernel: &Kernel,
    params: &ModelParams,
    g0: &InputCurve,
    arg: &FLArgument,
    grid: &TimeGrid,
    scheme: Scheme,
) -> Result<TransformValue> {
    conditional_transform(kernel, params, g0, params.s0, arg, grid, scheme)
}

/// The same transform conditional on time `t`, with the curve `g_t`, spot `S_t`
/// and remaining horizon `T − t = grid.horizon()`.
pub fn conditional_transform(
    kernel: &Kernel,
    params: &ModelParams,
    g_t: &InputCurve,
    s_t: f64,
    arg: &FLArgument,
    grid: &TimeGrid,
    scheme: Scheme,
) -> Result<TransformValue> {
    if !(s_t > 0.0) {
        return Err(Error::domain(format!("spot must be > 0, got {s_t}")));
    }
    let solver = TransformSolver::new(kernel, params, arg, grid, scheme)?;
    Ok(solver.evaluate(&g_t.sample(grid, 0.0), s_t.ln()))
}

/// `E[exp(i⟨g_t, h⟩)] = exp(⟨H_t, g_0⟩)` with `t = grid.horizon()` and
/// `h_test[k] = h(kΔt)` (zero beyond the table). Returns the exponent
/// `⟨H_t, g_0⟩` and its exponential.
pub fn char_functional_g(
    h_test: &[f64],
    kernel: &Kernel,
    params: &ModelParams,
    g0: &InputCurve,
    grid: &TimeGrid,
) -> Result<(C64, C64)> {
    let dt = grid.dt();
    let n = grid.n_steps();
    let t = grid.horizon();
    let xi = solve_xi(h_test, kernel, params, grid)?;
    let m = h_test.len().saturating_sub(1);
    let trap = |k: usize, len: usize| if k == 0 || k == len { 0.5 } else { 1.0 };
    let transport: f64 = (0..=m)
        .map(|k| trap(k, m) * h_test[k] * g0.eval(t + k as f64 * dt))
        .sum::<f64>()
        * dt;
    let half_nu2 = 0.5 * params.nu * params.nu;
    let mut memory = C64::new(0.0, 0.0);
    for (j, x) in xi.iter().enumerate() {
        let gx = -params.lambda * x + half_nu2 * x * x;
        memory += gx * (trap(j, n) * g0.eval(grid.time(n - j)));
    }
    memory *= dt;
    let exponent = C64::new(0.0, transport) + memory;
    Ok((exponent, exponent.exp()))
}

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Black–Scholes call with zero rates.
pub fn black_scholes_call(s0: f64, strike: f64, t: f64, sigma: f64) -> f64 {
    let sd = sigma * t.sqrt();
    if sd <= 0.0 {
        return (s0 - strike).max(0.0);
    }
    let d1 = ((s0 / strike).ln() + 0.5 * sd * sd) / sd;
    s0 * norm_cdf(d1) - strike * norm_cdf(d1 - sd)
}

/// Black–Scholes implied volatility by bisection on `[1e-8, 10]`; `None` when
/// the price lies outside the no-arbitrage band.
pub fn implied_vol(price: f64, s0: f64, strike: f64, t: f64) -> Option<f64> {
    let (mut lo, mut hi) = (1e-8, 10.0);
    let f = |s: f64| black_scholes_call(s0, strike, t, s) - price;
    if !(f(lo) <= 0.0 && f(hi) >= 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Fourier pricing controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PricingOptions {
    /// Contour shift `a ∈ (0, 1)`: `u_1 = a − iz`.
    pub damping: f64,
    /// Truncate once a whole panel has `|integrand| <` this.
    pub truncation: f64,
    /// Width of the uniform panels after the graded start.
    pub panel_width: f64,
    /// Give up beyond this `z`.
    pub max_z: f64,
    pub scheme: Scheme,
}

impl Default for PricingOptions {
    fn default() -> Self {
        Self {
            damping: 0.75,
            truncation: 1e-12,
            panel_width: 2.0,
            max_z: 2000.0,
            scheme: Scheme::PredictorCorrector,
        }
    }
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| quad::gauss_legendre(16))
}

/// Characteristic-function samples on Gauss–Legendre panels along the contour
/// `w = z + ia`, shared by every strike.
#[derive(Debug, Clone)]
pub struct Pricer {
    pub s0: f64,
    pub horizon: f64,
    pub damping: f64,
    /// `(z, quadrature weight, E[exp((a − iz) log S_T)])`.
    nodes: Vec<(f64, f64, C64)>,
}

impl Pricer {
    /// Samples the transform until a whole panel of the integrand falls below
    /// the truncation level for every strike in `strikes`.
    pub fn new(
        kernel: &Kernel,
        params: &ModelParams,
        g0: &InputCurve,
        grid: &TimeGrid,
        strikes: &[f64],
        opts: &PricingOptions,
    ) -> Result<Self> {
        let a = opts.damping;
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::domain(format!(
                "damping must lie in (0, 1), got {a}"
            )));
        }
        if strikes.is_empty() || strikes.iter().any(|k| !(*k > 0.0)) {
            return Err(Error::domain("strikes must be > 0"));
        }
        let g = g0.sample(grid, 0.0);
        let log_s0 = params.s0.ln();
        let strike_scale = strikes.iter().map(|k| k.powf(1.0 - a)).fold(0.0, f64::max);
        let (x, w) = gl16();
        let mut edges = vec![0.0, 0.125, 0.25, 0.5, 1.0, 2.0];
        let mut nodes = Vec::new();
        let mut panel = 0;
        loop {
            if panel + 1 >= edges.len() {
                let last = *edges.last().unwrap();
                edges.push(last + opts.panel_width);
            }
            let (lo, hi) = (edges[panel], edges[panel + 1]);
            if lo > opts.max_z {
                return Err(Error::domain(format!(
                    "Fourier inversion did not converge below z = {}; try another damping",
                    opts.max_z
                )));
            }
            let half = 0.5 * (hi - lo);
            let pts: Vec<(f64, f64)> = x
                .iter()
                .zip(w)
                .map(|(xi, wi)| (lo + half * (1.0 + xi), half * wi))
                .collect();
            let vals: Vec<Result<C64>> = pts
                .par_iter()
                .map(|&(z, _)| {
                    let arg = FLArgument::new(C64::new(a, -z), C64::new(0.0, 0.0));
                    let s = TransformSolver::new(kernel, params, &arg, grid, opts.scheme)?;
                    Ok(s.evaluate(&g, log_s0).value)
                })
                .collect();
            let mut panel_max = 0.0_f64;
            for (&(z, wz), v) in pts.iter().zip(vals) {
                let v = v?;
                let wc = C64::new(z, a);
                let mag = strike_scale * v.norm()
                    / (wc * wc - C64::i() * wc).norm()
                    / std::f64::consts::PI;
                panel_max = panel_max.max(mag);
                nodes.push((z, wz, v));
            }
            panel += 1;
            if panel >= 5 && panel_max < opts.truncation * params.s0.max(1.0) {
                break;
            }
        }
        Ok(Self {
            s0: params.s0,
            horizon: grid.horizon(),
            damping: a,
            nodes,
        })
    }

    /// `(1/π)∫_0^∞ Re[K^{1+iw} φ(−w)/(w² − iw)] dz`.
    fn contour_integral(&self, strike: f64) -> f64 {
        let a = self.damping;
        let lk = strike.ln();
        let sum: f64 = self
            .nodes
            .iter()
            .map(|&(z, wz, cf)| {
                let wc = C64::new(z, a);
                let kpow = (C64::new(1.0 - a, z) * lk).exp();
                (kpow * cf / (wc * wc - C64::i() * wc)).re * wz
            })
            .sum();
        sum / std::f64::consts::PI
    }

    /// Call price `S_0 − (1/π)∫...`.
    pub fn call(&self, strike: f64) -> f64 {
        self.s0 - self.contour_integral(strike)
    }

    /// Put price `K − (1/π)∫...`, the same contour integral with the residue
    /// at `w = 0` in place of the one at `w = i`.
    pub fn put(&self, strike: f64) -> f64 {
        strike - self.contour_integral(strike)
    }

    pub fn n_evaluations(&self) -> usize {
        self.nodes.len()
    }

    /// Call price with its Black–Scholes implied volatility.
    pub fn quote(&self, strike: f64) -> Quote {
        let price = self.call(strike);
        Quote {
            strike,
            price,
            implied_vol: implied_vol(price, self.s0, strike, self.horizon),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quote {
    pub strike: f64,
    pub price: f64,
    pub implied_vol: Option<f64>,
}

/// Price and implied volatility of a single call.
pub fn call_price(
    kernel: &Kernel,
    params: &ModelParams,
    g0: &InputCurve,
    grid: &TimeGrid,
    strike: f64,
    opts: &PricingOptions,
) -> Result<Quote> {
    Ok(Pricer::new(kernel, params, g0, grid, &[strike], opts)?.quote(strike))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_argument_is_one() {
        let grid = TimeGrid::with_horizon(1.0, 0.01).unwrap();
        let k = Kernel::fractional(1.0, 0.6).unwrap();
        let p = ModelParams::new(0.3, 0.3, -0.7, 1.3).unwrap();
        let g = InputCurve::classical(0.04, 0.04, 0.3, &k).unwrap();
        let v = fourier_laplace(
            &k,
            &p,
            &g,
            &FLArgument::charfn(0.0),
            &grid,
            Scheme::default(),
        )
        .unwrap();
        assert_eq!(v.value, C64::new(1.0, 0.0));
    }

    #[test]
    fn short_horizon_limit() {
        let grid = TimeGrid::new(1e-6, 1).unwrap();
        let k = Kernel::constant(1.0).unwrap();
        let p = ModelParams::new(2.0, 0.3, -0.7, 1.0).unwrap();
        let arg = FLArgument::new(C64::new(0.0, 1.0), C64::new(-0.5, 0.0));
        let g = InputCurve::flat(0.04);
        let v = conditional_transform(&k, &p, &g, 1.2, &arg, &grid, Scheme::default()).unwrap();
        let want = (C64::new(0.0, 1.0) * 1.2f64.ln() - 0.5 * 0.04).exp();
        assert!((v.value - want).norm() < 1e-6);
    }

    #[test]
    fn black_scholes_roundtrip() {
        let c = black_scholes_call(1.0, 1.1, 0.5, 0.25);
        let iv = implied_vol(c, 1.0, 1.1, 0.5).unwrap();
        assert!((iv - 0.25).abs() < 1e-10);
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!(implied_vol(2.0, 1.0, 1.0, 1.0).is_none());
    }

    #[test]
    fn transport_only_char_functional() {
        let grid = TimeGrid::with_horizon(0.3, 1e-3).unwrap();
        let k = Kernel::exp_sum(&[(1.0, 1.0)]).unwrap();
        let p = ModelParams::new(0.0, 0.0, 0.0, 1.0).unwrap();
        let g = InputCurve::flat(0.04);
        let h = vec![1.0; 101];
        let (e, _) = char_functional_g(&h, &k, &p, &g, &grid).unwrap();
        assert!((e - C64::new(0.0, 0.04 * 0.1)).norm() < 1e-14);
        let (e, v) = char_functional_g(&[0.0; 5], &k, &p, &g, &grid).unwrap();
        assert_eq!(e, C64::new(0.0, 0.0));
        assert_eq!(v, C64::new(1.0, 0.0));
    }
}
