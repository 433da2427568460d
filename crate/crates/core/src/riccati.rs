//! Riccati–Volterra equations behind the Fourier–Laplace transform.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::{Kernel, KernelWeights};
use crate::lift::DiscretizedMeasure;
use crate::quad::{phi1, phi2};

/// Model constants `λ, ν, ρ, S_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub lambda: f64,
    pub nu: f64,
    pub rho: f64,
    #[serde(rename = "S0")]
    pub s0: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, nu: f64, rho: f64, s0: f64) -> Result<Self> {
        let p = Self {
            lambda,
            nu,
            rho,
            s0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::domain(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::domain(format!("nu must be >= 0, got {}", self.nu)));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::domain(format!(
                "rho must lie in [-1, 1], got {}",
                self.rho
            )));
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(Error::domain(format!("S0 must be > 0, got {}", self.s0)));
        }
        Ok(())
    }
}

/// Transform argument `(u, f)`: `E[exp(u_1 X_T + u_2 V_T + (f∗X)_T)]` with
/// `X = (log S, V)`. Empty `f1`/`f2` mean zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FLArgument {
    pub u1: C64,
    pub u2: C64,
    pub f1: Vec<C64>,
    pub f2: Vec<C64>,
    /// Solve even when the constraints below fail; blowup is then possible.
    pub allow_invalid: bool,
}

/// Which of the conditions `Re ψ_1 ∈ [0, 1]`, `Re u_2 ≤ 0`, `Re f_2 ≤ 0` hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Constraints {
    pub re_psi1_in_unit: bool,
    pub re_u2_nonpositive: bool,
    pub re_f2_nonpositive: bool,
}

impl Constraints {
    pub fn valid(&self) -> bool {
        self.re_psi1_in_unit && self.re_u2_nonpositive && self.re_f2_nonpositive
    }
}

impl FLArgument {
    pub fn new(u1: C64, u2: C64) -> Self {
        Self {
            u1,
            u2,
            f1: Vec::new(),
            f2: Vec::new(),
            allow_invalid: false,
        }
    }

    /// `u = (iz, 0)`, the characteristic function of `log S_T`.
    pub fn charfn(z: f64) -> Self {
        Self::new(C64::new(0.0, z), C64::new(0.0, 0.0))
    }

    pub fn with_f1(mut self, f1: Vec<C64>) -> Self {
        self.f1 = f1;
        self
    }

    pub fn with_f2(mut self, f2: Vec<C64>) -> Self {
        self.f2 = f2;
        self
    }

    pub fn allow_invalid(mut self, yes: bool) -> Self {
        self.allow_invalid = yes;
        self
    }

    fn f2_at(&self, j: usize) -> C64 {
        self.f2.get(j).copied().unwrap_or_default()
    }

    pub fn constraints(&self, grid: &TimeGrid) -> Constraints {
        let slack = 1e-12;
        let p1 = psi1(self, grid);
        Constraints {
            re_psi1_in_unit: p1.iter().all(|v| v.re >= -slack && v.re <= 1.0 + slack),
            re_u2_nonpositive: self.u2.re <= 0.0,
            re_f2_nonpositive: self.f2.iter().all(|v| v.re <= 0.0),
        }
    }

    fn check_shapes(&self, grid: &TimeGrid) -> Result<()> {
        for (name, f) in [("f1", &self.f1), ("f2", &self.f2)] {
            if !f.is_empty() && f.len() < grid.n_points() {
                return Err(Error::domain(format!(
                    "{name} has {} values, grid needs {}",
                    f.len(),
                    grid.n_points()
                )));
            }
        }
        Ok(())
    }
}

/// `ψ_1 = u_1 + ∫_0^t f_1` (trapezoid).
pub fn psi1(arg: &FLArgument, grid: &TimeGrid) -> Vec<C64> {
    let mut out = Vec::with_capacity(grid.n_points());
    let mut acc = arg.u1;
    out.push(acc);
    for j in 1..grid.n_points() {
        if !arg.f1.is_empty() {
            acc += 0.5 * grid.dt() * (arg.f1[j - 1] + arg.f1[j]);
        }
        out.push(acc);
    }
    out
}

/// `F(ψ_1, ψ_2) = f_2 + ½(ψ_1² − ψ_1) + (ρνψ_1 − λ)ψ_2 + ½ν²ψ_2²`.
pub fn riccati_rhs(psi1: C64, psi2: C64, f2: C64, p: &ModelParams) -> C64 {
    f2 + 0.5 * (psi1 * psi1 - psi1)
        + (p.rho * p.nu * psi1 - p.lambda) * psi2
        + 0.5 * p.nu * p.nu * psi2 * psi2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// One explicit predictor and one corrector per step.
    #[default]
    PredictorCorrector,
    /// Corrector iterated to a fixed point.
    Picard,
}

/// Solution of the Riccati–Volterra system on a grid.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub dt: f64,
    pub psi1: Vec<C64>,
    pub psi2: Vec<C64>,
    /// `F(ψ_1, ψ_2)` at the nodes.
    pub f_vals: Vec<C64>,
    pub scheme: Scheme,
    /// Total corrector evaluations.
    pub iterations: usize,
    /// `max_j |ψ_2 − u_2K − K∗F|` by re-convolution.
    pub residual: f64,
}

/// Relative a-posteriori residual bound for accepted solutions.
pub const RESIDUAL_TOL: f64 = 1e-1;
const PICARD_TOL: f64 = 1e-14;
const PICARD_MAX: usize = 100;

/// Solves `φ_j = forcing_j + (K∗G(φ))(t_j)` with `G` depending on the node.
fn volterra_solve<G>(
    forcing: &[C64],
    w: &KernelWeights,
    dt: f64,
    scheme: Scheme,
    g: G,
) -> Result<(Vec<C64>, Vec<C64>, usize)>
where
    G: Fn(usize, C64) -> C64,
{
    let n = forcing.len();
    let mut phi = Vec::with_capacity(n);
    let mut gv = Vec::with_capacity(n);
    let mut iterations = 0;
    phi.push(forcing[0]);
    gv.push(g(0, forcing[0]));
    if !(phi[0].is_finite() && gv[0].is_finite()) {
        return Err(Error::Blowup {
            last_valid_time: 0.0,
        });
    }
    for j in 1..n {
        let base = forcing[j] + w.history(&gv, j) + gv[j - 1] * w.far[1];
        let mut x = base + gv[j - 1] * w.near[1];
        let mut gx = g(j, x);
        let rounds = match scheme {
            Scheme::PredictorCorrector => 1,
            Scheme::Picard => PICARD_MAX,
        };
        for _ in 0..rounds {
            let next = base + gx * w.near[1];
            iterations += 1;
            let change = (next - x).norm();
            x = next;
            gx = g(j, x);
            if !(x.is_finite() && gx.is_finite()) || change <= PICARD_TOL * (1.0 + x.norm()) {
                break;
            }
        }
        if !(x.is_finite() && gx.is_finite()) {
            return Err(Error::Blowup {
                last_valid_time: (j - 1) as f64 * dt,
            });
        }
        phi.push(x);
        gv.push(gx);
    }
    Ok((phi, gv, iterations))
}

/// `max_j |φ_j − forcing_j − (K∗G)_j|` with `G` linear between the nodes.
fn reconvolution_residual(phi: &[C64], forcing: &[C64], gv: &[C64], w: &KernelWeights) -> f64 {
    (1..phi.len())
        .map(|j| {
            let conv = w.history(gv, j) + gv[j - 1] * w.far[1] + gv[j] * w.near[1];
            (phi[j] - forcing[j] - conv).norm()
        })
        .fold(0.0, f64::max)
}

fn check_residual(what: &str, residual: f64, scale: f64) -> Result<()> {
    if residual.is_finite() && residual <= RESIDUAL_TOL * (1.0 + scale) {
        Ok(())
    } else {
        Err(Error::numerical(
            format!("{what} residual above tolerance"),
            residual,
        ))
    }
}

/// `ψ_2 = u_2 K + K∗F(ψ_1, ψ_2)` on `grid`.
///
/// Singular kernels require `u_2 = 0` (the forcing `u_2 K` is not defined at
/// the origin). Unless `arg.allow_invalid` is set, the sign constraints on
/// `ψ_1, u_2, f_2` must hold.
pub fn solve_psi2(
    kernel: &Kernel,
    arg: &FLArgument,
    params: &ModelParams,
    grid: &TimeGrid,
    scheme: Scheme,
) -> Result<RiccatiSolution> {
    arg.check_shapes(grid)?;
    if !arg.allow_invalid && !arg.constraints(grid).valid() {
        return Err(Error::domain(
            "transform argument violates Re psi1 in [0,1], Re u2 <= 0, Re f2 <= 0",
        ));
    }
    if kernel.is_singular() && arg.u2 != C64::new(0.0, 0.0) {
        return Err(Error::domain(
            "u2 must be 0 for a kernel singular at the origin",
        ));
    }
    let p1 = psi1(arg, grid);
    let w = KernelWeights::for_grid(kernel, grid);
    let forcing: Vec<C64> = if arg.u2 == C64::new(0.0, 0.0) {
        vec![C64::new(0.0, 0.0); grid.n_points()]
    } else {
        (0..grid.n_points())
            .map(|j| arg.u2 * kernel.value(grid.time(j)))
            .collect()
    };
    let (psi2, f_vals, iterations) = volterra_solve(&forcing, &w, grid.dt(), scheme, |j, x| {
        riccati_rhs(p1[j], x, arg.f2_at(j), params)
    })?;
    let residual = reconvolution_residual(&psi2, &forcing, &f_vals, &w);
    let scale = psi2.iter().map(|v| v.norm()).fold(0.0, f64::max);
    check_residual("psi2", residual, scale)?;
    Ok(RiccatiSolution {
        dt: grid.dt(),
        psi1: p1,
        psi2,
        f_vals,
        scheme,
        iterations,
        residual,
    })
}

/// `ξ(s) = ⟨H_s, K⟩` on `grid`, where `h_test` holds `h(y)` at `y = 0, Δt, ...`
/// (same step as `grid`, zero beyond the table):
/// `ξ(s) = i∫h(y)K(s+y)dy + ∫_0^s K(s−u)(−λξ(u) + ½ν²ξ(u)²)du`.
pub fn solve_xi(
    h_test: &[f64],
    kernel: &Kernel,
    params: &ModelParams,
    grid: &TimeGrid,
) -> Result<Vec<C64>> {
    let n = grid.n_steps();
    let m = h_test.len().saturating_sub(1);
    let w = KernelWeights::new(kernel, grid.dt(), n + m.max(1));
    let forcing: Vec<C64> = (0..=n)
        .map(|j| {
            let s: f64 = (0..m)
                .map(|k| w.near[j + k + 1] * h_test[k] + w.far[j + k + 1] * h_test[k + 1])
                .sum();
            C64::new(0.0, s)
        })
        .collect();
    let (lambda, half_nu2) = (params.lambda, 0.5 * params.nu * params.nu);
    let g = |_: usize, x: C64| -lambda * x + half_nu2 * x * x;
    let (xi, gv, _) = volterra_solve(&forcing, &w, grid.dt(), Scheme::PredictorCorrector, g)?;
    let residual = reconvolution_residual(&xi, &forcing, &gv, &w);
    let scale = xi.iter().map(|v| v.norm()).fold(0.0, f64::max);
    check_residual("xi", residual, scale)?;
    Ok(xi)
}

/// Solution of the lifted system `∂_t χ(t, x_i) = −x_i χ + F(ψ_1, Σ c_i χ)`.
#[derive(Debug, Clone)]
pub struct LiftedRiccati {
    /// `χ_2(t_j, x_i)`, row `j`, column `i`.
    pub chi2: Vec<Vec<C64>>,
    /// `Σ_i c_i χ_2(·, x_i)`.
    pub psi2: Vec<C64>,
    pub psi1: Vec<C64>,
    pub f_vals: Vec<C64>,
}

/// Integrates the lifted Riccati system with an exponential integrator: an
/// exponential-Euler predictor and a corrector with `F` linear over the step.
pub fn solve_chi2(
    dm: &DiscretizedMeasure,
    arg: &FLArgument,
    params: &ModelParams,
    grid: &TimeGrid,
) -> Result<LiftedRiccati> {
    arg.check_shapes(grid)?;
    if !arg.allow_invalid && !arg.constraints(grid).valid() {
        return Err(Error::domain(
            "transform argument violates Re psi1 in [0,1], Re u2 <= 0, Re f2 <= 0",
        ));
    }
    let dt = grid.dt();
    let p1 = psi1(arg, grid);
    let x = dm.nodes();
    let c = dm.weights();
    let decay: Vec<f64> = x.iter().map(|&x| (-x * dt).exp()).collect();
    let w1: Vec<f64> = x.iter().map(|&x| dt * phi1(x * dt)).collect();
    let w2: Vec<f64> = x.iter().map(|&x| dt * phi2(x * dt)).collect();
    let aggregate = |chi: &[C64]| -> C64 { chi.iter().zip(c).map(|(v, c)| v * c).sum() };

    let mut chi = vec![arg.u2; x.len()];
    let mut psi2 = vec![aggregate(&chi)];
    let mut f_vals = vec![riccati_rhs(p1[0], psi2[0], arg.f2_at(0), params)];
    let mut rows = vec![chi.clone()];
    let mut pred = vec![C64::new(0.0, 0.0); x.len()];
    for j in 1..grid.n_points() {
        let fn_ = f_vals[j - 1];
        for i in 0..x.len() {
            pred[i] = decay[i] * chi[i] + w1[i] * fn_;
        }
        let fp = riccati_rhs(p1[j], aggregate(&pred), arg.f2_at(j), params);
        for i in 0..x.len() {
            chi[i] = decay[i] * chi[i] + w1[i] * fn_ + w2[i] * (fp - fn_);
        }
        let s = aggregate(&chi);
        let f = riccati_rhs(p1[j], s, arg.f2_at(j), params);
        if !(s.is_finite() && f.is_finite()) {
            return Err(Error::Blowup {
                last_valid_time: grid.time(j - 1),
            });
        }
        psi2.push(s);
        f_vals.push(f);
        rows.push(chi.clone());
    }
    Ok(LiftedRiccati {
        chi2: rows,
        psi2,
        psi1: p1,
        f_vals,
    })
}
