//! Convolution kernels, their Laplace measures and resolvents of the first kind.
//!
//! Three families are supported: fractional `c t^{α-1}/Γ(α)`, gamma
//! `c e^{-λt} t^{α-1}/Γ(α)` and finite exponential sums `Σ c_i e^{-x_i t}`.
//! All kernel integrals used by the solvers go through [`Kernel::integral`]
//! and [`Kernel::linear_weights`], which integrate the `t^{α-1}` singularity
//! exactly instead of sampling it.

mod measure;
mod resolvent;
mod weights;

pub use measure::{conv_measure_fun, Density, GridMeasure};
pub use resolvent::{
    reconstruct_shifted_kernel, resolvent_first_kind, resolvent_residual, shifted_resolvent_conv,
    shifted_resolvent_values, Reconstruction, ShiftedResolvent,
};
pub use weights::{conv_kernel_fun, KernelWeights};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::quad;

/// Numerical tolerances shared by the kernel diagnostics.
pub mod tol {
    /// `‖K∗L − 1‖_∞` bound for closed-form resolvents.
    pub const RESOLVENT_CLOSED: f64 = 1e-8;
    /// `‖K∗L − 1‖_∞` bound for deconvolved resolvents.
    pub const RESOLVENT_DECONVOLVED: f64 = 1e-6;
    /// Relative slack for monotonicity and range checks.
    pub const MONOTONE_SLACK: f64 = 1e-10;
    /// Allowed shortfall of the fitted Hölder exponent below the stored one.
    pub const GAMMA_FIT_SLACK: f64 = 0.1;
}

/// One term `weight * e^{-rate t}` of an exponential-sum kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub weight: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `c t^{α-1} / Γ(α)`; `α = 1` is the constant kernel `c`.
    Fractional { c: f64, alpha: f64 },
    /// `c e^{-λ t} t^{α-1} / Γ(α)`.
    Gamma { c: f64, alpha: f64, lambda: f64 },
    /// `Σ c_i e^{-x_i t}`.
    ExpSum { terms: Vec<ExpTerm> },
}

fn check_alpha(alpha: f64, allow_one: bool) -> Result<()> {
    let ok = (alpha > 0.5 && alpha < 1.0) || (allow_one && alpha == 1.0);
    if ok {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "alpha must lie in (1/2, 1){}, got {alpha}",
            if allow_one { " or equal 1" } else { "" }
        )))
    }
}

impl Kernel {
    pub fn fractional(c: f64, alpha: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::domain(format!(
                "kernel scale c must be positive, got {c}"
            )));
        }
        check_alpha(alpha, true)?;
        Ok(Kernel::Fractional { c, alpha })
    }

    pub fn gamma(c: f64, alpha: f64, lambda: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::domain(format!(
                "kernel scale c must be positive, got {c}"
            )));
        }
        check_alpha(alpha, false)?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::domain(format!(
                "gamma kernel rate must be >= 0, got {lambda}"
            )));
        }
        Ok(Kernel::Gamma { c, alpha, lambda })
    }

    /// Exponential sum from `(weight, rate)` pairs.
    pub fn exp_sum(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::domain("exponential sum needs at least one term"));
        }
        let mut terms = Vec::with_capacity(pairs.len());
        for &(weight, rate) in pairs {
            if !(weight >= 0.0) || !(rate >= 0.0) || !weight.is_finite() || !rate.is_finite() {
                return Err(Error::domain(format!(
                    "exponential terms need c_i >= 0 and x_i >= 0, got ({weight}, {rate})"
                )));
            }
            terms.push(ExpTerm { weight, rate });
        }
        if terms.iter().all(|t| t.weight == 0.0) {
            return Err(Error::domain("exponential sum has all weights zero"));
        }
        Ok(Kernel::ExpSum { terms })
    }

    /// The constant kernel `K ≡ c` (classical Heston when `c = 1`).
    pub fn constant(c: f64) -> Result<Self> {
        Self::exp_sum(&[(c, 0.0)])
    }

    /// True when `K(0+) = ∞`.
    pub fn is_singular(&self) -> bool {
        match self {
            Kernel::Fractional { alpha, .. } => *alpha < 1.0,
            Kernel::Gamma { .. } => true,
            Kernel::ExpSum { .. } => false,
        }
    }

    /// Hölder exponent γ in `∫_0^h K² = O(h^γ)`.
    pub fn holder_gamma(&self) -> f64 {
        match self {
            Kernel::Fractional { alpha, .. } | Kernel::Gamma { alpha, .. } => {
                if *alpha == 1.0 {
                    1.0
                } else {
                    2.0 * alpha - 1.0
                }
            }
            Kernel::ExpSum { .. } => 1.0,
        }
    }

    /// `K(t)`. Errors for `t = 0` on singular kernels and for negative `t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::domain(format!("kernel evaluated at t = {t}")));
        }
        if t == 0.0 && self.is_singular() {
            return Err(Error::domain(
                "singular kernel evaluated at t = 0; use cell-averaged weights",
            ));
        }
        Ok(self.value(t))
    }

    /// `K(t)` without domain checks (`+∞` at 0 for singular kernels).
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Kernel::Fractional { c, alpha } => {
                if *alpha == 1.0 {
                    *c
                } else {
                    c * t.powf(alpha - 1.0) / gamma(*alpha)
                }
            }
            Kernel::Gamma { c, alpha, lambda } => {
                c * (-lambda * t).exp() * t.powf(alpha - 1.0) / gamma(*alpha)
            }
            Kernel::ExpSum { terms } => terms.iter().map(|e| e.weight * (-e.rate * t).exp()).sum(),
        }
    }

    /// `K'(t)` for `t > 0`.
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Kernel::Fractional { c, alpha } => {
                if *alpha == 1.0 {
                    0.0
                } else {
                    c * (alpha - 1.0) * t.powf(alpha - 2.0) / gamma(*alpha)
                }
            }
            Kernel::Gamma { alpha, lambda, .. } => self.value(t) * ((alpha - 1.0) / t - lambda),
            Kernel::ExpSum { terms } => terms
                .iter()
                .map(|e| -e.weight * e.rate * (-e.rate * t).exp())
                .sum(),
        }
    }

    /// `∫_a^b K(s) ds` for `0 <= a <= b`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self {
            Kernel::Fractional { c, alpha } => {
                if *alpha == 1.0 {
                    c * (b - a)
                } else {
                    c * (b.powf(*alpha) - a.powf(*alpha)) / gamma(alpha + 1.0)
                }
            }
            Kernel::Gamma { c, alpha, lambda } => {
                let norm = c / gamma(*alpha);
                quad::tanh_sinh(a, b, |dl, _| {
                    let s = a + dl;
                    (-lambda * s).exp() * s.powf(alpha - 1.0)
                }) * norm
            }
            Kernel::ExpSum { terms } => terms
                .iter()
                .map(|e| e.weight * (-e.rate * a).exp() * (b - a) * quad::phi1(e.rate * (b - a)))
                .sum(),
        }
    }

    /// Product-integration weights on `[a, b]` for a linear integrand:
    /// returns `(∫ K(r)(b−r)/w dr, ∫ K(r)(r−a)/w dr)`, `w = b − a`, i.e. the
    /// weights of the integrand's values at `a` and at `b`.
    pub fn linear_weights(&self, a: f64, b: f64) -> (f64, f64) {
        let w = b - a;
        if w <= 0.0 {
            return (0.0, 0.0);
        }
        match self {
            Kernel::ExpSum { terms } => {
                let mut wa = 0.0;
                let mut wb = 0.0;
                for e in terms {
                    let z = e.rate * w;
                    let scale = e.weight * (-e.rate * a).exp() * w;
                    let p2 = quad::phi2(z);
                    wa += scale * p2;
                    wb += scale * (quad::phi1(z) - p2);
                }
                (wa, wb)
            }
            Kernel::Fractional { c, alpha } if *alpha == 1.0 => (0.5 * c * w, 0.5 * c * w),
            Kernel::Fractional { c, alpha } if a == 0.0 => {
                // ∫_0^w r^{α-1}(w-r)/w = w^α/(α(α+1)), ∫_0^w r^α/w = w^α/(α+1)
                let g = gamma(*alpha);
                let wa = c * w.powf(*alpha) / (g * alpha * (alpha + 1.0));
                let wb = c * w.powf(*alpha) / (g * (alpha + 1.0));
                (wa, wb)
            }
            _ => {
                if a >= w {
                    gl_linear(|r| self.value(r), a, b)
                } else {
                    let wa = quad::tanh_sinh(a, b, |dl, dr| self.value(a + dl) * dr / w);
                    let wb = quad::tanh_sinh(a, b, |dl, _| self.value(a + dl) * dl / w);
                    (wa, wb)
                }
            }
        }
    }

    /// Laplace measure `μ` with `K(t) = ∫ e^{-xt} μ(dx)`.
    pub fn laplace_measure(&self) -> LaplaceMeasure {
        match self {
            Kernel::Fractional { c, alpha } if *alpha == 1.0 => {
                LaplaceMeasure::Atoms(vec![(0.0, *c)])
            }
            Kernel::Fractional { c, alpha } => LaplaceMeasure::PowerDensity {
                coef: c / (gamma(*alpha) * gamma(1.0 - alpha)),
                alpha: *alpha,
                shift: 0.0,
            },
            Kernel::Gamma { c, alpha, lambda } => LaplaceMeasure::PowerDensity {
                coef: c / (gamma(*alpha) * gamma(1.0 - alpha)),
                alpha: *alpha,
                shift: *lambda,
            },
            Kernel::ExpSum { terms } => {
                LaplaceMeasure::Atoms(terms.iter().map(|e| (e.rate, e.weight)).collect())
            }
        }
    }

    /// Log-log fit of `∫_0^h K²` and `∫_0^T (K(t+h) − K(t))² dt` against `h`
    /// over a dyadic ladder.
    pub fn gamma_check(&self, grid: &TimeGrid) -> GammaCheck {
        let horizon = grid.horizon();
        let hs: Vec<f64> = (0..8)
            .map(|k| grid.dt() * f64::powi(2.0, k))
            .filter(|&h| h < horizon)
            .collect();
        let small: Vec<f64> = hs
            .iter()
            .map(|&h| quad::tanh_sinh(0.0, h, |dl, _| self.value(dl).powi(2)))
            .collect();
        let shift: Vec<f64> = hs
            .iter()
            .map(|&h| {
                let f = |t: f64| (self.value(t + h) - self.value(t)).powi(2);
                // split at h so the near-singular piece gets its own nodes
                quad::tanh_sinh(0.0, h.min(horizon), |dl, _| f(dl))
                    + quad::tanh_sinh(h.min(horizon), horizon, |dl, _| f(h + dl))
            })
            .collect();
        let slope_small = loglog_slope(&hs, &small);
        let slope_shift = loglog_slope(&hs, &shift);
        let gamma_fit = slope_small.min(slope_shift);
        let stored = self.holder_gamma();
        GammaCheck {
            gamma_fit,
            slope_small,
            slope_shift,
            stored_gamma: stored,
            pass: gamma_fit >= stored - tol::GAMMA_FIT_SLACK,
        }
    }
}

fn gl_linear(f: impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    use std::sync::OnceLock;
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (x, w) = GL.get_or_init(|| quad::gauss_legendre(16));
    let half = 0.5 * (b - a);
    let mut wa = 0.0;
    let mut wb = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        let frac = 0.5 * (1.0 + xi);
        let v = f(a + (b - a) * frac) * wi * half;
        wa += v * (1.0 - frac);
        wb += v * frac;
    }
    (wa, wb)
}

/// Least-squares slope of `log y` against `log x`, ignoring nonpositive `y`.
pub(crate) fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &y)| y > 0.0 && y.is_finite())
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Result of [`Kernel::gamma_check`].
#[derive(Debug, Clone, Serialize)]
pub struct GammaCheck {
    pub gamma_fit: f64,
    pub slope_small: f64,
    pub slope_shift: f64,
    pub stored_gamma: f64,
    pub pass: bool,
}

/// Laplace measure of a kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum LaplaceMeasure {
    /// `coef (x − shift)^{-α} dx` on `(shift, ∞)`.
    PowerDensity { coef: f64, alpha: f64, shift: f64 },
    /// `Σ mass δ_location`.
    Atoms(Vec<(f64, f64)>),
}

impl LaplaceMeasure {
    /// `μ([lo, hi])`.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        match self {
            LaplaceMeasure::PowerDensity { coef, alpha, shift } => {
                let a = (lo - shift).max(0.0);
                let b = (hi - shift).max(0.0);
                coef * (b.powf(1.0 - alpha) - a.powf(1.0 - alpha)) / (1.0 - alpha)
            }
            LaplaceMeasure::Atoms(atoms) => atoms
                .iter()
                .filter(|(x, _)| *x >= lo && *x <= hi)
                .map(|(_, m)| m)
                .sum(),
        }
    }

    /// `∫_{[lo, hi]} x μ(dx)`.
    pub fn first_moment(&self, lo: f64, hi: f64) -> f64 {
        match self {
            LaplaceMeasure::PowerDensity { coef, alpha, shift } => {
                let a = (lo - shift).max(0.0);
                let b = (hi - shift).max(0.0);
                // ∫ (y + shift) y^{-α} dy
                coef * ((b.powf(2.0 - alpha) - a.powf(2.0 - alpha)) / (2.0 - alpha)
                    + shift * (b.powf(1.0 - alpha) - a.powf(1.0 - alpha)) / (1.0 - alpha))
            }
            LaplaceMeasure::Atoms(atoms) => atoms
                .iter()
                .filter(|(x, _)| *x >= lo && *x <= hi)
                .map(|(x, m)| x * m)
                .sum(),
        }
    }

    /// `∫ e^{-xt} μ(dx)` by quadrature (for atoms: exact sum).
    pub fn laplace(&self, t: f64) -> f64 {
        match self {
            LaplaceMeasure::PowerDensity { coef, alpha, shift } => {
                let scale = 1.0 / t.max(1e-12);
                coef * (-shift * t).exp()
                    * quad::semi_infinite(scale, |y| (-y * t).exp() * y.powf(-alpha))
            }
            LaplaceMeasure::Atoms(atoms) => atoms.iter().map(|(x, m)| m * (-x * t).exp()).sum(),
        }
    }
}

/// Kernel section of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<[f64; 2]>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Fractional,
    Gamma,
    Expsum,
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel> {
        let need_alpha = || {
            self.alpha
                .ok_or_else(|| Error::Config("kernel: missing `alpha`".into()))
        };
        let k = match self.kind {
            KernelKind::Fractional => Kernel::fractional(self.c, need_alpha()?),
            KernelKind::Gamma => Kernel::gamma(self.c, need_alpha()?, self.lambda_k.unwrap_or(0.0)),
            KernelKind::Expsum => {
                let terms = self
                    .terms
                    .as_ref()
                    .ok_or_else(|| Error::Config("kernel: missing `terms`".into()))?;
                let pairs: Vec<(f64, f64)> = terms.iter().map(|t| (t[0], t[1])).collect();
                Kernel::exp_sum(&pairs)
            }
        };
        k.map_err(|e| Error::Config(format!("kernel: {e}")))
    }
}
