use statrs::function::gamma::{gamma, gamma_lr};

use super::Kernel;
use crate::grid::TimeGrid;
use crate::quad;

/// Absolutely continuous part of a [`GridMeasure`].
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    /// `coef · s^{-alpha}`.
    Power { coef: f64, alpha: f64 },
    /// Resolvent density of the gamma kernel `c e^{-λt} t^{α−1}/Γ(α)`:
    /// `(e^{-λs} s^{-α}/Γ(1−α) + λ^α P(1−α, λs)) / c`.
    GammaResolvent { c: f64, alpha: f64, lambda: f64 },
    /// Constant on each grid cell `[t_k, t_{k+1})`.
    Cells(Vec<f64>),
    /// Linear between grid nodes.
    Nodes(Vec<f64>),
}

impl Density {
    fn is_closed_form(&self) -> bool {
        matches!(self, Density::Power { .. } | Density::GammaResolvent { .. })
    }

    /// Exponent `β` of the `s^{-β}` singularity at zero.
    pub fn left_exponent(&self) -> f64 {
        match self {
            Density::Power { alpha, .. } | Density::GammaResolvent { alpha, .. } => *alpha,
            _ => 0.0,
        }
    }

    /// `s^β ρ(s)` with `β` the [`left_exponent`](Self::left_exponent); finite at zero.
    pub fn regular_at(&self, s: f64, dt: f64) -> f64 {
        match self {
            Density::Power { coef, .. } => *coef,
            Density::GammaResolvent { c, alpha, lambda } => {
                let head = (-lambda * s).exp() / gamma(1.0 - alpha);
                let tail = if *lambda > 0.0 && s > 0.0 {
                    (lambda * s).powf(*alpha) * gamma_lr(1.0 - alpha, lambda * s)
                } else {
                    0.0
                };
                (head + tail) / c
            }
            _ => self.at(s, dt),
        }
    }

    /// Pointwise value at `s > 0`.
    pub fn at(&self, s: f64, dt: f64) -> f64 {
        match self {
            Density::Power { coef, alpha } => coef * s.powf(-alpha),
            Density::GammaResolvent { c, alpha, lambda } => {
                let head = (-lambda * s).exp() * s.powf(-alpha) / gamma(1.0 - alpha);
                let tail = if *lambda > 0.0 {
                    lambda.powf(*alpha) * gamma_lr(1.0 - alpha, lambda * s)
                } else {
                    0.0
                };
                (head + tail) / c
            }
            Density::Cells(v) => {
                let k = (s / dt).floor() as usize;
                v.get(k).copied().unwrap_or(0.0)
            }
            Density::Nodes(v) => {
                let x = s / dt;
                let k = x.floor() as usize;
                if k + 1 >= v.len() {
                    return if k + 1 == v.len() && x == k as f64 {
                        v[k]
                    } else {
                        0.0
                    };
                }
                let frac = x - k as f64;
                v[k] * (1.0 - frac) + v[k + 1] * frac
            }
        }
    }

    /// `(∫_cell ρ, ∫_cell ρ(s) (s − t_k)/Δt ds)` for cell `k`.
    fn cell_moments(&self, k: usize, dt: f64) -> (f64, f64) {
        let a = k as f64 * dt;
        let b = a + dt;
        match self {
            Density::Power { coef, alpha } => {
                let p = 1.0 - alpha;
                let m0 = coef * (b.powf(p) - a.powf(p)) / p;
                let s1 = coef * (b.powf(p + 1.0) - a.powf(p + 1.0)) / (p + 1.0);
                (m0, (s1 - a * m0) / dt)
            }
            Density::GammaResolvent { .. } => {
                let (m0, m1) = if k == 0 {
                    let beta = self.left_exponent();
                    (
                        quad::tanh_sinh_left(a, b, beta, |dl, _| self.regular_at(dl, dt)),
                        quad::tanh_sinh_left(a, b, beta, |dl, _| self.regular_at(dl, dt) * dl / dt),
                    )
                } else {
                    (
                        quad::tanh_sinh(a, b, |dl, _| self.at(a + dl, dt)),
                        quad::tanh_sinh(a, b, |dl, _| self.at(a + dl, dt) * dl / dt),
                    )
                };
                (m0, m1)
            }
            Density::Cells(v) => {
                let r = v.get(k).copied().unwrap_or(0.0);
                (r * dt, 0.5 * r * dt)
            }
            Density::Nodes(v) => {
                let l = v.get(k).copied().unwrap_or(0.0);
                let r = v.get(k + 1).copied().unwrap_or(0.0);
                (0.5 * (l + r) * dt, (l / 6.0 + r / 3.0) * dt)
            }
        }
    }
}

/// A measure of locally bounded variation on `[0, T]`: an atom at zero, further
/// atoms, and a sum of scaled densities.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    pub grid: TimeGrid,
    pub atom0: f64,
    /// `(location, mass)` with `location > 0`.
    pub atoms: Vec<(f64, f64)>,
    /// `(scale, density)` pairs; the density of the measure is their sum.
    pub parts: Vec<(f64, Density)>,
}

impl GridMeasure {
    pub fn dirac(grid: TimeGrid, mass: f64) -> Self {
        Self {
            grid,
            atom0: mass,
            atoms: Vec::new(),
            parts: Vec::new(),
        }
    }

    pub fn with_density(grid: TimeGrid, atom0: f64, density: Density) -> Self {
        Self {
            grid,
            atom0,
            atoms: Vec::new(),
            parts: vec![(1.0, density)],
        }
    }

    /// Density of the absolutely continuous part at `s > 0`.
    pub fn density_at(&self, s: f64) -> f64 {
        self.parts
            .iter()
            .map(|(w, d)| w * d.at(s, self.grid.dt()))
            .sum()
    }

    /// Mass of the absolutely continuous part on each grid cell.
    pub fn cell_masses(&self) -> Vec<f64> {
        let dt = self.grid.dt();
        (0..self.grid.n_steps())
            .map(|k| {
                self.parts
                    .iter()
                    .map(|(w, d)| w * d.cell_moments(k, dt).0)
                    .sum()
            })
            .collect()
    }

    /// `m([0, t_j])` at every grid node.
    pub fn cumulative(&self) -> Vec<f64> {
        let dt = self.grid.dt();
        let cells = self.cell_masses();
        let mut out = Vec::with_capacity(self.grid.n_points());
        let mut acc = self.atom0;
        out.push(acc);
        for (k, c) in cells.iter().enumerate() {
            acc += c;
            let hi = (k + 1) as f64 * dt;
            let lo = k as f64 * dt;
            acc += self
                .atoms
                .iter()
                .filter(|(x, _)| *x > lo && *x <= hi)
                .map(|(_, m)| m)
                .sum::<f64>();
            out.push(acc);
        }
        out
    }

    /// Total variation on `[0, T]` (cellwise, so sign changes inside a cell are
    /// not resolved).
    pub fn total_variation(&self) -> f64 {
        self.atom0.abs()
            + self.atoms.iter().map(|(_, m)| m.abs()).sum::<f64>()
            + self.cell_masses().iter().map(|m| m.abs()).sum::<f64>()
    }

    /// Atoms and cell masses are all `>= -tol`.
    pub fn is_nonnegative(&self, tol: f64) -> bool {
        self.atom0 >= -tol
            && self.atoms.iter().all(|(_, m)| *m >= -tol)
            && self.cell_masses().iter().all(|m| *m >= -tol)
    }

    /// `s ↦ m([s, s+t])` non-increasing, checked as: no atoms away from zero and
    /// cell masses non-increasing up to `tol`.
    pub fn is_nonincreasing(&self, tol: f64) -> bool {
        self.atoms.iter().all(|(_, m)| m.abs() <= tol)
            && self.cell_masses().windows(2).all(|w| w[1] <= w[0] + tol)
    }

    /// `∫_{[0,t]} K(h + t − s) m(ds)` at an arbitrary `t >= 0`.
    pub fn conv_kernel_at(&self, kernel: &Kernel, h: f64, t: f64) -> f64 {
        let mut acc = 0.0;
        if self.atom0 != 0.0 {
            acc += self.atom0 * kernel.value(h + t);
        }
        for &(x, m) in &self.atoms {
            if x <= t {
                acc += m * kernel.value(h + t - x);
            }
        }
        let dt = self.grid.dt();
        for (w, d) in &self.parts {
            if *w == 0.0 || t <= 0.0 {
                continue;
            }
            let part = if d.is_closed_form() {
                quad::tanh_sinh_left(0.0, t, d.left_exponent(), |dl, dr| {
                    kernel.value(h + dr) * d.regular_at(dl, dt)
                })
            } else {
                let mut s = 0.0;
                let cells = ((t / dt).ceil() as usize).min(self.grid.n_steps());
                for k in 0..cells {
                    let lo = k as f64 * dt;
                    let hi = (lo + dt).min(t);
                    if hi <= lo {
                        continue;
                    }
                    // lag interval [h + t − hi, h + t − lo]
                    let (a, b) = (h + t - hi, h + t - lo);
                    match d {
                        Density::Cells(v) => s += v[k] * kernel.integral(a, b),
                        Density::Nodes(v) => {
                            // value at s = hi ↔ lag a, at s = lo ↔ lag b
                            let frac_hi = (hi - lo) / dt;
                            let v_lo = v[k];
                            let v_hi = v[k] + (v[k + 1] - v[k]) * frac_hi;
                            let (wa, wb) = kernel.linear_weights(a, b);
                            s += wa * v_hi + wb * v_lo;
                        }
                        _ => unreachable!(),
                    }
                }
                s
            };
            acc += w * part;
        }
        acc
    }

    /// `(m∗f)(t_j) = ∫_{[0,t_j]} f(t_j − s) m(ds)` for a grid function `f`
    /// taken piecewise linear between nodes.
    pub fn convolve(&self, f: &[f64]) -> Vec<f64> {
        let n = f.len().min(self.grid.n_points());
        let dt = self.grid.dt();
        // per-cell (mass, first moment) of the density part
        let mut moments = vec![(0.0, 0.0); n.saturating_sub(1)];
        for (w, d) in &self.parts {
            for (k, m) in moments.iter_mut().enumerate() {
                let (m0, m1) = d.cell_moments(k, dt);
                m.0 += w * m0;
                m.1 += w * m1;
            }
        }
        let interp = |x: f64| -> f64 {
            if x <= 0.0 {
                return f[0];
            }
            let k = (x / dt).floor() as usize;
            if k + 1 >= n {
                return f[n - 1];
            }
            let frac = x / dt - k as f64;
            f[k] * (1.0 - frac) + f[k + 1] * frac
        };
        (0..n)
            .map(|j| {
                let t = j as f64 * dt;
                let mut acc = self.atom0 * f[j];
                for &(x, m) in &self.atoms {
                    if x <= t {
                        acc += m * interp(t - x);
                    }
                }
                // cell k: f(t_j − s) linear from f_{j−k} (s = t_k) to f_{j−k−1}
                for (k, &(m0, m1)) in moments.iter().enumerate().take(j) {
                    acc += f[j - k] * (m0 - m1) + f[j - k - 1] * m1;
                }
                acc
            })
            .collect()
    }
}

/// `(m∗f)` on the grid; see [`GridMeasure::convolve`].
pub fn conv_measure_fun(m: &GridMeasure, f: &[f64]) -> Vec<f64> {
    m.convolve(f)
}
