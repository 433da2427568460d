//! Finite-dimensional Markovian lift: `V_t = g̃_0(t) + Σ c_i U_t(x_i)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{check_admissible, AdmissibilityReport, InputCurve};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::{Kernel, LaplaceMeasure};
use crate::montecarlo::{draw_step, log_s_step, path_rng, variance_shock};
use crate::quad::phi1;
use crate::riccati::ModelParams;

/// How the nodes of a density `μ` are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRule {
    /// Nodes `x_i = r^i / T` spanning `[1/T, 1/Δt]`; the cells are split at
    /// geometric midpoints, the first cell starts at the bottom of the support.
    /// Lumping the mass near the origin at `1/T` makes `K_n` too small at
    /// times of order `T`.
    Geometric,
    /// Cell edges `0, 1/T, r/T, ..., 1/Δt`, each node at the `μ`-mean of its
    /// cell.
    #[default]
    GeometricMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExactAtoms,
    Quadrature(NodeRule),
}

/// Nodes `x_i` and weights `c_i` of a finite measure `Σ c_i δ_{x_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedMeasure {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    pub provenance: Provenance,
}

impl DiscretizedMeasure {
    /// Atoms with positive weight; equal nodes are merged.
    pub fn from_atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = atoms.iter().copied().filter(|a| a.1 > 0.0).collect();
        if pairs.is_empty() || pairs.iter().any(|(x, c)| !(*x >= 0.0) || !c.is_finite()) {
            return Err(Error::domain(
                "measure needs finite atoms with x >= 0 and some c > 0",
            ));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut nodes: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (x, c) in pairs {
            if nodes.last() == Some(&x) {
                *weights.last_mut().unwrap() += c;
            } else {
                nodes.push(x);
                weights.push(c);
            }
        }
        Ok(Self {
            nodes,
            weights,
            provenance: Provenance::ExactAtoms,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `K_n(t) = Σ c_i e^{−x_i t}` as a kernel.
    pub fn kernel(&self) -> Kernel {
        let pairs: Vec<(f64, f64)> = self
            .weights
            .iter()
            .copied()
            .zip(self.nodes.iter().copied())
            .collect();
        Kernel::exp_sum(&pairs).expect("weights are positive")
    }

    /// `Σ c_i e^{−x_i t}`.
    pub fn kernel_value(&self, t: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.nodes)
            .map(|(c, x)| c * (-x * t).exp())
            .sum()
    }
}

/// Discretizes the Laplace measure of `kernel` with `n` nodes. Atomic measures
/// pass through unchanged; densities use `rule` over the time scales of `grid`.
pub fn discretize_measure(
    kernel: &Kernel,
    n: usize,
    grid: &TimeGrid,
    rule: NodeRule,
) -> Result<DiscretizedMeasure> {
    if n == 0 {
        return Err(Error::domain("node count must be >= 1"));
    }
    let (coef, alpha, shift) = match kernel.laplace_measure() {
        LaplaceMeasure::Atoms(atoms) => {
            let pairs: Vec<(f64, f64)> = atoms.iter().map(|&(x, m)| (x, m)).collect();
            return DiscretizedMeasure::from_atoms(&pairs);
        }
        LaplaceMeasure::PowerDensity { coef, alpha, shift } => (coef, alpha, shift),
    };
    let mu = LaplaceMeasure::PowerDensity { coef, alpha, shift };
    let lo = 1.0 / grid.horizon();
    let hi = 1.0 / grid.dt();
    let ratio = if n > 1 {
        (hi / lo).powf(1.0 / (n - 1) as f64)
    } else {
        1.0
    };
    let (edges, nodes): (Vec<f64>, Option<Vec<f64>>) = match rule {
        NodeRule::Geometric => {
            let xs: Vec<f64> = if n == 1 {
                vec![lo]
            } else {
                (0..n).map(|i| lo * ratio.powi(i as i32)).collect()
            };
            let mut e = vec![0.0];
            e.extend(xs.windows(2).map(|w| (w[0] * w[1]).sqrt()));
            e.push(if n == 1 { hi } else { xs[n - 1] * ratio.sqrt() });
            (e, Some(xs))
        }
        NodeRule::GeometricMean => {
            let mut e = vec![0.0];
            if n == 1 {
                e.push(hi);
            } else {
                e.extend((0..n).map(|i| lo * ratio.powi(i as i32)));
            }
            (e, None)
        }
    };
    let mut out_nodes = Vec::with_capacity(n);
    let mut out_weights = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (shift + edges[i], shift + edges[i + 1]);
        let m = mu.mass(a, b);
        let x = match &nodes {
            Some(xs) => shift + xs[i],
            None => mu.first_moment(a, b) / m,
        };
        out_nodes.push(x);
        out_weights.push(m);
    }
    Ok(DiscretizedMeasure {
        nodes: out_nodes,
        weights: out_weights,
        provenance: Provenance::Quadrature(rule),
    })
}

/// `(∫_{Δt}^{T} (K_n − K)²)^{1/2}` by tanh-sinh quadrature.
pub fn kernel_l2_error(kernel: &Kernel, dm: &DiscretizedMeasure, grid: &TimeGrid) -> f64 {
    let a = grid.dt();
    let b = grid.horizon();
    // split geometrically so the steep part near Δt is resolved
    let mut edges = vec![a];
    while *edges.last().unwrap() * 4.0 < b {
        let next = edges.last().unwrap() * 4.0;
        edges.push(next);
    }
    edges.push(b);
    edges
        .windows(2)
        .map(|w| {
            crate::quad::tanh_sinh(w[0], w[1], |dl, _| {
                let t = w[0] + dl;
                (dm.kernel_value(t) - kernel.value(t)).powi(2)
            })
        })
        .sum::<f64>()
        .sqrt()
}

/// `g(t) = Σ c_i U_0(x_i) e^{−x_i t}` checked for admissibility against `K_n`.
pub fn check_d_mu(
    u0: &[f64],
    dm: &DiscretizedMeasure,
    grid: &TimeGrid,
    ladder: Option<&[f64]>,
    tol: Option<f64>,
) -> Result<AdmissibilityReport> {
    if u0.len() != dm.len() {
        return Err(Error::domain("one factor value per node is required"));
    }
    let wide = grid.resized(2 * grid.n_steps())?;
    let values: Vec<f64> = wide
        .times()
        .iter()
        .map(|&t| {
            dm.weights
                .iter()
                .zip(&dm.nodes)
                .zip(u0)
                .map(|((c, x), u)| c * u * (-x * t).exp())
                .sum()
        })
        .collect();
    let g = InputCurve::from_grid(&wide, values)?;
    check_admissible(&g, &dm.kernel(), grid, ladder, tol)
}

/// Paths of the lifted system.
#[derive(Debug, Clone)]
pub struct LiftPaths {
    pub grid: TimeGrid,
    pub n_paths: usize,
    /// Aggregate `g̃_0(t_j) + Σ c_i U` before truncation, row-major.
    pub v: Vec<f64>,
    pub log_s: Vec<f64>,
    /// Factor values at the (sorted) snapshot indices, `[snapshot][path][node]`.
    pub factors: Vec<Vec<Vec<f64>>>,
    pub snapshots: Vec<usize>,
    pub negative_cells: u64,
}

impl LiftPaths {
    pub fn v_path(&self, i: usize) -> &[f64] {
        let r = self.grid.n_points();
        &self.v[i * r..(i + 1) * r]
    }

    pub fn log_s_path(&self, i: usize) -> &[f64] {
        let r = self.grid.n_points();
        &self.log_s[i * r..(i + 1) * r]
    }

    /// Factor values of path `i` at grid index `j` (must be a snapshot).
    pub fn factors_at(&self, i: usize, j: usize) -> Result<&[f64]> {
        let k = self
            .snapshots
            .iter()
            .position(|&s| s == j)
            .ok_or_else(|| Error::State(format!("no factor snapshot at index {j}")))?;
        Ok(&self.factors[k][i])
    }
}

/// Simulates `dU(x_i) = (−x_i U − λV)dt + ν√(V^+) dW`, `V = g̃_0 + Σ c_i U`,
/// with exponential-Euler steps and one Brownian motion shared by all nodes.
/// The random stream of path `i` is the one used by
/// [`simulate`](crate::montecarlo::simulate).
#[allow(clippy::too_many_arguments)]
pub fn simulate_lift(
    u0: &[f64],
    g0: &InputCurve,
    dm: &DiscretizedMeasure,
    params: &ModelParams,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    snapshots: &[usize],
) -> Result<LiftPaths> {
    params.validate()?;
    if u0.len() != dm.len() {
        return Err(Error::domain("one factor value per node is required"));
    }
    if n_paths == 0 {
        return Err(Error::domain("n_paths must be >= 1"));
    }
    if let Some(&s) = snapshots.iter().find(|&&s| s > grid.n_steps()) {
        return Err(Error::domain(format!("snapshot index {s} beyond the grid")));
    }
    let mut snapshots = snapshots.to_vec();
    snapshots.sort_unstable();
    snapshots.dedup();
    let n = grid.n_steps();
    let dt = grid.dt();
    let g = g0.sample(grid, 0.0);
    let decay: Vec<f64> = dm.nodes.iter().map(|&x| (-x * dt).exp()).collect();
    let gain: Vec<f64> = dm.nodes.iter().map(|&x| phi1(x * dt)).collect();
    let c = &dm.weights;
    let log_s0 = params.s0.ln();

    type PathOut = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>, u64);
    let paths: Vec<PathOut> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let sqrt_dt = dt.sqrt();
            let mut u = u0.to_vec();
            let mut v = Vec::with_capacity(n + 1);
            let mut log_s = Vec::with_capacity(n + 1);
            let mut snaps = Vec::with_capacity(snapshots.len());
            let mut x = log_s0;
            let mut negative = 0;
            log_s.push(x);
            for (j, gj) in g.iter().enumerate().take(n + 1) {
                let vj = gj + u.iter().zip(c).map(|(u, c)| u * c).sum::<f64>();
                v.push(vj);
                if vj < 0.0 {
                    negative += 1;
                }
                if snapshots.contains(&j) {
                    snaps.push(u.clone());
                }
                if j == n {
                    break;
                }
                let (dw, dw_perp) = draw_step(&mut rng, sqrt_dt);
                let dz = variance_shock(params, vj, dt, dw);
                for k in 0..u.len() {
                    u[k] = decay[k] * u[k] + gain[k] * dz;
                }
                x += log_s_step(params, vj, dt, dw, dw_perp);
                log_s.push(x);
            }
            (v, log_s, snaps, negative)
        })
        .collect();

    let mut out = LiftPaths {
        grid: *grid,
        n_paths,
        v: Vec::with_capacity(n_paths * (n + 1)),
        log_s: Vec::with_capacity(n_paths * (n + 1)),
        factors: vec![Vec::with_capacity(n_paths); snapshots.len()],
        snapshots,
        negative_cells: 0,
    };
    for (v, s, snaps, neg) in paths {
        out.v.extend(v);
        out.log_s.extend(s);
        for (k, u) in snaps.into_iter().enumerate() {
            out.factors[k].push(u);
        }
        out.negative_cells += neg;
    }
    Ok(out)
}

/// `g_{t_0}(t) = g̃_0(t_0 + t) + Σ c_i e^{−x_i t} U_{t_0}(x_i)` on `grid`.
pub fn reconstruct_forward_curve(
    u_t0: &[f64],
    g0: &InputCurve,
    dm: &DiscretizedMeasure,
    t0: f64,
    grid: &TimeGrid,
) -> Result<InputCurve> {
    InputCurve::from_grid(grid, reconstruct_forward_values(u_t0, g0, dm, t0, grid)?)
}

pub fn reconstruct_forward_values(
    u_t0: &[f64],
    g0: &InputCurve,
    dm: &DiscretizedMeasure,
    t0: f64,
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    if u_t0.len() != dm.len() {
        return Err(Error::domain("one factor value per node is required"));
    }
    Ok((0..grid.n_points())
        .map(|k| {
            let t = grid.time(k);
            let base = if k == 0 { g0.eval(t0) } else { g0.eval(t0 + t) };
            base + dm
                .weights
                .iter()
                .zip(&dm.nodes)
                .zip(u_t0)
                .map(|((c, x), u)| c * (-x * t).exp() * u)
                .sum::<f64>()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atoms_pass_through() {
        let grid = TimeGrid::with_horizon(1.0, 0.01).unwrap();
        let k = Kernel::exp_sum(&[(1.0, 0.5)]).unwrap();
        for n in [1, 7] {
            let dm = discretize_measure(&k, n, &grid, NodeRule::Geometric).unwrap();
            assert_eq!(dm.nodes(), &[0.5]);
            assert_eq!(dm.weights(), &[1.0]);
        }
    }

    #[test]
    fn fractional_kernel_approximation() {
        let grid = TimeGrid::with_horizon(1.0, 1e-3).unwrap();
        let k = Kernel::fractional(1.0, 0.6).unwrap();
        let dm = discretize_measure(&k, 20, &grid, NodeRule::default()).unwrap();
        let r = dm.kernel_value(1.0) / k.value(1.0);
        assert!((0.95..=1.05).contains(&r), "{r}");
        let errs: Vec<f64> = [5, 10, 20, 40]
            .iter()
            .map(|&n| {
                let dm = discretize_measure(&k, n, &grid, NodeRule::default()).unwrap();
                assert!(dm.nodes().windows(2).all(|w| w[1] > w[0]));
                kernel_l2_error(&k, &dm, &grid)
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        let geo = discretize_measure(&k, 20, &grid, NodeRule::Geometric).unwrap();
        assert_eq!(geo.nodes()[0], 1.0);
        assert!((geo.nodes()[19] - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn d_mu_examples() {
        let grid = TimeGrid::with_horizon(1.0, 1e-2).unwrap();
        let dm = DiscretizedMeasure::from_atoms(&[(0.5, 1.0), (3.0, 0.5)]).unwrap();
        assert!(
            check_d_mu(&[0.0, 0.0], &dm, &grid, None, None)
                .unwrap()
                .pass
        );
        let r = check_d_mu(&[0.1, -1.0], &dm, &grid, None, None).unwrap();
        assert!(!r.pass);
        assert!(r.g0_at_zero < 0.0);
    }

    #[test]
    fn reconstruct_at_zero() {
        let grid = TimeGrid::with_horizon(1.0, 0.1).unwrap();
        let dm = DiscretizedMeasure::from_atoms(&[(0.5, 1.0), (3.0, 0.5)]).unwrap();
        let g = InputCurve::flat(0.04);
        let c = reconstruct_forward_values(&[0.0, 0.0], &g, &dm, 0.0, &grid).unwrap();
        assert!(c.iter().all(|v| *v == 0.04));
        let c = reconstruct_forward_values(&[0.02, -0.01], &g, &dm, 0.3, &grid).unwrap();
        assert!((c[0] - (0.04 + 0.02 - 0.005)).abs() < 1e-15);
    }
}
