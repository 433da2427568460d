use statrs::function::gamma::gamma;

use super::measure::{Density, GridMeasure};
use super::{tol, Kernel, KernelWeights};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::quad;

/// Resolvent of the first kind `L` with `K∗L ≡ 1`.
///
/// Closed forms are used for the fractional, gamma and constant kernels;
/// general exponential sums are deconvolved by forward substitution with an
/// atom `1/K(0)` at zero and a piecewise-constant density. The result is
/// checked against the identity and for being nonnegative and non-increasing
/// before it is returned.
pub fn resolvent_first_kind(kernel: &Kernel, grid: &TimeGrid) -> Result<GridMeasure> {
    let (measure, bound) = match kernel {
        Kernel::Fractional { c, alpha } if *alpha == 1.0 => {
            (GridMeasure::dirac(*grid, 1.0 / c), tol::RESOLVENT_CLOSED)
        }
        Kernel::Fractional { c, alpha } => (
            GridMeasure::with_density(
                *grid,
                0.0,
                Density::Power {
                    coef: 1.0 / (c * gamma(1.0 - alpha)),
                    alpha: *alpha,
                },
            ),
            tol::RESOLVENT_CLOSED,
        ),
        Kernel::Gamma { c, alpha, lambda } => (
            GridMeasure::with_density(
                *grid,
                0.0,
                Density::GammaResolvent {
                    c: *c,
                    alpha: *alpha,
                    lambda: *lambda,
                },
            ),
            tol::RESOLVENT_CLOSED,
        ),
        Kernel::ExpSum { terms } if terms.iter().all(|e| e.rate == 0.0) => {
            let c: f64 = terms.iter().map(|e| e.weight).sum();
            (GridMeasure::dirac(*grid, 1.0 / c), tol::RESOLVENT_CLOSED)
        }
        Kernel::ExpSum { .. } => (deconvolve(kernel, grid), tol::RESOLVENT_DECONVOLVED),
    };

    let residual = resolvent_residual(kernel, &measure);
    if !(residual <= bound) {
        return Err(Error::numerical("resolvent identity K*L = 1", residual));
    }
    let scale = measure
        .cell_masses()
        .iter()
        .fold(measure.atom0.abs(), |m, v| m.max(v.abs()));
    let slack = tol::MONOTONE_SLACK * scale.max(1.0);
    if !measure.is_nonnegative(slack) || !measure.is_nonincreasing(slack) {
        return Err(Error::numerical(
            "resolvent is not nonnegative and non-increasing",
            slack,
        ));
    }
    Ok(measure)
}

fn deconvolve(kernel: &Kernel, grid: &TimeGrid) -> GridMeasure {
    let n = grid.n_steps();
    let w = KernelWeights::for_grid(kernel, grid);
    let atom = 1.0 / kernel.value(0.0);
    let mut dens = vec![0.0; n];
    for j in 1..=n {
        let mut rhs = 1.0 - atom * kernel.value(grid.time(j));
        for (k, d) in dens.iter().enumerate().take(j - 1) {
            rhs -= d * w.total[j - k];
        }
        dens[j - 1] = rhs / w.total[1];
    }
    GridMeasure::with_density(*grid, atom, Density::Cells(dens))
}

/// `max_j |(K∗L)(t_j) − 1|` over grid nodes (`t_0` skipped for singular kernels).
pub fn resolvent_residual(kernel: &Kernel, l: &GridMeasure) -> f64 {
    let grid = l.grid;
    let start = if kernel.is_singular() { 1 } else { 0 };
    (start..=grid.n_steps())
        .map(|j| (l.conv_kernel_at(kernel, 0.0, grid.time(j)) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `Φ = Δ_hK∗L` on the grid together with the measure `dΦ` extended by
/// `Φ(0)δ_0`, so that `Φ(t) = dΦ([0, t])`.
#[derive(Debug, Clone)]
pub struct ShiftedResolvent {
    pub h: f64,
    pub values: Vec<f64>,
    /// `Φ(0)δ_0 + K(h)·(density of L) + r̃(s)ds`, the remainder of `dΦ` once
    /// the ramp part is removed; `r̃` is tabulated on the nodes.
    pub measure: GridMeasure,
    /// Coefficient `K'(h)` of the part `K'(h)·L([0, s])ds` of `dΦ`, kept apart
    /// because it carries the `s^{1−α}` behaviour at the origin and
    /// `K∗(L([0, ·])) = t` exactly.
    pub ramp: f64,
}

/// `Δ_hK∗L` and its derivative measure. Fails when the values leave `[0, 1]` or
/// decrease beyond the slack, which signals a grid too coarse for the kernel.
pub fn shifted_resolvent_conv(
    kernel: &Kernel,
    l: &GridMeasure,
    h: f64,
) -> Result<ShiftedResolvent> {
    let grid = l.grid;
    if h < 0.0 {
        return Err(Error::domain(format!("shift must be >= 0, got {h}")));
    }
    if h == 0.0 {
        return Ok(ShiftedResolvent {
            h,
            values: vec![1.0; grid.n_points()],
            measure: GridMeasure::dirac(grid, 1.0),
            ramp: 0.0,
        });
    }
    let values = shifted_resolvent_values(kernel, l, h)?;
    let kh = kernel.value(h);
    let ramp = kernel.derivative(h);
    let cumulative = l.cumulative();
    let r: Vec<f64> = (0..=grid.n_steps())
        .map(|j| shifted_derivative_conv(kernel, l, h, grid.time(j)) - ramp * cumulative[j])
        .collect();
    let mut parts: Vec<(f64, Density)> = l.parts.iter().map(|(w, d)| (w * kh, d.clone())).collect();
    parts.push((1.0, Density::Nodes(r)));
    let measure = GridMeasure {
        grid,
        atom0: values[0],
        atoms: l.atoms.iter().map(|&(x, m)| (x, m * kh)).collect(),
        parts,
    };
    Ok(ShiftedResolvent {
        h,
        values,
        measure,
        ramp,
    })
}

/// Node values of `Δ_hK∗L`, checked to lie in `[0, 1]` and to be non-decreasing
/// within [`tol::MONOTONE_SLACK`].
pub fn shifted_resolvent_values(kernel: &Kernel, l: &GridMeasure, h: f64) -> Result<Vec<f64>> {
    let grid = l.grid;
    if h < 0.0 {
        return Err(Error::domain(format!("shift must be >= 0, got {h}")));
    }
    if h == 0.0 {
        return Ok(vec![1.0; grid.n_points()]);
    }
    let values: Vec<f64> = (0..=grid.n_steps())
        .map(|j| l.conv_kernel_at(kernel, h, grid.time(j)))
        .collect();

    let slack = tol::MONOTONE_SLACK * values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let out_of_range = values
        .iter()
        .map(|v| (-v).max(v - 1.0))
        .fold(f64::NEG_INFINITY, f64::max);
    if out_of_range > slack {
        return Err(Error::numerical(
            format!("shifted resolvent outside [0, 1] for h = {h}"),
            out_of_range,
        ));
    }
    let worst_drop = values
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::NEG_INFINITY, f64::max);
    if worst_drop > slack {
        return Err(Error::numerical(
            format!("shifted resolvent decreasing for h = {h}"),
            worst_drop,
        ));
    }

    Ok(values)
}

/// `∫_{[0,t]} K'(h + t − s) L(ds)` for `h > 0`.
fn shifted_derivative_conv(kernel: &Kernel, l: &GridMeasure, h: f64, t: f64) -> f64 {
    let dt = l.grid.dt();
    let mut acc = l.atom0 * kernel.derivative(h + t);
    for &(x, m) in &l.atoms {
        if x <= t {
            acc += m * kernel.derivative(h + t - x);
        }
    }
    if t <= 0.0 {
        return acc;
    }
    for (w, d) in &l.parts {
        acc += w * match d {
            Density::Cells(v) => {
                let cells = ((t / dt).round() as usize).min(v.len());
                (0..cells)
                    .map(|k| {
                        let lo = k as f64 * dt;
                        let hi = lo + dt;
                        v[k] * (kernel.value(h + t - lo) - kernel.value(h + t - hi))
                    })
                    .sum::<f64>()
            }
            Density::Nodes(_) => {
                quad::tanh_sinh(0.0, t, |dl, dr| kernel.derivative(h + dr) * d.at(dl, dt))
            }
            _ => quad::tanh_sinh_left(0.0, t, d.left_exponent(), |dl, dr| {
                kernel.derivative(h + dr) * d.regular_at(dl, dt)
            }),
        };
    }
    acc
}

/// Output of [`reconstruct_shifted_kernel`].
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub h: f64,
    /// `dΦ∗K` at `t_1, ..., t_N`.
    pub values: Vec<f64>,
    /// `max_j |dΦ∗K − Δ_hK| / Δ_hK` over `t_1, ..., t_N`.
    pub max_rel_error: f64,
}

/// Rebuilds `Δ_hK = (Δ_hK∗L)(0) K + d(Δ_hK∗L)∗K` from the grid measure (plus
/// the exact ramp contribution `K'(h)·t`) and reports the worst relative error against direct evaluation.
pub fn reconstruct_shifted_kernel(
    kernel: &Kernel,
    l: &GridMeasure,
    h: f64,
) -> Result<Reconstruction> {
    let grid = l.grid;
    let shifted = shifted_resolvent_conv(kernel, l, h)?;
    let mut values = Vec::with_capacity(grid.n_steps());
    let mut max_rel_error = 0.0_f64;
    for j in 1..=grid.n_steps() {
        let t = grid.time(j);
        let v = shifted.measure.conv_kernel_at(kernel, 0.0, t) + shifted.ramp * t;
        let want = kernel.value(h + t);
        max_rel_error = max_rel_error.max((v - want).abs() / want.abs());
        values.push(v);
    }
    Ok(Reconstruction {
        h,
        values,
        max_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_kernel_resolvent_is_unit_atom() {
        let grid = TimeGrid::with_horizon(1.0, 0.01).unwrap();
        let l = resolvent_first_kind(&Kernel::constant(1.0).unwrap(), &grid).unwrap();
        assert_eq!(l.atom0, 1.0);
        assert!(l.parts.is_empty());
        let l = resolvent_first_kind(&Kernel::fractional(2.0, 1.0).unwrap(), &grid).unwrap();
        assert_eq!(l.atom0, 0.5);
    }

    #[test]
    fn single_exponential_resolvent() {
        // K = e^{-t}: L = δ_0 + ds
        let grid = TimeGrid::with_horizon(2.0, 1e-3).unwrap();
        let k = Kernel::exp_sum(&[(1.0, 1.0)]).unwrap();
        let l = resolvent_first_kind(&k, &grid).unwrap();
        assert!((l.atom0 - 1.0).abs() < 1e-15);
        let Density::Cells(d) = &l.parts[0].1 else {
            panic!()
        };
        assert!(d.iter().all(|v| (v - 1.0).abs() < 1e-9), "{:?}", &d[..5]);
        assert!(resolvent_residual(&k, &l) < 1e-12);
    }

    #[test]
    fn fractional_resolvent_density() {
        let grid = TimeGrid::with_horizon(2.0, 1e-3).unwrap();
        let k = Kernel::fractional(1.0, 0.6).unwrap();
        let l = resolvent_first_kind(&k, &grid).unwrap();
        // t^{-0.6}/Γ(0.4)
        let s = 0.37;
        assert!((l.density_at(s) - s.powf(-0.6) / gamma(0.4)).abs() < 1e-14);
        assert!(resolvent_residual(&k, &l) <= 1e-8);
    }

    #[test]
    fn shift_zero_and_constant_kernel() {
        let grid = TimeGrid::with_horizon(1.0, 0.01).unwrap();
        let k = Kernel::constant(1.0).unwrap();
        let l = resolvent_first_kind(&k, &grid).unwrap();
        let s = shifted_resolvent_conv(&k, &l, 0.3).unwrap();
        assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!((s.measure.atom0 - 1.0).abs() < 1e-15);
        assert!(s.measure.cell_masses().iter().all(|m| m.abs() < 1e-15));
        let f = Kernel::fractional(1.0, 0.6).unwrap();
        let lf = resolvent_first_kind(&f, &grid).unwrap();
        let s0 = shifted_resolvent_conv(&f, &lf, 0.0).unwrap();
        assert!(s0.values.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn fractional_shift_matches_tail_formula() {
        // Δ_hK∗L = 1 − ∫_0^h K(h−s) ℓ(t+s) ds for an atomless L
        let grid = TimeGrid::with_horizon(2.0, 1e-2).unwrap();
        let k = Kernel::fractional(1.0, 0.6).unwrap();
        let l = resolvent_first_kind(&k, &grid).unwrap();
        let h = 0.1;
        let s = shifted_resolvent_conv(&k, &l, h).unwrap();
        assert!(s.values[1] > 0.0 && s.values[1] < 1.0);
        for j in [0, 1, 7, 100, 200] {
            let t = grid.time(j);
            let tail = quad::tanh_sinh(0.0, h, |dl, dr| k.value(dr) * l.density_at(t + dl));
            assert!((s.values[j] - (1.0 - tail)).abs() < 1e-10, "j={j}");
        }
    }

    #[test]
    fn reconstruction_exact_cases() {
        let grid = TimeGrid::with_horizon(2.0, 1e-2).unwrap();
        let k = Kernel::constant(1.0).unwrap();
        let l = resolvent_first_kind(&k, &grid).unwrap();
        assert!(
            reconstruct_shifted_kernel(&k, &l, 0.4)
                .unwrap()
                .max_rel_error
                < 1e-14
        );
        let grid = TimeGrid::with_horizon(2.0, 1e-3).unwrap();
        let k = Kernel::exp_sum(&[(1.0, 1.0)]).unwrap();
        let l = resolvent_first_kind(&k, &grid).unwrap();
        assert!(
            reconstruct_shifted_kernel(&k, &l, 0.5)
                .unwrap()
                .max_rel_error
                < 1e-6
        );
    }
}
