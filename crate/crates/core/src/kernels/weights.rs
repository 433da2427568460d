use super::Kernel;
use crate::grid::TimeGrid;

/// Per-cell product-integration weights of a kernel on a uniform grid.
///
/// For lag `m >= 1` the cell is `[(m−1)Δt, mΔt]` in the lag variable
/// `r = t_j − s`. With an integrand linear on each cell,
/// `(K∗f)(t_j) = Σ_{m=1}^{j} far[m] f_{j−m} + near[m] f_{j−m+1}`.
#[derive(Debug, Clone)]
pub struct KernelWeights {
    dt: f64,
    /// `∫_cell K`.
    pub total: Vec<f64>,
    /// Weight of the node nearer to `t_j` (lag `(m−1)Δt`).
    pub near: Vec<f64>,
    /// Weight of the node farther from `t_j` (lag `mΔt`).
    pub far: Vec<f64>,
}

impl KernelWeights {
    /// Weights for lags `1..=max_lag`.
    pub fn new(kernel: &Kernel, dt: f64, max_lag: usize) -> Self {
        let mut total = vec![0.0; max_lag + 1];
        let mut near = vec![0.0; max_lag + 1];
        let mut far = vec![0.0; max_lag + 1];
        for m in 1..=max_lag {
            let a = (m - 1) as f64 * dt;
            let b = m as f64 * dt;
            let (wa, wb) = kernel.linear_weights(a, b);
            near[m] = wa;
            far[m] = wb;
            total[m] = kernel.integral(a, b);
        }
        Self {
            dt,
            total,
            near,
            far,
        }
    }

    pub fn for_grid(kernel: &Kernel, grid: &TimeGrid) -> Self {
        Self::new(kernel, grid.dt(), grid.n_steps())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn max_lag(&self) -> usize {
        self.total.len() - 1
    }

    /// `Σ_{m=2}^{j} far[m] f_{j−m} + near[m] f_{j−m+1}`: everything except the
    /// newest cell, for a generic additive value type.
    pub fn history<T>(&self, f: &[T], j: usize) -> T
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let mut acc = T::default();
        for m in 2..=j {
            acc = acc + f[j - m] * self.far[m] + f[j - m + 1] * self.near[m];
        }
        acc
    }
}

/// `(K∗f)(t_j)` on the grid by product integration with `f` piecewise linear.
pub fn conv_kernel_fun(kernel: &Kernel, f: &[f64], grid: &TimeGrid) -> Vec<f64> {
    let n = f.len().min(grid.n_points());
    let w = KernelWeights::new(kernel, grid.dt(), n.saturating_sub(1));
    (0..n)
        .map(|j| {
            if j == 0 {
                0.0
            } else {
                w.history(f, j) + f[j - 1] * w.far[1] + f[j] * w.near[1]
            }
        })
        .collect()
}
