use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `t_j = j * dt`, `j = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::domain(format!(
                "grid step must be positive, got {dt}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::domain("grid needs at least one step"));
        }
        Ok(Self { dt, n_steps })
    }

    /// Grid covering `[0, horizon]` with step as close to `dt` as possible
    /// while landing exactly on the horizon.
    pub fn with_horizon(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::domain(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let n = (horizon / dt).round().max(1.0) as usize;
        Self::new(horizon / n as f64, n)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        self.dt * j as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| self.time(j)).collect()
    }

    /// Index of the node at `t`, if `t` lies on the grid (relative tolerance 1e-9).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt;
        let j = x.round();
        if (x - j).abs() <= 1e-9 * x.abs().max(1.0) && j >= 0.0 && j as usize <= self.n_steps {
            Some(j as usize)
        } else {
            None
        }
    }

    /// Same step, `n_steps` replaced.
    pub fn resized(&self, n_steps: usize) -> Result<Self> {
        Self::new(self.dt, n_steps)
    }

    /// Halved step over the same horizon.
    pub fn refined(&self) -> Self {
        Self {
            dt: self.dt / 2.0,
            n_steps: self.n_steps * 2,
        }
    }

    /// Dyadic shift ladder `dt, 2 dt, 4 dt, ...` capped at the horizon, which is
    /// always included.
    pub fn dyadic_ladder(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut m = 1usize;
        while m < self.n_steps {
            out.push(self.time(m));
            m *= 2;
        }
        out.push(self.horizon());
        out
    }
}
