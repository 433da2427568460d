//! Numerical toolkit for the Volterra Heston model
//!
//! `dS = S √V dB`, `V_t = g_0(t) + ∫_0^t K(t−s)(−λV_s ds + ν√V_s dW_s)`:
//! kernels and their resolvents, admissible input curves, Riccati–Volterra
//! transforms, forward-curve evolution, a Markovian lift and Monte Carlo.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod curves;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod lift;
pub mod montecarlo;
pub mod quad;
pub mod riccati;
pub mod transform;

pub use curves::InputCurve;
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use kernels::Kernel;
pub use riccati::{FLArgument, ModelParams, Scheme};
