mod common;

use common::{fixtures, mittag_leffler, rel_err, Heston};
use num_complex::Complex64 as C64;
use statrs::function::gamma::gamma;
use volterra_heston::curves::forward_variance;
use volterra_heston::kernels::{resolvent_first_kind, resolvent_residual};
use volterra_heston::transform::{
    black_scholes_call, fourier_laplace, implied_vol, Pricer, PricingOptions,
};
use volterra_heston::*;

fn params() -> ModelParams {
    ModelParams::new(2.0, 0.3, -0.7, 1.0).unwrap()
}

#[test]
fn rust_oracle_reproduces_the_mpmath_fixture() {
    let fx = fixtures();
    let flat = Heston {
        theta: 0.0,
        ..Heston::reference()
    };
    for p in &fx.charfn_flat {
        assert!(
            rel_err(flat.charfn(p.z, 1.0), p.value()) < 1e-13,
            "z = {}",
            p.z
        );
    }
    for p in &fx.charfn_theta {
        assert!(rel_err(Heston::reference().charfn(p.z, 1.0), p.value()) < 1e-13);
    }
    let m = Heston::reference().log_mgf(C64::new(1.0, 0.0), 1.0).exp();
    assert!((m - C64::new(fx.mgf_u1_one_theta.re, fx.mgf_u1_one_theta.im)).norm() < 1e-13);
}

#[test]
fn classical_heston_charfn_matches_closed_form() {
    let grid = TimeGrid::with_horizon(1.0, 1e-3).unwrap();
    let one = Kernel::constant(1.0).unwrap();
    let h = Heston::reference();
    let g = InputCurve::classical(h.v0, h.theta, h.lambda, &one).unwrap();
    for z in [0.25, 1.0, 4.0, -2.0] {
        let v = fourier_laplace(
            &one,
            &params(),
            &g,
            &FLArgument::charfn(z),
            &grid,
            Scheme::default(),
        )
        .unwrap()
        .value;
        assert!(rel_err(v, h.charfn(z, 1.0)) < 1e-6, "z = {z}");
    }
}

#[test]
fn classical_call_prices_match_fixture() {
    let fx = fixtures();
    let grid = TimeGrid::with_horizon(1.0, 1e-3).unwrap();
    let one = Kernel::constant(1.0).unwrap();
    let g = InputCurve::classical(0.04, 0.04, 2.0, &one).unwrap();
    let strikes: Vec<f64> = fx.calls_theta.iter().map(|c| c.strike).collect();
    let pr = Pricer::new(
        &one,
        &params(),
        &g,
        &grid,
        &strikes,
        &PricingOptions::default(),
    )
    .unwrap();
    for c in &fx.calls_theta {
        assert!(
            (pr.call(c.strike) - c.price).abs() < 1e-6,
            "K = {}",
            c.strike
        );
    }
}

#[test]
fn forward_variance_matches_mittag_leffler() {
    let grid = TimeGrid::with_horizon(1.0, 1e-3).unwrap();
    let k = Kernel::fractional(1.0, 0.6).unwrap();
    let ev = forward_variance(&InputCurve::flat(0.04), 2.0, &k, &grid);
    for j in (0..=grid.n_steps()).step_by(50) {
        let t = grid.time(j);
        let want = 0.04 * mittag_leffler(0.6, -2.0 * t.powf(0.6));
        assert!((ev[j] - want).abs() < 1e-6, "t = {t}: {} vs {want}", ev[j]);
    }
}

#[test]
fn forward_variance_matches_cir_mean() {
    let grid = TimeGrid::with_horizon(2.0, 1e-3).unwrap();
    let one = Kernel::constant(1.0).unwrap();
    let h = Heston {
        v0: 0.09,
        ..Heston::reference()
    };
    let g = InputCurve::classical(h.v0, h.theta, h.lambda, &one).unwrap();
    let ev = forward_variance(&g, h.lambda, &one, &grid);
    for j in (0..=grid.n_steps()).step_by(100) {
        assert!((ev[j] - h.mean_variance(grid.time(j))).abs() < 1e-7);
    }
}

#[test]
fn fractional_resolvent_beta_identity() {
    let grid = TimeGrid::with_horizon(2.0, 1e-3).unwrap();
    for alpha in [0.55, 0.6, 0.75, 0.9] {
        let k = Kernel::fractional(1.0, alpha).unwrap();
        let l = resolvent_first_kind(&k, &grid).unwrap();
        // c = 1: density s^{-α}/Γ(1−α)
        let s: f64 = 0.37;
        let want = s.powf(-alpha) / gamma(1.0 - alpha);
        assert!((l.density_at(s) - want).abs() < 1e-12 * want);
        assert!(resolvent_residual(&k, &l) < 1e-8, "alpha = {alpha}");
    }
}

#[test]
fn classical_curve_closed_form() {
    let k = Kernel::fractional(1.0, 0.6).unwrap();
    let g = InputCurve::classical(0.04, 0.04, 0.3, &k).unwrap();
    let want = 0.04 + 0.012 / (0.6 * gamma(0.6));
    assert!((g.eval(1.0) - want).abs() < 1e-14);
}

#[test]
fn black_scholes_reference_values() {
    // textbook value: S = K = 1, T = 1, σ = 0.2
    let c = black_scholes_call(1.0, 1.0, 1.0, 0.2);
    assert!((c - 0.079_655_674_554_058).abs() < 1e-12);
    let iv = implied_vol(c, 1.0, 1.0, 1.0).unwrap();
    assert!((iv - 0.2).abs() < 1e-9);
}
