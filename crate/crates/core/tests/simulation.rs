mod common;

use common::Heston;
use num_complex::Complex64 as C64;
use volterra_heston::lift::{discretize_measure, simulate_lift, NodeRule};
use volterra_heston::montecarlo::{
    mc_stats, simulate, ForwardEvolver, Functional, McStats, Storage,
};
use volterra_heston::transform::{fourier_laplace, TransformSolver};
use volterra_heston::*;

fn params() -> ModelParams {
    ModelParams::new(2.0, 0.3, -0.7, 1.0).unwrap()
}

#[test]
fn classical_monte_carlo_matches_closed_form() {
    let h = Heston::reference();
    let one = Kernel::constant(1.0).unwrap();
    let g = InputCurve::classical(h.v0, h.theta, h.lambda, &one).unwrap();
    let grid = TimeGrid::with_horizon(1.0, 1.0 / 250.0).unwrap();
    let ps = simulate(&params(), &g, &one, &grid, 40_000, 9, Storage::Terminal).unwrap();
    for z in [0.5, 1.0, 2.0] {
        let st = mc_stats(&ps, &Functional::CharFn { z });
        assert!(
            st.within(h.charfn(z, 1.0), 3.0),
            "z = {z}: {} vs {}",
            st.mean,
            h.charfn(z, 1.0)
        );
    }
    let st = mc_stats(&ps, &Functional::TerminalVMoment { p: 1 });
    assert!(st.within(C64::new(h.mean_variance(1.0), 0.0), 3.0));
}

#[test]
fn exact_lift_tracks_the_volterra_paths() {
    let k = Kernel::exp_sum(&[(0.6, 0.3), (0.4, 2.0)]).unwrap();
    let p = params();
    let g = InputCurve::classical(0.04, 0.04, p.lambda, &k).unwrap();
    let grid = TimeGrid::with_horizon(1.0, 1e-3).unwrap();
    let dm = discretize_measure(&k, 2, &grid, NodeRule::default()).unwrap();
    let n = 200;
    let volterra = simulate(&p, &g, &k, &grid, n, 4, Storage::Full { increments: false }).unwrap();
    let lift = simulate_lift(&[0.0, 0.0], &g, &dm, &p, &grid, n, 4, &[]).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..n {
        let a = volterra.v_path(i).unwrap();
        let b = lift.v_path(i);
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    assert!(worst < 2e-3, "max |V - V_lift| = {worst}");
}

#[test]
fn noiseless_paths_follow_the_forward_variance() {
    let k = Kernel::fractional(1.0, 0.7).unwrap();
    let p = ModelParams::new(1.5, 0.0, 0.0, 1.0).unwrap();
    let g = InputCurve::classical(0.09, 0.04, p.lambda, &k).unwrap();
    let grid = TimeGrid::with_horizon(1.0, 1e-3).unwrap();
    let ps = simulate(&p, &g, &k, &grid, 3, 0, Storage::Full { increments: false }).unwrap();
    let fv = volterra_heston::curves::forward_variance(&g, p.lambda, &k, &grid);
    let v = ps.v_path(2).unwrap();
    let worst = v
        .iter()
        .zip(&fv)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3 * 0.09, "{worst}");
    assert_eq!(ps.v_path(0).unwrap(), v);
}

#[test]
fn conditional_transforms_average_to_the_unconditional_one() {
    let k = Kernel::fractional(1.0, 0.6).unwrap();
    let p = params();
    let g = InputCurve::classical(0.04, 0.04, p.lambda, &k).unwrap();
    let dt = 2e-3;
    let grid = TimeGrid::with_horizon(1.0, dt).unwrap();
    let half = TimeGrid::with_horizon(0.5, dt).unwrap();
    let arg = FLArgument::charfn(1.0);
    let want = fourier_laplace(&k, &p, &g, &arg, &grid, Scheme::default())
        .unwrap()
        .value;

    let n_paths = 5000;
    let ps = simulate(
        &p,
        &g,
        &k,
        &half,
        n_paths,
        21,
        Storage::Full { increments: true },
    )
    .unwrap();
    let ev = ForwardEvolver::new(&ps, 0.5, &k, half.n_steps()).unwrap();
    let solver = TransformSolver::new(&k, &p, &arg, &half, Scheme::default()).unwrap();
    let vals: Vec<C64> = (0..n_paths)
        .map(|i| {
            let gt = ev.values(&ps, i, &g).unwrap();
            solver.evaluate(&gt, ps.log_s_terminal(i)).value
        })
        .collect();
    let st = McStats::from_complex(&vals);
    assert!(
        st.within(want, 3.0),
        "{} vs {want}, se {}",
        st.mean,
        st.stderr
    );
}
