//! Quadrature primitives shared by the kernel, transform and lift modules.
//!
//! Tanh-sinh (double exponential) quadrature handles integrable algebraic
//! endpoint singularities such as `s^{-alpha}` or `(t - s)^{alpha - 1}`. The
//! integrand receives the distances to both endpoints, computed without
//! cancellation, so singular factors can be evaluated accurately even when a
//! node sits `1e-60` away from an endpoint.

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

struct DeNode {
    weight: f64,
    /// Distance from the left endpoint of `[-1, 1]`, i.e. `1 + x`.
    from_left: f64,
    /// Distance from the right endpoint, `1 - x`.
    from_right: f64,
}

const DE_STEP: f64 = 1.0 / 16.0;
const DE_TMAX: f64 = 4.5;

fn de_nodes() -> &'static [DeNode] {
    static NODES: OnceLock<Vec<DeNode>> = OnceLock::new();
    NODES.get_or_init(|| {
        let m = (DE_TMAX / DE_STEP).round() as i64;
        let mut out = Vec::with_capacity(2 * m as usize + 1);
        for k in -m..=m {
            let t = k as f64 * DE_STEP;
            let u = FRAC_PI_2 * t.sinh();
            let cu = u.cosh();
            let weight = DE_STEP * FRAC_PI_2 * t.cosh() / (cu * cu);
            // 1 - tanh(u) = 2 / (1 + e^{2u}), 1 + tanh(u) = 2 / (1 + e^{-2u})
            let from_right = 2.0 / (1.0 + (2.0 * u).exp());
            let from_left = 2.0 / (1.0 + (-2.0 * u).exp());
            if weight > 0.0 && from_left > 0.0 && from_right > 0.0 {
                out.push(DeNode {
                    weight,
                    from_left,
                    from_right,
                });
            }
        }
        out
    })
}

/// `∫_a^b f` where `f(s - a, b - s)` is called with both endpoint distances.
pub fn tanh_sinh<F>(a: f64, b: f64, mut f: F) -> f64
where
    F: FnMut(f64, f64) -> f64,
{
    if b <= a {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    for node in de_nodes() {
        let dl = half * node.from_left;
        let dr = half * node.from_right;
        if dl <= 0.0 || dr <= 0.0 {
            continue;
        }
        sum += node.weight * f(dl, dr);
    }
    sum * half
}

/// `∫_a^b (s - a)^{-beta} f(s - a, b - s) ds` for `0 <= beta < 1` and `f`
/// bounded near `a`. The substitution `s - a = (b - a) y^{1/(1-beta)}` absorbs
/// the singular factor into the Jacobian, so `f` may be called with a zero
/// left distance.
pub fn tanh_sinh_left<F>(a: f64, b: f64, beta: f64, mut f: F) -> f64
where
    F: FnMut(f64, f64) -> f64,
{
    if beta <= 0.0 {
        return tanh_sinh(a, b, f);
    }
    if b <= a {
        return 0.0;
    }
    let w = b - a;
    let p = 1.0 / (1.0 - beta);
    let scale = w.powf(1.0 - beta) * p;
    scale
        * tanh_sinh(0.0, 1.0, |yl, yr| {
            let dl = w * yl.powf(p);
            let dr = -w * (p * (-yr).ln_1p()).exp_m1();
            if dr <= 0.0 {
                return 0.0;
            }
            f(dl, dr)
        })
}

/// Complex-valued variant of [`tanh_sinh`].
pub fn tanh_sinh_c<F>(a: f64, b: f64, mut f: F) -> num_complex::Complex64
where
    F: FnMut(f64, f64) -> num_complex::Complex64,
{
    let mut sum = num_complex::Complex64::new(0.0, 0.0);
    if b <= a {
        return sum;
    }
    let half = 0.5 * (b - a);
    for node in de_nodes() {
        let dl = half * node.from_left;
        let dr = half * node.from_right;
        if dl <= 0.0 || dr <= 0.0 {
            continue;
        }
        sum += f(dl, dr) * node.weight;
    }
    sum * half
}

/// `∫_0^∞ f(x) dx` split at `scale`; the tail is mapped to `(0, 1]` by `x = scale / y`.
pub fn semi_infinite<F>(scale: f64, mut f: F) -> f64
where
    F: FnMut(f64) -> f64,
{
    let head = tanh_sinh(0.0, scale, |dl, _| f(dl));
    let tail = tanh_sinh(0.0, 1.0, |y, _| {
        let x = scale / y;
        if !x.is_finite() {
            return 0.0;
        }
        let v = f(x) * scale / (y * y);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    });
    head + tail
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `(1 - e^{-z}) / z`, stable near zero.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// `(z - 1 + e^{-z}) / z^2`, stable near zero.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 - z / 6.0 + z * z / 24.0 - z * z * z / 120.0
    } else {
        (z + (-z).exp_m1()) / (z * z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;

    #[test]
    fn beta_integral_with_two_singular_ends() {
        let (a, b) = (0.4, 0.6);
        let got = tanh_sinh(0.0, 1.0, |dl, dr| dl.powf(a - 1.0) * dr.powf(b - 1.0));
        let want = gamma(a) * gamma(b) / gamma(a + b);
        assert!((got - want).abs() < 1e-12 * want, "{got} vs {want}");
    }

    #[test]
    fn strong_left_singularity() {
        for a in [0.01, 0.05, 0.1, 0.45] {
            let got = tanh_sinh_left(0.0, 1.0, 1.0 - a, |_, dr| dr.powf(-a));
            let want = gamma(a) * gamma(1.0 - a);
            assert!((got - want).abs() < 1e-12 * want, "{a}: {got} vs {want}");
        }
    }

    #[test]
    fn smooth_integral() {
        let got = tanh_sinh(0.0, 2.0, |dl, _| dl.exp());
        assert!((got - (2f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn semi_infinite_gamma_integral() {
        let a = 0.4;
        let got = semi_infinite(1.0, |x| x.powf(a - 1.0) * (-x).exp());
        assert!((got - gamma(a)).abs() < 1e-11);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn phi_functions_continuous_at_switch() {
        for z in [1e-4, 1e-3, 0.5, 3.0] {
            let d1 = phi1(z * (1.0 + 1e-9)) - phi1(z);
            let d2 = phi2(z * (1.0 + 1e-9)) - phi2(z);
            assert!(d1.abs() < 1e-8 && d2.abs() < 1e-8);
        }
        assert!((phi2(2.0) - (2.0 - 1.0 + (-2f64).exp()) / 4.0).abs() < 1e-15);
    }
}
