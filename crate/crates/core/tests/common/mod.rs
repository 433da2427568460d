#![allow(dead_code)]

use num_complex::Complex64 as C64;
use serde::Deserialize;
use statrs::function::gamma::gamma;

#[derive(Debug, Deserialize)]
pub struct CfPoint {
    pub z: f64,
    pub re: f64,
    pub im: f64,
}

impl CfPoint {
    pub fn value(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

#[derive(Debug, Deserialize)]
pub struct CallPoint {
    pub strike: f64,
    pub price: f64,
}

#[derive(Debug, Deserialize)]
pub struct Fixtures {
    pub charfn_flat: Vec<CfPoint>,
    pub charfn_theta: Vec<CfPoint>,
    pub mgf_u1_one_theta: CfPoint2,
    pub calls_theta: Vec<CallPoint>,
}

#[derive(Debug, Deserialize)]
pub struct CfPoint2 {
    pub re: f64,
    pub im: f64,
}

pub fn fixtures() -> Fixtures {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/heston_fixtures.json"
    );
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Classical Heston `dV = λ(θ − V)dt + ν√V dW`, `d log S = −V/2 dt + √V dB`.
#[derive(Debug, Clone, Copy)]
pub struct Heston {
    pub lambda: f64,
    pub nu: f64,
    pub rho: f64,
    pub s0: f64,
    pub v0: f64,
    pub theta: f64,
}

impl Heston {
    pub fn reference() -> Self {
        Self {
            lambda: 2.0,
            nu: 0.3,
            rho: -0.7,
            s0: 1.0,
            v0: 0.04,
            theta: 0.04,
        }
    }

    /// `log E[exp(u log S_t)]`, rotation-free form.
    pub fn log_mgf(&self, u: C64, t: f64) -> C64 {
        let b = self.lambda - self.rho * self.nu * u;
        let d = (b * b - self.nu * self.nu * (u * u - u)).sqrt();
        let g = (b - d) / (b + d);
        let e = (-d * t).exp();
        let nu2 = self.nu * self.nu;
        let psi = (b - d) / nu2 * (1.0 - e) / (1.0 - g * e);
        let phi =
            self.lambda * self.theta / nu2 * ((b - d) * t - 2.0 * ((1.0 - g * e) / (1.0 - g)).ln());
        u * self.s0.ln() + phi + self.v0 * psi
    }

    pub fn charfn(&self, z: f64, t: f64) -> C64 {
        self.log_mgf(C64::new(0.0, z), t).exp()
    }

    /// `E[V_t]`.
    pub fn mean_variance(&self, t: f64) -> f64 {
        self.theta + (self.v0 - self.theta) * (-self.lambda * t).exp()
    }
}

/// `E_α(x) = Σ x^k / Γ(αk + 1)` for moderate `|x|`.
pub fn mittag_leffler(alpha: f64, x: f64) -> f64 {
    let mut sum = 0.0;
    let mut pow = 1.0;
    for k in 0..150 {
        let term = pow / gamma(alpha * k as f64 + 1.0);
        sum += term;
        if k > 10 && term.abs() < 1e-18 {
            break;
        }
        pow *= x;
    }
    sum
}

pub fn rel_err(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm()
}
