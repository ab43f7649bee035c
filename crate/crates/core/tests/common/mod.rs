//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use hkc_core::basis::{eval_theta_basis, eval_theta_grad, eval_velocity_basis, eval_velocity_grad, GridSpec};
use hkc_core::types::{Kind, ModeIndex, WaveVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const K1: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-amp..amp)).collect()
}

/// Every admissible index (either phase) with m1, m3 <= cap.
pub fn admissible_modes(cap: u32) -> Vec<ModeIndex> {
    let mut v = Vec::new();
    for kind in [Kind::U, Kind::W, Kind::Theta] {
        for m1 in 0..=cap {
            for m3 in 0..=cap {
                for p1 in [1u8, 2] {
                    if let Ok(n) = ModeIndex::new(kind, WaveVector::new(m1, m3), p1) {
                        v.push(n);
                    }
                }
            }
        }
    }
    v
}

/// Basis values and gradients sampled on a grid with trapezoid weights.
pub struct Tabulated {
    pub weights: Vec<f64>,
    /// Per point: value components (3 for velocity, 1 for temperature).
    pub values: Vec<[f64; 3]>,
    /// Per point: gradient rows (d/dx1, d/dx3) per component.
    pub grads: Vec<[[f64; 2]; 3]>,
}

pub fn grid_points(grid: &GridSpec, k1: f64) -> (Vec<[f64; 2]>, Vec<f64>) {
    let x1 = grid.x1(k1);
    let x3 = grid.x3();
    let h1 = 2.0 * PI / k1 / grid.n1() as f64;
    let h3 = PI / (grid.n3() - 1) as f64;
    let mut pts = Vec::new();
    let mut w = Vec::new();
    for (j, &z) in x3.iter().enumerate() {
        let wz = if j == 0 || j + 1 == x3.len() { 0.5 * h3 } else { h3 };
        for &x in &x1 {
            pts.push([x, z]);
            w.push(h1 * wz);
        }
    }
    (pts, w)
}

pub fn tabulate(n: &ModeIndex, grid: &GridSpec, k1: f64) -> Tabulated {
    let (pts, weights) = grid_points(grid, k1);
    let mut values = Vec::with_capacity(pts.len());
    let mut grads = Vec::with_capacity(pts.len());
    for p in &pts {
        if n.kind == Kind::Theta {
            let f = eval_theta_basis(n, *p, k1).unwrap();
            let g = eval_theta_grad(n, *p, k1).unwrap();
            values.push([f, 0.0, 0.0]);
            grads.push([g, [0.0; 2], [0.0; 2]]);
        } else {
            values.push(eval_velocity_basis(n, *p, k1).unwrap());
            grads.push(eval_velocity_grad(n, *p, k1).unwrap());
        }
    }
    Tabulated { weights, values, grads }
}

/// <g^n . (v^n' . grad) g^n''> by quadrature.
pub fn triad_quadrature(out: &Tabulated, adv: &Tabulated, inp: &Tabulated, scalar: bool) -> f64 {
    let comps = if scalar { 1 } else { 3 };
    let mut s = 0.0;
    for k in 0..out.weights.len() {
        let v = adv.values[k];
        let mut dot = 0.0;
        for c in 0..comps {
            let g = inp.grads[k][c];
            dot += out.values[k][c] * (v[0] * g[0] + v[2] * g[1]);
        }
        s += out.weights[k] * dot;
    }
    s
}

/// Composite Simpson rule on [a, b] with n (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Bisection for a sign change of f on [a, b].
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    assert!(fa * f(b) <= 0.0, "no sign change on [{a}, {b}]");
    while b - a > tol {
        let c = 0.5 * (a + b);
        let fc = f(c);
        if fa * fc <= 0.0 {
            b = c;
        } else {
            a = c;
            fa = fc;
        }
    }
    0.5 * (a + b)
}

/// Coefficients of the explicit HKC-1 system in the slot order
/// (u01, u11, w01, w11, th02, th11), as written out by hand.
pub struct Hkc1Explicit {
    pub kk: f64,
    pub c: f64,
    pub b: f64,
}

impl Hkc1Explicit {
    pub fn new(k1: f64) -> Self {
        let kk = (k1 * k1 + 1.0).sqrt();
        let v = PI / (2.0 * k1).sqrt();
        Self { kk, c: k1 / ((2.0 * (k1 * k1 + 1.0)).sqrt() * v), b: k1 / kk }
    }

    pub const LABELS: [&'static str; 6] = ["u_0_1", "u_1_1", "w_0_1", "w_1_1", "th_0_2", "th_1_1"];

    pub fn rhs(&self, x: &[f64], r: f64, s: f64, p: f64) -> Vec<f64> {
        let [u01, u11, w01, w11, t02, t11] = [x[0], x[1], x[2], x[3], x[4], x[5]];
        let k2 = self.kk * self.kk;
        vec![
            -p * u01 + p * s * w01,
            -p * k2 * u11 - p * r * self.b * t11 + p * s / self.kk * w11,
            -p * w01 - p * s * u01,
            -p * k2 * w11 - p * s / self.kk * u11,
            -4.0 * t02 + self.c * u11 * t11,
            -k2 * t11 - self.b * u11 - self.c * u11 * t02,
        ]
    }

    /// Nontrivial S = 0 equilibrium with u11 > 0, found by bisection on the
    /// scalar equation left after eliminating th11 and th02 in favor of u11^2.
    pub fn fixed_point(&self, r: f64) -> Option<[f64; 6]> {
        let k2 = self.kk * self.kk;
        let (b, c) = (self.b, self.c);
        // th11 = -k2 u / (r b); th02 = c u th11 / 4; th11 equation gives h(u^2) = 0
        let h = |sq: f64| b - c * c * k2 * sq / (4.0 * r * b) - k2 * k2 / (r * b);
        if h(0.0) <= 0.0 {
            return None;
        }
        let mut hi = 1.0;
        while h(hi) > 0.0 {
            hi *= 2.0;
        }
        let sq = bisect(h, 0.0, hi, 1e-15 * hi);
        let u = sq.sqrt();
        let t11 = -k2 * u / (r * b);
        let t02 = c * u * t11 / 4.0;
        Some([0.0, u, 0.0, 0.0, t02, t11])
    }
}
