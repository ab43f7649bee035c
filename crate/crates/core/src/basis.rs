//! Trigonometric basis functions, field reconstruction and the quadrature oracle.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{HkcError, Result};
use crate::hierarchy::ModelSpec;
use crate::types::{km_norm, normalizer_eta, DomainConstants, Kind, ModeIndex};

/// Point (x1, x3) in the periodic channel.
pub type Point = [f64; 2];

/// Uniform tensor grid: periodic in x1, endpoints included in x3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    n1: usize,
    n3: usize,
}

impl GridSpec {
    pub fn new(n1: usize, n3: usize) -> Result<Self> {
        if n1 < 4 || n3 < 4 {
            return Err(HkcError::InvalidInput(format!("grid {n1}x{n3} below 4x4")));
        }
        Ok(Self { n1, n3 })
    }

    /// Parses `n1xn3`, e.g. `128x64`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || HkcError::InvalidInput(format!("bad grid '{s}', expected N1xN3"));
        let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let n1 = a.trim().parse().map_err(|_| bad())?;
        let n3 = b.trim().parse().map_err(|_| bad())?;
        Self::new(n1, n3)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n3(&self) -> usize {
        self.n3
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid abscissae in x1 over [0, 2 pi / k1).
    pub fn x1(&self, k1: f64) -> Vec<f64> {
        let h = 2.0 * PI / k1 / self.n1 as f64;
        (0..self.n1).map(|i| i as f64 * h).collect()
    }

    /// Grid abscissae in x3 over [0, pi].
    pub fn x3(&self) -> Vec<f64> {
        let h = PI / (self.n3 - 1) as f64;
        (0..self.n3).map(|j| j as f64 * h).collect()
    }

    /// Trapezoidal weights in x3.
    fn w3(&self) -> Vec<f64> {
        let h = PI / (self.n3 - 1) as f64;
        (0..self.n3).map(|j| if j == 0 || j == self.n3 - 1 { 0.5 * h } else { h }).collect()
    }
}

fn check_kind(n: &ModeIndex, velocity: bool) -> Result<()> {
    if !n.is_admissible() || n.kind.is_velocity() != velocity {
        return Err(HkcError::InadmissibleMode(n.to_string()));
    }
    Ok(())
}

/// Amplitudes and angles shared by the evaluation routines.
struct Local {
    a: f64,
    b: f64,
    km1: f64,
    m3: f64,
}

impl Local {
    fn new(n: &ModeIndex, x: Point, k1: f64) -> Self {
        let km1 = k1 * n.m.m1 as f64;
        let m3 = n.m.m3 as f64;
        Self { a: km1 * x[0], b: m3 * x[1], km1, m3 }
    }
}

/// Velocity basis function v^n(x) as (v1, v2, v3).
pub fn eval_velocity_basis(n: &ModeIndex, x: Point, k1: f64) -> Result<[f64; 3]> {
    check_kind(n, true)?;
    let d = DomainConstants::new(k1);
    let eta = normalizer_eta(n.m);
    let l = Local::new(n, x, k1);
    let (sa, ca) = l.a.sin_cos();
    let (sb, cb) = l.b.sin_cos();
    Ok(match (n.p1, n.c()) {
        (1, 1) => {
            let amp = eta / (km_norm(n.m, k1)? * d.v);
            [amp * l.m3 * sa * cb, 0.0, -amp * l.km1 * ca * sb]
        }
        (2, 1) => {
            let amp = eta / (km_norm(n.m, k1)? * d.v);
            [amp * l.m3 * ca * cb, 0.0, amp * l.km1 * sa * sb]
        }
        (1, _) => [0.0, eta / d.v * sa * cb, 0.0],
        _ => [0.0, eta / d.v * ca * cb, 0.0],
    })
}

/// Gradient of v^n: row i holds (d v_i/d x1, d v_i/d x3).
pub fn eval_velocity_grad(n: &ModeIndex, x: Point, k1: f64) -> Result<[[f64; 2]; 3]> {
    check_kind(n, true)?;
    let d = DomainConstants::new(k1);
    let eta = normalizer_eta(n.m);
    let l = Local::new(n, x, k1);
    let (sa, ca) = l.a.sin_cos();
    let (sb, cb) = l.b.sin_cos();
    let (k, m) = (l.km1, l.m3);
    Ok(match (n.p1, n.c()) {
        (1, 1) => {
            let amp = eta / (km_norm(n.m, k1)? * d.v);
            [
                [amp * m * k * ca * cb, -amp * m * m * sa * sb],
                [0.0, 0.0],
                [amp * k * k * sa * sb, -amp * k * m * ca * cb],
            ]
        }
        (2, 1) => {
            let amp = eta / (km_norm(n.m, k1)? * d.v);
            [
                [-amp * m * k * sa * cb, -amp * m * m * ca * sb],
                [0.0, 0.0],
                [amp * k * k * ca * sb, amp * k * m * sa * cb],
            ]
        }
        (1, _) => {
            let amp = eta / d.v;
            [[0.0, 0.0], [amp * k * ca * cb, -amp * m * sa * sb], [0.0, 0.0]]
        }
        _ => {
            let amp = eta / d.v;
            [[0.0, 0.0], [-amp * k * sa * cb, -amp * m * ca * sb], [0.0, 0.0]]
        }
    })
}

/// Temperature basis function f^n(x).
pub fn eval_theta_basis(n: &ModeIndex, x: Point, k1: f64) -> Result<f64> {
    check_kind(n, false)?;
    let d = DomainConstants::new(k1);
    let amp = normalizer_eta(n.m) / d.v;
    let l = Local::new(n, x, k1);
    let h = if n.p1 == 1 { l.a.cos() } else { l.a.sin() };
    Ok(amp * h * l.b.sin())
}

/// Gradient (d/dx1, d/dx3) of f^n.
pub fn eval_theta_grad(n: &ModeIndex, x: Point, k1: f64) -> Result<[f64; 2]> {
    check_kind(n, false)?;
    let d = DomainConstants::new(k1);
    let amp = normalizer_eta(n.m) / d.v;
    let l = Local::new(n, x, k1);
    let (sa, ca) = l.a.sin_cos();
    let (sb, cb) = l.b.sin_cos();
    Ok(if n.p1 == 1 {
        [-amp * l.km1 * sa * sb, amp * l.m3 * ca * cb]
    } else {
        [amp * l.km1 * ca * sb, amp * l.m3 * sa * cb]
    })
}

/// Trapezoidal integral of `f` over the domain.
///
/// Exact for trigonometric polynomials resolved by the grid whose x3 part is a
/// cosine series; resolution is the caller's responsibility.
pub fn quadrature<F>(grid: &GridSpec, k1: f64, f: F) -> f64
where
    F: Fn(Point) -> f64,
{
    let x1 = grid.x1(k1);
    let x3 = grid.x3();
    let w1 = 2.0 * PI / k1 / grid.n1 as f64;
    let w3 = grid.w3();
    let mut total = 0.0;
    for (j, &z) in x3.iter().enumerate() {
        let row: f64 = x1.iter().map(|&x| f([x, z])).sum();
        total += w3[j] * row;
    }
    total * w1
}

/// Inner product of two scalar fields by quadrature.
pub fn quadrature_inner_product<A, B>(grid: &GridSpec, k1: f64, a: A, b: B) -> f64
where
    A: Fn(Point) -> f64,
    B: Fn(Point) -> f64,
{
    quadrature(grid, k1, |x| a(x) * b(x))
}

/// Inner product of two vector fields by quadrature.
pub fn quadrature_inner_product_vec<A, B>(grid: &GridSpec, k1: f64, a: A, b: B) -> f64
where
    A: Fn(Point) -> [f64; 3],
    B: Fn(Point) -> [f64; 3],
{
    quadrature(grid, k1, |x| {
        let (p, q) = (a(x), b(x));
        p[0] * q[0] + p[1] * q[1] + p[2] * q[2]
    })
}

/// Physical fields reconstructed on a grid, stored row-major in x3 then x1.
#[derive(Debug, Clone)]
pub struct FieldSnapshot {
    pub grid: GridSpec,
    pub x1: Vec<f64>,
    pub x3: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub u3: Vec<f64>,
    pub theta: Vec<f64>,
    /// Total temperature T = 1 - x3/pi + theta/pi.
    pub t: Vec<f64>,
}

impl FieldSnapshot {
    /// Flat index of grid point (i1, j3).
    pub fn index(&self, i1: usize, j3: usize) -> usize {
        j3 * self.grid.n1 + i1
    }

    /// Writes `x1,x3,u1,u2,u3,theta,T` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x1", "x3", "u1", "u2", "u3", "theta", "T"])?;
        for j in 0..self.grid.n3 {
            for i in 0..self.grid.n1 {
                let k = self.index(i, j);
                let row = [self.x1[i], self.x3[j], self.u1[k], self.u2[k], self.u3[k], self.theta[k], self.t[k]];
                w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Float formatting used by every CSV writer.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_state(spec: &ModelSpec, state: &[f64]) -> Result<()> {
    if state.len() != spec.dim() {
        return Err(HkcError::DimensionMismatch { expected: spec.dim(), got: state.len() });
    }
    Ok(())
}

/// Sums coefficient times basis function over every mode of the spec.
pub fn reconstruct_fields(spec: &ModelSpec, state: &[f64], grid: &GridSpec, k1: f64) -> Result<FieldSnapshot> {
    check_state(spec, state)?;
    let x1 = grid.x1(k1);
    let x3 = grid.x3();
    let n = grid.len();
    let (mut u1, mut u2, mut u3) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut theta = vec![0.0; n];
    for (slot, mode) in spec.layout().iter().enumerate() {
        let c = state[slot];
        if c == 0.0 {
            continue;
        }
        for (j, &z) in x3.iter().enumerate() {
            for (i, &x) in x1.iter().enumerate() {
                let k = j * grid.n1 + i;
                if mode.kind == Kind::Theta {
                    theta[k] += c * eval_theta_basis(mode, [x, z], k1)?;
                } else {
                    let v = eval_velocity_basis(mode, [x, z], k1)?;
                    u1[k] += c * v[0];
                    u2[k] += c * v[1];
                    u3[k] += c * v[2];
                }
            }
        }
    }
    let t = (0..n).map(|k| 1.0 - x3[k / grid.n1] / PI + theta[k] / PI).collect();
    Ok(FieldSnapshot { grid: *grid, x1, x3, u1, u2, u3, theta, t })
}

/// Divergence d u1/d x1 + d u3/d x3 of the reconstructed velocity, from exact derivatives.
pub fn reconstruct_divergence(spec: &ModelSpec, state: &[f64], grid: &GridSpec, k1: f64) -> Result<Vec<f64>> {
    check_state(spec, state)?;
    let x1 = grid.x1(k1);
    let x3 = grid.x3();
    let mut div = vec![0.0; grid.len()];
    for (slot, mode) in spec.layout().iter().enumerate() {
        if mode.kind == Kind::Theta || state[slot] == 0.0 {
            continue;
        }
        for (j, &z) in x3.iter().enumerate() {
            for (i, &x) in x1.iter().enumerate() {
                let g = eval_velocity_grad(mode, [x, z], k1)?;
                div[j * grid.n1 + i] += state[slot] * (g[0][0] + g[2][1]);
            }
        }
    }
    Ok(div)
}
