//! Closed-form linear and quadratic coupling coefficients of the projected equations.

use serde::Serialize;

use crate::error::{HkcError, Result};
use crate::types::{km_norm, normalizer_eta, wrap12, DomainConstants, Kind, ModeIndex, Params};

/// Phase patterns xi^1..xi^4 of the horizontal triple integrals.
pub const XI: [[u8; 3]; 4] = [[1, 1, 1], [1, 2, 2], [2, 1, 2], [2, 2, 1]];

/// Phase shifts applied by the maps rho^1..rho^4.
const RHO_SHIFT: [[u8; 3]; 4] = [[1, 1, 0], [1, 0, 1], [0, 1, 1], [0, 0, 0]];

/// Output mode n, advecting velocity n' and advected mode n''.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Triad {
    pub n: ModeIndex,
    pub n_prime: ModeIndex,
    pub n_dprime: ModeIndex,
}

impl Triad {
    pub fn new(n: ModeIndex, n_prime: ModeIndex, n_dprime: ModeIndex) -> Self {
        Self { n, n_prime, n_dprime }
    }

    /// Phase triple phi = (p1, p1', p1'').
    pub fn phases(&self) -> [u8; 3] {
        [self.n.p1, self.n_prime.p1, self.n_dprime.p1]
    }

    /// Horizontal wave numbers mu^1 = (m1, m1', m1'').
    pub fn mu1(&self) -> [u32; 3] {
        [self.n.m.m1, self.n_prime.m.m1, self.n_dprime.m.m1]
    }

    /// Vertical wave numbers mu^3 = (m3, m3', m3'').
    pub fn mu3(&self) -> [u32; 3] {
        [self.n.m.m3, self.n_prime.m.m3, self.n_dprime.m.m3]
    }
}

/// Triad together with its coefficient value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientRecord {
    pub triad: Triad,
    pub value: f64,
}

/// One of the three wave numbers equals the sum of the other two.
fn convolves(mu: [u32; 3]) -> bool {
    let [a, b, c] = mu;
    a == b + c || b == a + c || c == a + b
}

/// Compatibility of a triad: convolution rule in both directions, an
/// admissible phase pattern, an advecting u mode and matching advected kind.
pub fn is_compatible(t: &Triad) -> bool {
    if t.n_prime.kind != Kind::U {
        return false;
    }
    if t.n_dprime.kind != t.n.kind {
        return false;
    }
    if !(t.n.is_admissible() && t.n_prime.is_admissible() && t.n_dprime.is_admissible()) {
        return false;
    }
    convolves(t.mu1()) && convolves(t.mu3()) && XI.contains(&t.phases())
}

/// S^{a1,a2,a3} = -1 iff a1 = a2 + a3.
fn big_s(a1: u32, a2: u32, a3: u32) -> f64 {
    if a1 == a2 + a3 {
        -1.0
    } else {
        1.0
    }
}

/// Sign coefficient s^{(mu, xi^k)} for k in 1..=4.
pub fn sign_coeff(mu: [u32; 3], k: usize) -> f64 {
    let [m, mp, mpp] = mu;
    match k {
        1 => 1.0,
        2 => big_s(m, mp, mpp),
        3 => big_s(mp, mpp, m),
        4 => big_s(mpp, m, mp),
        _ => panic!("xi index {k} outside 1..=4"),
    }
}

/// s^{(mu, phi)} for an arbitrary phase triple; zero off the xi patterns,
/// where the horizontal triple integral vanishes.
fn sign_for_pattern(mu: [u32; 3], phi: [u8; 3]) -> f64 {
    match XI.iter().position(|x| *x == phi) {
        Some(k) => sign_coeff(mu, k + 1),
        None => 0.0,
    }
}

fn rho(j: usize, phi: [u8; 3]) -> [u8; 3] {
    let s = RHO_SHIFT[j - 1];
    [wrap12((phi[0] + s[0]) as i64), wrap12((phi[1] + s[1]) as i64), wrap12((phi[2] + s[2]) as i64)]
}

fn parity(p: u8) -> f64 {
    if p.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// zeta^{alpha, j} for j in {1, 3}.
pub fn zeta(t: &Triad, j: usize) -> Result<f64> {
    if j != 1 && j != 3 {
        return Err(HkcError::InvalidInput(format!("zeta index {j} not in {{1, 3}}")));
    }
    if !is_compatible(t) {
        return Err(HkcError::IncompatibleTriad);
    }
    Ok(zeta_unchecked(t, j))
}

fn zeta_unchecked(t: &Triad, j: usize) -> f64 {
    let phi = t.phases();
    let (mu1, mu3) = (t.mu1(), t.mu3());
    let m1p = t.n_prime.m.m1 as f64;
    let m3p = t.n_prime.m.m3 as f64;
    let m1pp = t.n_dprime.m.m1 as f64;
    let m3pp = t.n_dprime.m.m3 as f64;
    let first = parity(phi[2]) * m3p * m1pp * sign_for_pattern(mu1, rho(j, phi)) * sign_coeff(mu3, j);
    let second = parity(phi[1]) * m1p * m3pp * sign_for_pattern(mu1, rho(j + 1, phi)) * sign_coeff(mu3, j + 1);
    first + second
}

/// C^alpha = k1 / (4 eta^m eta^m' eta^m'' |Km'| V).
fn prefactor(t: &Triad, k1: f64) -> f64 {
    let d = DomainConstants::new(k1);
    let etas = normalizer_eta(t.n.m) * normalizer_eta(t.n_prime.m) * normalizer_eta(t.n_dprime.m);
    // n' is a compatible u mode, so m' is nonzero
    let kmp = t.n_prime.m.km_sq(k1).sqrt();
    k1 / (4.0 * etas * kmp * d.v)
}

/// I_theta = <f^n (v^n' . grad) f^n''>, zero for incompatible triads.
pub fn coeff_theta(t: &Triad, k1: f64) -> f64 {
    if t.n.kind != Kind::Theta || !is_compatible(t) {
        return 0.0;
    }
    prefactor(t, k1) * zeta_unchecked(t, 3)
}

/// I_u = <v^n . (v^n' . grad) v^n''>, zero for incompatible triads.
pub fn coeff_velocity(t: &Triad, k1: f64) -> f64 {
    if !t.n.kind.is_velocity() || !is_compatible(t) {
        return 0.0;
    }
    let c = prefactor(t, k1);
    match t.n.kind {
        Kind::U => {
            let km = t.n.m.km_sq(k1).sqrt();
            let kmpp = t.n_dprime.m.km_sq(k1).sqrt();
            let m3 = t.n.m.m3 as f64;
            let m3pp = t.n_dprime.m.m3 as f64;
            let m1 = t.n.m.m1 as f64;
            let m1pp = t.n_dprime.m.m1 as f64;
            let sign = parity(t.n.p1 + t.n_dprime.p1);
            c * (-m3 * m3pp * zeta_unchecked(t, 1) + sign * k1 * k1 * m1 * m1pp * zeta_unchecked(t, 3)) / (km * kmpp)
        }
        _ => -c * zeta_unchecked(t, 1),
    }
}

/// Coefficient for any triad, dispatching on the output kind.
pub fn interaction_coefficient(t: &Triad, k1: f64) -> f64 {
    match t.n.kind {
        Kind::Theta => coeff_theta(t, k1),
        _ => coeff_velocity(t, k1),
    }
}

/// Linear terms acting on one mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCouplings {
    /// -P |Km|^2 for velocity, -|Km|^2 for temperature.
    pub diffusion: f64,
    /// Buoyancy partner and coefficient, absent when m1 = 0 or c = 2.
    pub buoyancy: Option<(ModeIndex, f64)>,
    /// Coriolis partner and coefficient, absent for temperature or m3 = 0.
    pub coriolis: Option<(ModeIndex, f64)>,
}

/// Diffusion, buoyancy and Coriolis couplings of mode `n`.
pub fn linear_couplings(n: &ModeIndex, params: &Params) -> Result<LinearCouplings> {
    if !n.is_admissible() {
        return Err(HkcError::InadmissibleMode(n.to_string()));
    }
    let k1 = params.aspect();
    let pr = params.prandtl();
    let km = km_norm(n.m, k1)?;
    let ksq = km * km;
    let sign = parity(n.p1);
    let b = sign * k1 * n.m.m1 as f64 / km;
    let buoyant = n.m.m1 > 0 && n.c() == 1;
    match n.kind {
        Kind::Theta => {
            let partner = ModeIndex { kind: Kind::U, ..*n };
            Ok(LinearCouplings { diffusion: -ksq, buoyancy: buoyant.then_some((partner, b)), coriolis: None })
        }
        Kind::U | Kind::W => {
            let buoyancy = if n.kind == Kind::U && buoyant {
                Some((ModeIndex { kind: Kind::Theta, ..*n }, pr * params.rayleigh() * b))
            } else {
                None
            };
            let coriolis = if n.m.m3 > 0 {
                let other = if n.kind == Kind::U { Kind::W } else { Kind::U };
                let coeff = -parity(n.c()) * pr * params.rotation() * n.m.m3 as f64 / km;
                Some((ModeIndex { kind: other, ..*n }, coeff))
            } else {
                None
            };
            Ok(LinearCouplings { diffusion: -pr * ksq, buoyancy, coriolis })
        }
    }
}
