//! Parameters, mode indices, normalizing constants and wave-vector geometry.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{HkcError, Result};

/// Admissible parameter vector (R, S, P, k1).
///
/// Admissibility (R, S >= 0 and P, k1 > 0) is checked once at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    rayleigh: f64,
    rotation: f64,
    prandtl: f64,
    aspect: f64,
}

impl Params {
    /// Validates and builds a parameter vector.
    pub fn new(rayleigh: f64, rotation: f64, prandtl: f64, aspect: f64) -> Result<Self> {
        let all_finite = [rayleigh, rotation, prandtl, aspect].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(HkcError::InvalidParams("non-finite entry".into()));
        }
        if rayleigh < 0.0 {
            return Err(HkcError::InvalidParams(format!("R = {rayleigh} < 0")));
        }
        if rotation < 0.0 {
            return Err(HkcError::InvalidParams(format!("S = {rotation} < 0")));
        }
        if prandtl <= 0.0 {
            return Err(HkcError::InvalidParams(format!("P = {prandtl} <= 0")));
        }
        if aspect <= 0.0 {
            return Err(HkcError::InvalidParams(format!("k1 = {aspect} <= 0")));
        }
        Ok(Self { rayleigh, rotation, prandtl, aspect })
    }

    /// Rayleigh number R.
    pub fn rayleigh(&self) -> f64 {
        self.rayleigh
    }

    /// Rotation number S.
    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    /// Prandtl number P.
    pub fn prandtl(&self) -> f64 {
        self.prandtl
    }

    /// Horizontal wave number k1 of the periodic direction.
    pub fn aspect(&self) -> f64 {
        self.aspect
    }

    /// Copy with a different Rayleigh number.
    pub fn with_rayleigh(&self, rayleigh: f64) -> Result<Self> {
        Self::new(rayleigh, self.rotation, self.prandtl, self.aspect)
    }

    /// Copy with a different rotation number.
    pub fn with_rotation(&self, rotation: f64) -> Result<Self> {
        Self::new(self.rayleigh, rotation, self.prandtl, self.aspect)
    }

    /// Domain constants for this aspect ratio.
    pub fn domain(&self) -> DomainConstants {
        DomainConstants::new(self.aspect)
    }
}

/// Wave vector (m1, m3) of a horizontally aligned Fourier mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WaveVector {
    pub m1: u32,
    pub m3: u32,
}

impl WaveVector {
    pub const fn new(m1: u32, m3: u32) -> Self {
        Self { m1, m3 }
    }

    pub fn is_zero(&self) -> bool {
        self.m1 == 0 && self.m3 == 0
    }

    /// True for m in Z^2 with both entries positive.
    pub fn is_interior(&self) -> bool {
        self.m1 > 0 && self.m3 > 0
    }

    /// |m|_1 = m1 + m3, the shell index.
    pub fn shell(&self) -> u32 {
        self.m1 + self.m3
    }

    /// Layout sort key (m1 + m3, m1, m3).
    pub fn layout_key(&self) -> (u32, u32, u32) {
        (self.shell(), self.m1, self.m3)
    }

    /// |Km|^2 = k1^2 m1^2 + m3^2.
    pub fn km_sq(&self, k1: f64) -> f64 {
        let a = k1 * self.m1 as f64;
        let b = self.m3 as f64;
        a * a + b * b
    }
}

impl fmt::Display for WaveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.m1, self.m3)
    }
}

/// Which scalar field a mode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Velocity in the x1-x3 plane (component index c = 1).
    U,
    /// Velocity along x2 (component index c = 2).
    W,
    /// Temperature deviation.
    Theta,
}

impl Kind {
    /// Component index c used by the coefficient formulas.
    pub fn component(&self) -> u8 {
        match self {
            Kind::U | Kind::Theta => 1,
            Kind::W => 2,
        }
    }

    pub fn is_velocity(&self) -> bool {
        !matches!(self, Kind::Theta)
    }

    /// Short label used in CSV headers.
    pub fn label(&self) -> &'static str {
        match self {
            Kind::U => "u",
            Kind::W => "w",
            Kind::Theta => "th",
        }
    }

    /// Parses the CSV label or the JSON spelling.
    pub fn from_label(s: &str) -> Option<Kind> {
        match s {
            "u" => Some(Kind::U),
            "w" => Some(Kind::W),
            "th" | "theta" => Some(Kind::Theta),
            _ => None,
        }
    }
}

/// Maps any integer into the phase/component range {1, 2} modulo 2.
pub fn wrap12(x: i64) -> u8 {
    ((x - 1).rem_euclid(2) + 1) as u8
}

/// Phase selected by the locking rule p1 = m1 + m3 + 1 (mod 2).
pub fn locked_phase(m: WaveVector) -> u8 {
    wrap12(m.m1 as i64 + m.m3 as i64 + 1)
}

/// Admissible horizontal phases P^m.
pub fn phase_set(m: WaveVector) -> &'static [u8] {
    if m.m1 > 0 {
        &[1, 2]
    } else {
        &[1]
    }
}

/// Admissible velocity components C^m.
pub fn component_set(m: WaveVector) -> &'static [u8] {
    if m.m3 > 0 {
        &[1, 2]
    } else {
        &[2]
    }
}

/// Typed Fourier index n = (m, p1, c) together with its field kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeIndex {
    pub kind: Kind,
    pub m: WaveVector,
    pub p1: u8,
}

impl ModeIndex {
    /// Builds an index and checks admissibility.
    pub fn new(kind: Kind, m: WaveVector, p1: u8) -> Result<Self> {
        let n = Self { kind, m, p1 };
        if n.is_admissible() {
            Ok(n)
        } else {
            Err(HkcError::InadmissibleMode(n.to_string()))
        }
    }

    /// Builds the phase-locked index for `m`.
    pub fn locked(kind: Kind, m: WaveVector) -> Result<Self> {
        Self::new(kind, m, locked_phase(m))
    }

    /// Component index c.
    pub fn c(&self) -> u8 {
        self.kind.component()
    }

    /// Admissibility of the wave vector, phase and component.
    pub fn is_admissible(&self) -> bool {
        if self.p1 != 1 && self.p1 != 2 {
            return false;
        }
        match self.kind {
            Kind::Theta => self.m.m3 > 0 && phase_set(self.m).contains(&self.p1),
            Kind::U | Kind::W => {
                !self.m.is_zero()
                    && phase_set(self.m).contains(&wrap12(self.p1 as i64 + 1))
                    && component_set(self.m).contains(&self.c())
            }
        }
    }

    /// True when the phase agrees with the locking rule.
    pub fn is_phase_locked(&self) -> bool {
        self.p1 == locked_phase(self.m)
    }

    /// CSV slot label, e.g. `u_1_1` or `th_0_2`.
    pub fn label(&self) -> String {
        format!("{}_{}_{}", self.kind.label(), self.m.m1, self.m.m3)
    }

    /// Parses a slot label back into a phase-locked index.
    pub fn from_label(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('_').collect();
        let bad = || HkcError::InvalidInput(format!("bad slot label '{s}'"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let kind = Kind::from_label(parts[0]).ok_or_else(bad)?;
        let m1 = parts[1].parse().map_err(|_| bad())?;
        let m3 = parts[2].parse().map_err(|_| bad())?;
        Self::locked(kind, WaveVector::new(m1, m3))
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{} p1={} c={}", self.kind.label(), self.m, self.p1, self.c())
    }
}

/// eta for a single wave number: 1 if positive, 1/sqrt(2) if zero.
pub fn eta1(k: u32) -> f64 {
    if k > 0 {
        1.0
    } else {
        FRAC_1_SQRT_2
    }
}

/// eta(m) = eta(m1) eta(m3).
pub fn normalizer_eta(m: WaveVector) -> f64 {
    eta1(m.m1) * eta1(m.m3)
}

/// |Km| = sqrt(k1^2 m1^2 + m3^2); the zero wave vector is rejected.
pub fn km_norm(m: WaveVector, k1: f64) -> Result<f64> {
    if m.is_zero() {
        return Err(HkcError::ZeroWaveVector);
    }
    Ok(m.km_sq(k1).sqrt())
}

/// Constants fixed by the aspect ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainConstants {
    pub k1: f64,
    /// V = sqrt(pi^2 / (2 k1)).
    pub v: f64,
}

impl DomainConstants {
    pub fn new(k1: f64) -> Self {
        Self { k1, v: (PI * PI / (2.0 * k1)).sqrt() }
    }

    /// Horizontal period 2 pi / k1.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.k1
    }

    /// |Omega| = 2 pi^2 / k1.
    pub fn volume(&self) -> f64 {
        2.0 * PI * PI / self.k1
    }
}
