//! Mode-selection criteria and the HKC hierarchy construction.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{HkcError, Result};
use crate::types::{Kind, ModeIndex, WaveVector};

/// Three wave-vector sets plus the state-vector layout they induce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    level: u32,
    u: Vec<WaveVector>,
    w: Vec<WaveVector>,
    theta: Vec<WaveVector>,
    layout: Vec<ModeIndex>,
}

fn sorted(set: &BTreeSet<WaveVector>) -> Vec<WaveVector> {
    let mut v: Vec<WaveVector> = set.iter().copied().collect();
    v.sort_by_key(|m| m.layout_key());
    v
}

impl ModelSpec {
    /// Builds a phase-locked spec; level 0 marks a custom model.
    pub fn new<I, J, K>(level: u32, u: I, w: J, theta: K) -> Result<Self>
    where
        I: IntoIterator<Item = WaveVector>,
        J: IntoIterator<Item = WaveVector>,
        K: IntoIterator<Item = WaveVector>,
    {
        let u: BTreeSet<_> = u.into_iter().collect();
        let w: BTreeSet<_> = w.into_iter().collect();
        let theta: BTreeSet<_> = theta.into_iter().collect();
        let (u, w, theta) = (sorted(&u), sorted(&w), sorted(&theta));
        let mut layout = Vec::with_capacity(u.len() + w.len() + theta.len());
        for (kind, set) in [(Kind::U, &u), (Kind::W, &w), (Kind::Theta, &theta)] {
            for m in set {
                layout.push(ModeIndex::locked(kind, *m)?);
            }
        }
        Ok(Self { level, u, w, theta, layout })
    }

    /// Custom spec with level 0.
    pub fn custom<I, J, K>(u: I, w: J, theta: K) -> Result<Self>
    where
        I: IntoIterator<Item = WaveVector>,
        J: IntoIterator<Item = WaveVector>,
        K: IntoIterator<Item = WaveVector>,
    {
        Self::new(0, u, w, theta)
    }

    /// Builds a spec from a layout of phase-locked indices.
    pub fn from_modes(level: u32, modes: &[ModeIndex]) -> Result<Self> {
        for n in modes {
            if !n.is_phase_locked() {
                return Err(HkcError::InadmissibleMode(format!("{n} is not phase locked")));
            }
        }
        let pick = |k: Kind| modes.iter().filter(move |n| n.kind == k).map(|n| n.m);
        Self::new(level, pick(Kind::U), pick(Kind::W), pick(Kind::Theta))
    }

    /// Hierarchy level M, or 0 for a custom spec.
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn u(&self) -> &[WaveVector] {
        &self.u
    }

    pub fn w(&self) -> &[WaveVector] {
        &self.w
    }

    pub fn theta(&self) -> &[WaveVector] {
        &self.theta
    }

    /// Wave-vector set of the given kind.
    pub fn set(&self, kind: Kind) -> &[WaveVector] {
        match kind {
            Kind::U => &self.u,
            Kind::W => &self.w,
            Kind::Theta => &self.theta,
        }
    }

    /// Slot-ordered mode indices.
    pub fn layout(&self) -> &[ModeIndex] {
        &self.layout
    }

    /// State dimension |M_u| + |M_w| + |M_theta|.
    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn contains(&self, kind: Kind, m: WaveVector) -> bool {
        self.set(kind).binary_search_by_key(&m.layout_key(), |v| v.layout_key()).is_ok()
    }

    /// Slot of the mode (kind, m), if present.
    pub fn slot(&self, kind: Kind, m: WaveVector) -> Option<usize> {
        let base = match kind {
            Kind::U => 0,
            Kind::W => self.u.len(),
            Kind::Theta => self.u.len() + self.w.len(),
        };
        self.set(kind).binary_search_by_key(&m.layout_key(), |v| v.layout_key()).ok().map(|i| base + i)
    }

    /// Copy without the mode (kind, m); the result is a custom spec.
    pub fn without(&self, kind: Kind, m: WaveVector) -> Result<Self> {
        let drop = |k: Kind| self.set(k).iter().copied().filter(move |v| !(k == kind && *v == m)).collect::<Vec<_>>();
        Self::custom(drop(Kind::U), drop(Kind::W), drop(Kind::Theta))
    }

    /// Copy with an extra mode (kind, m); the result is a custom spec.
    pub fn with(&self, kind: Kind, m: WaveVector) -> Result<Self> {
        let add = |k: Kind| {
            let mut v = self.set(k).to_vec();
            if k == kind {
                v.push(m);
            }
            v
        };
        Self::custom(add(Kind::U), add(Kind::W), add(Kind::Theta))
    }

    /// Serializable form with a stable field order.
    pub fn to_json_value(&self) -> SpecJson {
        let pairs = |s: &[WaveVector]| s.iter().map(|m| [m.m1, m.m3]).collect();
        SpecJson {
            level: self.level,
            u: pairs(&self.u),
            w: pairs(&self.w),
            theta: pairs(&self.theta),
            layout: self
                .layout
                .iter()
                .enumerate()
                .map(|(slot, n)| LayoutJson { kind: n.kind, m: [n.m.m1, n.m.m3], p1: n.p1, slot })
                .collect(),
        }
    }

    /// Pretty JSON text.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json_value())?)
    }

    /// Parses JSON and checks that the stored layout matches the sets.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SpecJson = serde_json::from_str(text)?;
        let vecs = |s: &[[u32; 2]]| s.iter().map(|p| WaveVector::new(p[0], p[1])).collect::<Vec<_>>();
        let spec = Self::new(raw.level, vecs(&raw.u), vecs(&raw.w), vecs(&raw.theta))?;
        if !raw.layout.is_empty() && raw.layout != spec.to_json_value().layout {
            return Err(HkcError::InvalidInput("layout does not match the wave-vector sets".into()));
        }
        Ok(spec)
    }
}

/// JSON representation of a spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecJson {
    #[serde(rename = "M")]
    pub level: u32,
    pub u: Vec<[u32; 2]>,
    pub w: Vec<[u32; 2]>,
    pub theta: Vec<[u32; 2]>,
    #[serde(default)]
    pub layout: Vec<LayoutJson>,
}

/// One layout entry of the JSON representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutJson {
    pub kind: Kind,
    pub m: [u32; 2],
    pub p1: u8,
    pub slot: usize,
}

/// i-th interior wave vector: shells of increasing m1 + m3, larger m1 first.
pub fn wave_order(i: u32) -> WaveVector {
    assert!(i >= 1, "wave_order is 1-based");
    let mut remaining = i;
    let mut shell = 2;
    while remaining > shell - 1 {
        remaining -= shell - 1;
        shell += 1;
    }
    let m1 = shell - remaining;
    WaveVector::new(m1, shell - m1)
}

/// HKC-M model.
pub fn build_hkc(level: u32) -> Result<ModelSpec> {
    if level == 0 {
        return Err(HkcError::InvalidInput("HKC level must be at least 1".into()));
    }
    let (mut u, mut w, mut th) = (Vec::new(), Vec::new(), Vec::new());
    for i in 1..=level {
        let m = wave_order(i);
        u.push(m);
        w.push(m);
        th.push(m);
        if m.m1 == 1 {
            let shear = WaveVector::new(0, 2 * m.m3 - 1);
            u.push(shear);
            w.push(shear);
            th.push(WaveVector::new(0, 2 * m.m3));
            let flat = WaveVector::new(m.m3 - 1, 0);
            if !flat.is_zero() {
                w.push(flat);
            }
        }
    }
    ModelSpec::new(level, u, w, th)
}

/// 3M + 4 floor((sqrt(8M + 1) - 1) / 2) - 1.
pub fn model_dimension(level: u32) -> usize {
    // floor((sqrt(8M+1)-1)/2) is the largest k with k(k+1)/2 <= M
    let m = level as u64;
    let mut k = (((8 * m + 1) as f64).sqrt() as u64).saturating_sub(1) / 2;
    while (k + 1) * (k + 2) / 2 <= m {
        k += 1;
    }
    while k * (k + 1) / 2 > m {
        k -= 1;
    }
    (3 * m + 4 * k - 1) as usize
}

/// Which criterion a violation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Criterion {
    Energy,
    Vorticity,
    RotatingVorticity,
    Buoyancy,
}

/// Offending pair and the mode whose absence breaks the criterion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub criterion: Criterion,
    pub pair: (ModeIndex, ModeIndex),
    pub required: (Kind, WaveVector),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?}: pair [{}] / [{}] requires {}{}",
            self.criterion,
            self.pair.0,
            self.pair.1,
            self.required.0.label(),
            self.required.1
        )
    }
}

/// Outcome of the consistency checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CriteriaReport {
    pub energy_ok: bool,
    pub vorticity_ok: bool,
    pub rotating_vorticity_ok: bool,
    pub buoyancy_ok: bool,
    pub violations: Vec<Violation>,
}

impl Default for CriteriaReport {
    fn default() -> Self {
        Self {
            energy_ok: true,
            vorticity_ok: true,
            rotating_vorticity_ok: true,
            buoyancy_ok: true,
            violations: Vec::new(),
        }
    }
}

impl CriteriaReport {
    pub fn all_ok(&self) -> bool {
        self.energy_ok && self.vorticity_ok && self.rotating_vorticity_ok && self.buoyancy_ok
    }

    fn push(&mut self, v: Violation) {
        match v.criterion {
            Criterion::Energy => self.energy_ok = false,
            Criterion::Vorticity => self.vorticity_ok = false,
            Criterion::RotatingVorticity => self.rotating_vorticity_ok = false,
            Criterion::Buoyancy => self.buoyancy_ok = false,
        }
        if !self.violations.contains(&v) {
            self.violations.push(v);
        }
    }

    fn merge(&mut self, other: CriteriaReport) {
        for v in other.violations {
            self.push(v);
        }
    }
}

impl fmt::Display for CriteriaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "energy={} vorticity={} rotating_vorticity={} buoyancy={}",
            self.energy_ok, self.vorticity_ok, self.rotating_vorticity_ok, self.buoyancy_ok
        )?;
        for v in &self.violations {
            write!(f, "; {v}")?;
        }
        Ok(())
    }
}

fn modes(spec: &ModelSpec, kind: Kind) -> impl Iterator<Item = ModeIndex> + '_ {
    spec.layout().iter().copied().filter(move |n| n.kind == kind)
}

/// Requires `a` present iff `b` present, reporting the missing one.
fn require_iff(
    report: &mut CriteriaReport,
    spec: &ModelSpec,
    criterion: Criterion,
    pair: (ModeIndex, ModeIndex),
    kind: Kind,
    a: WaveVector,
    b: WaveVector,
) {
    let (ha, hb) = (spec.contains(kind, a), spec.contains(kind, b));
    if ha && !hb {
        report.push(Violation { criterion, pair, required: (kind, b) });
    } else if hb && !ha {
        report.push(Violation { criterion, pair, required: (kind, a) });
    }
}

/// Energy balance: stratified temperature modes generated by u/theta pairs.
pub fn check_energy_criterion(spec: &ModelSpec) -> CriteriaReport {
    let mut report = CriteriaReport::default();
    for up in modes(spec, Kind::U) {
        for th in modes(spec, Kind::Theta) {
            if up.m.m1 != th.m.m1 || up.m.m1 == 0 || up.p1 != th.p1 {
                continue;
            }
            let pair = (up, th);
            let (a, b) = (up.m.m3, th.m.m3);
            if a == b {
                let need = WaveVector::new(0, 2 * a);
                if !spec.contains(Kind::Theta, need) {
                    report.push(Violation { criterion: Criterion::Energy, pair, required: (Kind::Theta, need) });
                }
            } else {
                let lo = WaveVector::new(0, a.abs_diff(b));
                let hi = WaveVector::new(0, a + b);
                require_iff(&mut report, spec, Criterion::Energy, pair, Kind::Theta, lo, hi);
            }
        }
    }
    report
}

/// Vorticity balance; the rotating clause pairs odd shear modes of u and w.
pub fn check_vorticity_criteria(spec: &ModelSpec, rotating: bool) -> CriteriaReport {
    let mut report = CriteriaReport::default();
    let velocity: Vec<ModeIndex> = spec.layout().iter().copied().filter(|n| n.kind.is_velocity()).collect();
    for (i, a) in velocity.iter().enumerate() {
        for b in &velocity[i + 1..] {
            if a.m.m1 != b.m.m1 || a.m.m1 == 0 || (a.m.m3 + b.m.m3) % 2 == 0 {
                continue;
            }
            if a.p1 == b.p1 {
                continue;
            }
            let lo = WaveVector::new(0, a.m.m3.abs_diff(b.m.m3));
            let hi = WaveVector::new(0, a.m.m3 + b.m.m3);
            let pair = (*a, *b);
            match (a.kind, b.kind) {
                (Kind::U, Kind::U) => {
                    require_iff(&mut report, spec, Criterion::Vorticity, pair, Kind::U, lo, hi);
                }
                (Kind::W, Kind::W) => {}
                _ => {
                    for need in [lo, hi] {
                        if !spec.contains(Kind::W, need) {
                            report.push(Violation { criterion: Criterion::Vorticity, pair, required: (Kind::W, need) });
                        }
                    }
                }
            }
        }
    }
    if rotating {
        for (have, other) in [(Kind::U, Kind::W), (Kind::W, Kind::U)] {
            for n in modes(spec, have) {
                if n.m.m1 == 0 && n.m.m3 % 2 == 1 && !spec.contains(other, n.m) {
                    report.push(Violation {
                        criterion: Criterion::RotatingVorticity,
                        pair: (n, n),
                        required: (other, n.m),
                    });
                }
            }
        }
    }
    report
}

/// Buoyancy: interior wave vectors appear in M_u iff they appear in M_theta.
pub fn check_buoyancy_criterion(spec: &ModelSpec) -> CriteriaReport {
    let mut report = CriteriaReport::default();
    for (have, other) in [(Kind::U, Kind::Theta), (Kind::Theta, Kind::U)] {
        for n in modes(spec, have) {
            if n.m.is_interior() && !spec.contains(other, n.m) {
                report.push(Violation { criterion: Criterion::Buoyancy, pair: (n, n), required: (other, n.m) });
            }
        }
    }
    report
}

/// All criteria at once.
pub fn check_all(spec: &ModelSpec, rotating: bool) -> CriteriaReport {
    let mut report = check_energy_criterion(spec);
    report.merge(check_vorticity_criteria(spec, rotating));
    report.merge(check_buoyancy_criterion(spec));
    report
}
