//! Linear stability of the conduction state: per-wave-vector blocks,
//! characteristic polynomials, critical thresholds, crossing types, the
//! unstable-manifold dimension and the attractor dimension bound.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use nalgebra::{Complex, DMatrix, Matrix3};
use serde::Serialize;

use crate::basis::fmt_f64;
use crate::error::{HkcError, Result};
use crate::interaction::linear_couplings;
use crate::types::{Kind, ModeIndex, Params, WaveVector};

/// Relative tolerance for deciding that R sits on a closed-form threshold.
pub const CROSSING_RTOL: f64 = 1e-9;

/// Linearization of the origin restricted to one wave vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginBlock {
    pub m: WaveVector,
    /// Kinds of the rows, in (u, w, theta) order, skipping inadmissible ones.
    pub kinds: Vec<Kind>,
    pub matrix: DMatrix<f64>,
}

/// Phase-locked modes present at `m`, ordered u, w, theta.
fn modes_at(m: WaveVector) -> Vec<ModeIndex> {
    [Kind::U, Kind::W, Kind::Theta].into_iter().filter_map(|k| ModeIndex::locked(k, m).ok()).collect()
}

/// Block of the origin Jacobian acting on the modes with wave vector `m`.
pub fn origin_block(m: WaveVector, params: &Params) -> Result<OriginBlock> {
    let modes = modes_at(m);
    if modes.is_empty() {
        return Err(HkcError::InadmissibleMode(format!("no admissible mode at {m}")));
    }
    let d = modes.len();
    let mut a = DMatrix::zeros(d, d);
    for (i, n) in modes.iter().enumerate() {
        let lc = linear_couplings(n, params)?;
        a[(i, i)] = lc.diffusion;
        for (partner, c) in [lc.buoyancy, lc.coriolis].into_iter().flatten() {
            if let Some(j) = modes.iter().position(|q| q.kind == partner.kind) {
                a[(i, j)] += c;
            }
        }
    }
    Ok(OriginBlock { m, kinds: modes.iter().map(|n| n.kind).collect(), matrix: a })
}

fn require_interior(m: WaveVector) -> Result<()> {
    if !m.is_interior() {
        return Err(HkcError::InvalidInput(format!("{m} is not an interior wave vector")));
    }
    Ok(())
}

/// Coefficients (c2, c1, c0) of lambda^3 + c2 lambda^2 + c1 lambda + c0.
pub fn char_coeffs(m: WaveVector, params: &Params) -> Result<(f64, f64, f64)> {
    require_interior(m)?;
    let (p, r, s, k1) = (params.prandtl(), params.rayleigh(), params.rotation(), params.aspect());
    let ksq = m.km_sq(k1);
    let m3sq = (m.m3 as f64).powi(2);
    let a = (k1 * m.m1 as f64).powi(2);
    let c2 = (2.0 * p + 1.0) * ksq;
    let c1 = p * ((p + 2.0) * ksq * ksq + p * s * s * m3sq / ksq - r * a / ksq);
    let c0 = p * p * (ksq.powi(3) + s * s * m3sq - r * a);
    Ok((c2, c1, c0))
}

/// Descending lexicographic order by (real part, imaginary part).
pub fn sort_descending(v: &mut [Complex<f64>]) {
    v.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
}

fn cubic(c: (f64, f64, f64), z: Complex<f64>) -> (Complex<f64>, Complex<f64>) {
    let (c2, c1, c0) = c;
    let f = ((z + c2) * z + c1) * z + c0;
    let df = (z * 3.0 + 2.0 * c2) * z + c1;
    (f, df)
}

/// Roots of the characteristic cubic from the companion matrix, polished by Newton steps.
pub fn eigenvalues(m: WaveVector, params: &Params) -> Result<[Complex<f64>; 3]> {
    let c = char_coeffs(m, params)?;
    let comp = Matrix3::new(-c.0, -c.1, -c.2, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let raw = comp.complex_eigenvalues();
    let mut out = [raw[0], raw[1], raw[2]];
    for z in out.iter_mut() {
        for _ in 0..3 {
            let (f, df) = cubic(c, *z);
            if df.norm() == 0.0 {
                break;
            }
            let next = *z - f / df;
            if !(next.re.is_finite() && next.im.is_finite()) {
                break;
            }
            if cubic(c, next).0.norm() <= f.norm() {
                *z = next;
            } else {
                break;
            }
        }
    }
    // real coefficients: snap near-real roots so conjugate pairs and real roots stay clean
    let scale = out.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for z in out.iter_mut() {
        if z.im.abs() <= 1e-13 * scale {
            z.im = 0.0;
        }
    }
    sort_descending(&mut out);
    Ok(out)
}

/// Eigenvalues of an arbitrary origin block (including boundary wave vectors), sorted.
pub fn block_eigenvalues(block: &OriginBlock) -> Vec<Complex<f64>> {
    let mut v: Vec<Complex<f64>> = block.matrix.complex_eigenvalues().iter().copied().collect();
    sort_descending(&mut v);
    v
}

/// Closed-form Rayleigh thresholds of one wave vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalRayleigh {
    /// A real eigenvalue crosses zero (c0 changes sign).
    pub r1: f64,
    /// c2 c1 - c0 changes sign.
    pub r2: f64,
    /// c1 changes sign.
    pub r3: f64,
    /// min(r1, r2).
    pub rc: f64,
}

/// Thresholds R1, R2, R3 and Rc; the Rayleigh number in `params` is ignored.
pub fn critical_rayleigh(m: WaveVector, params: &Params) -> Result<CriticalRayleigh> {
    require_interior(m)?;
    let (p, s, k1) = (params.prandtl(), params.rotation(), params.aspect());
    let ksq = m.km_sq(k1);
    let k6 = ksq.powi(3);
    let m3sq = (m.m3 as f64).powi(2);
    let a = (k1 * m.m1 as f64).powi(2);
    let r1 = (k6 + s * s * m3sq) / a;
    let r2 = (2.0 * (p + 1.0) * k6 + 2.0 * p * p / (p + 1.0) * s * s * m3sq) / a;
    let r3 = ((p + 2.0) * ksq * ksq + p * s * s * m3sq) / a;
    Ok(CriticalRayleigh { r1, r2, r3, rc: r1.min(r2) })
}

/// Rotation threshold S^m separating real from complex crossings; infinite at P = 1.
pub fn rotation_threshold(m: WaveVector, prandtl: f64, k1: f64) -> Result<f64> {
    require_interior(m)?;
    if !(prandtl > 0.0 && k1 > 0.0) {
        return Err(HkcError::InvalidParams("need P > 0 and k1 > 0".into()));
    }
    let k3 = m.km_sq(k1).powf(1.5);
    let m3 = m.m3 as f64;
    Ok(if prandtl < 1.0 {
        ((1.0 + prandtl) / (1.0 - prandtl)).sqrt() * k3 / m3
    } else if prandtl > 1.0 {
        k3 / (2.0 * m3 * (prandtl * (prandtl - 1.0)).sqrt())
    } else {
        f64::INFINITY
    })
}

/// How the eigenvalues of a block cross the imaginary axis at the given R.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CrossingType {
    None,
    /// Real eigenvalue crossing at R1 with R1 < R2.
    T1,
    /// Complex pair crossing at R2 with R2 < R1.
    T2,
    /// Real eigenvalue returning at R1 after a T2 crossing.
    T3,
    /// Degenerate case R1 = R2.
    T4,
}

impl fmt::Display for CrossingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CrossingType::None => "none",
            CrossingType::T1 => "T1",
            CrossingType::T2 => "T2",
            CrossingType::T3 => "T3",
            CrossingType::T4 => "T4",
        };
        f.write_str(s)
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= CROSSING_RTOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Classifies the crossing at `m` for the Rayleigh number in `params`.
pub fn crossing_type(m: WaveVector, params: &Params) -> Result<CrossingType> {
    let cr = critical_rayleigh(m, params)?;
    let r = params.rayleigh();
    let p = params.prandtl();
    if p >= 1.0 {
        return Ok(if near(r, cr.r1) { CrossingType::T1 } else { CrossingType::None });
    }
    let sm = rotation_threshold(m, p, params.aspect())?;
    let s = params.rotation().abs();
    Ok(if near(s, sm) {
        if near(r, cr.r1) {
            CrossingType::T4
        } else {
            CrossingType::None
        }
    } else if s < sm {
        if near(r, cr.r1) {
            CrossingType::T1
        } else {
            CrossingType::None
        }
    } else if near(r, cr.r2) {
        CrossingType::T2
    } else if near(r, cr.r1) {
        CrossingType::T3
    } else {
        CrossingType::None
    })
}

/// Number of eigenvalues with positive real part in the block of an interior `m`,
/// read off from R against R1 and R2 (Routh-Hurwitz sign pattern).
pub fn unstable_count(m: WaveVector, params: &Params) -> Result<usize> {
    let cr = critical_rayleigh(m, params)?;
    let r = params.rayleigh();
    Ok(if r > cr.r1 {
        1
    } else if r > cr.r2 {
        2
    } else {
        0
    })
}

/// Interior wave vectors that can be unstable satisfy k1 m1 < R^(1/4) and m3 < R^(1/4).
fn candidate_bounds(params: &Params) -> (u32, u32) {
    let q = params.rayleigh().powf(0.25);
    let m1 = (q / params.aspect()).floor() as u32 + 1;
    let m3 = q.floor() as u32 + 1;
    (m1, m3)
}

/// Dimension of the unstable manifold of the origin, summed over interior wave vectors.
///
/// Errors when some unstable wave vector lies beyond `shell_cap`.
pub fn unstable_dimension(params: &Params, shell_cap: u32) -> Result<usize> {
    let (b1, b3) = candidate_bounds(params);
    let mut total = 0;
    let mut needed = 0;
    for m1 in 1..=b1 {
        for m3 in 1..=b3 {
            let m = WaveVector::new(m1, m3);
            let n = unstable_count(m, params)?;
            if n > 0 {
                total += n;
                needed = needed.max(m.shell());
            }
        }
    }
    if needed > shell_cap {
        return Err(HkcError::InsufficientShellCap { given: shell_cap, needed });
    }
    Ok(total)
}

/// Same count by eigensolving every interior block with m1 + m3 <= shell_cap.
pub fn unstable_dimension_bruteforce(params: &Params, shell_cap: u32) -> Result<usize> {
    let mut total = 0;
    for shell in 2..=shell_cap {
        for m1 in 1..shell {
            let ev = eigenvalues(WaveVector::new(m1, shell - m1), params)?;
            total += ev.iter().filter(|z| z.re > 0.0).count();
        }
    }
    Ok(total)
}

/// Direction of a pitchfork bifurcation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Criticality {
    Supercritical,
    Subcritical,
}

/// Rotation threshold C^m above which the pitchfork turns subcritical;
/// infinite when P >= m3 / (k1 m1).
pub fn criticality_threshold(m: WaveVector, params: &Params) -> Result<f64> {
    require_interior(m)?;
    let k1 = params.aspect();
    let ratio = m.m3 as f64 / (k1 * m.m1 as f64 * params.prandtl());
    if ratio <= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(m.km_sq(k1).powf(1.5) / (m.m3 as f64 * (ratio * ratio - 1.0).sqrt()))
}

/// Classifies the pitchfork at a T1 or T3 crossing.
pub fn pitchfork_criticality(m: WaveVector, params: &Params) -> Result<Criticality> {
    let ct = crossing_type(m, params)?;
    if !matches!(ct, CrossingType::T1 | CrossingType::T3) {
        return Err(HkcError::NotPitchfork(format!("crossing at {m} is {ct}")));
    }
    let s = params.rotation().abs();
    let p = params.prandtl();
    let k1 = params.aspect();
    if p >= m.m3 as f64 / (k1 * m.m1 as f64) {
        return Ok(Criticality::Supercritical);
    }
    let c = criticality_threshold(m, params)?;
    if near(s, c) {
        return Err(HkcError::NotPitchfork(format!("|S| equals the criticality threshold at {m}")));
    }
    Ok(if s < c { Criticality::Supercritical } else { Criticality::Subcritical })
}

/// C_Haus = 320 pi^3 / (P (1 + P) min(1, k1^2)).
pub fn hausdorff_constant(prandtl: f64, k1: f64) -> f64 {
    320.0 * PI.powi(3) / (prandtl * (1.0 + prandtl) * (k1 * k1).min(1.0))
}

/// Upper bound C_Haus (1 + R) on the attractor dimension.
pub fn hausdorff_upper_bound(params: &Params) -> f64 {
    hausdorff_constant(params.prandtl(), params.aspect()) * (1.0 + params.rayleigh())
}

/// Which threshold's level set to trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelCurve {
    R1Curve,
    R2Curve,
}

/// Real root of z^3 + p z + q = 0 for p >= 0 (the only real root).
fn depressed_cubic_root(p: f64, q: f64) -> f64 {
    let d = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let a = -(q.signum()) * ((q.abs() / 2.0) + d.sqrt()).cbrt();
    let mut z = if a != 0.0 { a - p / (3.0 * a) } else { 0.0 };
    for _ in 0..2 {
        let f = z * z * z + p * z + q;
        let df = 3.0 * z * z + p;
        if df == 0.0 {
            break;
        }
        z -= f / df;
    }
    z
}

/// Height m3 (possibly non-integer) of the R1 or R2 level curve above `m1`,
/// or `None` outside the curve's domain.
pub fn level_curve_m3(m1: f64, params: &Params, which: LevelCurve) -> Option<f64> {
    let (r, s, p, k1) = (params.rayleigh(), params.rotation(), params.prandtl(), params.aspect());
    if !(m1 > 0.0 && r > 0.0) {
        return None;
    }
    let x = k1 * m1;
    let a = x * x;
    // with z = a + m3^2 the level set is alpha z^3 + beta z - (beta + R) a = 0
    let (alpha, beta) = match which {
        LevelCurve::R1Curve => (1.0, s * s),
        LevelCurve::R2Curve => (2.0 * (p + 1.0), 2.0 * p * p * s * s / (p + 1.0)),
    };
    if x.powi(4) * alpha >= r {
        return None;
    }
    let z = depressed_cubic_root(beta / alpha, -a * (beta + r) / alpha);
    let y = z - a;
    (y > 0.0).then(|| y.sqrt())
}

/// Residual of the level-set equation at (m1, m3).
pub fn level_curve_residual(m1: f64, m3: f64, params: &Params, which: LevelCurve) -> f64 {
    let (r, s, p, k1) = (params.rayleigh(), params.rotation(), params.prandtl(), params.aspect());
    let a = (k1 * m1).powi(2);
    let y = m3 * m3;
    let (alpha, beta) = match which {
        LevelCurve::R1Curve => (1.0, s * s),
        LevelCurve::R2Curve => (2.0 * (p + 1.0), 2.0 * p * p * s * s / (p + 1.0)),
    };
    (r * a - alpha * (a + y).powi(3) - beta * y).abs()
}

/// Everything known about the block of one interior wave vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub m: WaveVector,
    pub eigenvalues: [Complex<f64>; 3],
    pub critical: CriticalRayleigh,
    pub s_threshold: f64,
    pub crossing: CrossingType,
    pub n_unstable: usize,
}

pub fn stability_report(m: WaveVector, params: &Params) -> Result<StabilityReport> {
    Ok(StabilityReport {
        m,
        eigenvalues: eigenvalues(m, params)?,
        critical: critical_rayleigh(m, params)?,
        s_threshold: rotation_threshold(m, params.prandtl(), params.aspect())?,
        crossing: crossing_type(m, params)?,
        n_unstable: unstable_count(m, params)?,
    })
}

/// Atlas rows for every interior wave vector with m1 + m3 <= max_shell.
pub fn stability_atlas(params: &Params, max_shell: u32) -> Result<Vec<StabilityReport>> {
    let mut rows = Vec::new();
    for shell in 2..=max_shell {
        for m1 in 1..shell {
            rows.push(stability_report(WaveVector::new(m1, shell - m1), params)?);
        }
    }
    Ok(rows)
}

/// Writes the atlas CSV.
pub fn write_atlas_csv<W: Write>(rows: &[StabilityReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m1", "m3", "R1", "R2", "Rc", "S_threshold", "crossing_type", "n_unstable"])?;
    for r in rows {
        let s_thr = if r.s_threshold.is_finite() { fmt_f64(r.s_threshold) } else { "inf".to_string() };
        w.write_record([
            r.m.m1.to_string(),
            r.m.m3.to_string(),
            fmt_f64(r.critical.r1),
            fmt_f64(r.critical.r2),
            fmt_f64(r.critical.rc),
            s_thr,
            r.crossing.to_string(),
            r.n_unstable.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
