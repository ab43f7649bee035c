//! Adaptive Dormand-Prince 5(4) integration with PI step-size control.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::basis::fmt_f64;
use crate::dynamics::OdeSystem;
use crate::error::{HkcError, Result};
use crate::hierarchy::ModelSpec;
use crate::types::ModeIndex;

const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
/// Fifth-order weights; also row 7 of the tableau (FSAL).
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Tolerances and step limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_final: f64,
    /// Store every k-th accepted step.
    pub sample_stride: usize,
    /// Max-norm above which the state counts as blown up.
    pub blowup_norm: f64,
    /// Hard cap on attempted steps.
    pub max_steps: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            dt_init: 1e-3,
            dt_min: 1e-12,
            dt_max: 0.05,
            t_final: 10.0,
            sample_stride: 1,
            blowup_norm: 1e12,
            max_steps: 200_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HkcError::InvalidInput(m.to_string()));
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return bad("need 0 < dt_min <= dt_init <= dt_max");
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("t_final must be positive");
        }
        if self.sample_stride == 0 {
            return bad("sample_stride must be positive");
        }
        Ok(())
    }
}

/// Sampled solution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub accepted: u64,
    pub rejected: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(|v| v.as_slice())
    }

    /// Writes `t,<slot labels>` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, spec: &ModelSpec, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(spec.layout().iter().map(|n| n.label()));
        w.write_record(&header)?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let mut row = vec![fmt_f64(*t)];
            row.extend(x.iter().map(|v| fmt_f64(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format of `write_csv`, skipping `#` comment lines. Returns
    /// the slot labels parsed as mode indices alongside the samples.
    pub fn read_csv<R: Read>(input: R) -> Result<(Vec<ModeIndex>, Trajectory)> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some("t") {
            return Err(HkcError::InvalidInput("trajectory header must start with t".into()));
        }
        let modes = header.iter().skip(1).map(ModeIndex::from_label).collect::<Result<Vec<_>>>()?;
        let mut traj = Trajectory::default();
        for rec in r.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| HkcError::InvalidInput(format!("bad number in trajectory: {e}")))?;
            if let Some(&prev) = traj.times.last() {
                if vals[0] <= prev {
                    return Err(HkcError::InvalidInput("trajectory times must increase".into()));
                }
            }
            traj.times.push(vals[0]);
            traj.states.push(vals[1..].to_vec());
        }
        Ok((modes, traj))
    }
}

/// Result of one embedded step.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedStep {
    /// Fifth-order solution.
    pub x_next: Vec<f64>,
    /// Difference between the fifth- and fourth-order solutions.
    pub error: Vec<f64>,
    /// f(x_next), reused as the first stage of the next step.
    pub f_next: Vec<f64>,
}

fn stage(x: &[f64], dt: f64, k: &[Vec<f64>], a: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (aj, kj) in a.iter().zip(k) {
            s += aj * kj[i];
        }
        *o = x[i] + dt * s;
    }
}

/// One Dormand-Prince step from (t, x) with the stage f(x) already known.
fn dopri_step<S: OdeSystem + ?Sized>(sys: &S, x: &[f64], f0: &[f64], dt: f64) -> EmbeddedStep {
    let d = x.len();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; d]; 7];
    k[0].copy_from_slice(f0);
    let mut tmp = vec![0.0; d];
    let rows: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
    for (s, a) in rows.iter().enumerate() {
        stage(x, dt, &k[..=s], a, &mut tmp);
        let (_, rest) = k.split_at_mut(s + 1);
        sys.rhs_into(&tmp, &mut rest[0]);
    }
    let mut x_next = vec![0.0; d];
    stage(x, dt, &k[..6], &B5[..6], &mut x_next);
    let (_, last) = k.split_at_mut(6);
    sys.rhs_into(&x_next, &mut last[0]);
    let error = (0..d).map(|i| dt * (0..7).map(|s| (B5[s] - B4[s]) * k[s][i]).sum::<f64>()).collect();
    let f_next = k.pop().expect("seven stages");
    EmbeddedStep { x_next, error, f_next }
}

/// One embedded step of the autonomous system from (t, x); `t` only labels the step.
pub fn step_embedded<S: OdeSystem + ?Sized>(sys: &S, x: &[f64], t: f64, dt: f64) -> Result<EmbeddedStep> {
    if x.len() != sys.dim() {
        return Err(HkcError::DimensionMismatch { expected: sys.dim(), got: x.len() });
    }
    if !(dt > 0.0) {
        return Err(HkcError::InvalidInput(format!("dt = {dt} must be positive")));
    }
    let mut f0 = vec![0.0; x.len()];
    sys.rhs_into(x, &mut f0);
    let step = dopri_step(sys, x, &f0, dt);
    if step.x_next.iter().any(|v| !v.is_finite()) {
        return Err(HkcError::BlowUp {
            t: t + dt,
            last: x.to_vec(),
            partial: Box::new(Trajectory { times: vec![t], states: vec![x.to_vec()], accepted: 0, rejected: 0 }),
        });
    }
    Ok(step)
}

/// RMS norm of the error scaled by atol + rtol max(|x|, |x_next|).
pub fn scaled_error_norm(error: &[f64], x: &[f64], x_next: &[f64], rel_tol: f64, abs_tol: f64) -> f64 {
    let n = error.len().max(1) as f64;
    let s: f64 = error
        .iter()
        .zip(x.iter().zip(x_next))
        .map(|(e, (a, b))| {
            let sc = abs_tol + rel_tol * a.abs().max(b.abs());
            (e / sc) * (e / sc)
        })
        .sum();
    (s / n).sqrt()
}

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

/// Resumable adaptive integrator over a borrowed system.
pub struct Integrator<'a, S: OdeSystem + ?Sized> {
    sys: &'a S,
    cfg: IntegratorConfig,
    t: f64,
    x: Vec<f64>,
    f: Vec<f64>,
    dt: f64,
    err_prev: f64,
    accepted: u64,
    rejected: u64,
}

impl<'a, S: OdeSystem + ?Sized> Integrator<'a, S> {
    pub fn new(sys: &'a S, x0: &[f64], t0: f64, cfg: IntegratorConfig) -> Result<Self> {
        if x0.len() != sys.dim() {
            return Err(HkcError::DimensionMismatch { expected: sys.dim(), got: x0.len() });
        }
        let mut f = vec![0.0; x0.len()];
        sys.rhs_into(x0, &mut f);
        Ok(Self { sys, cfg, t: t0, x: x0.to_vec(), f, dt: cfg.dt_init, err_prev: 1e-4, accepted: 0, rejected: 0 })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Advances to `t_end`, calling `sink(t, x)` after every accepted step.
    ///
    /// On failure the error carries the last finite state; the partial
    /// trajectory inside it is left empty for the caller to fill.
    pub fn advance_to<F: FnMut(f64, &[f64])>(&mut self, t_end: f64, mut sink: F) -> Result<()> {
        let mut attempts = 0u64;
        while self.t < t_end {
            attempts += 1;
            if attempts > self.cfg.max_steps {
                return Err(HkcError::StepUnderflow { t: self.t, dt: self.dt, partial: Box::default() });
            }
            let remaining = t_end - self.t;
            let last = remaining <= self.dt * (1.0 + 1e-12);
            let dt = if last { remaining } else { self.dt };
            let step = dopri_step(self.sys, &self.x, &self.f, dt);
            let finite = step.x_next.iter().all(|v| v.is_finite());
            let err = if finite {
                scaled_error_norm(&step.error, &self.x, &step.x_next, self.cfg.rel_tol, self.cfg.abs_tol)
            } else {
                f64::INFINITY
            };
            if err <= 1.0 {
                let big = step.x_next.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                if big > self.cfg.blowup_norm {
                    return Err(HkcError::BlowUp { t: self.t, last: self.x.clone(), partial: Box::default() });
                }
                self.t = if last { t_end } else { self.t + dt };
                self.x = step.x_next;
                self.f = step.f_next;
                self.accepted += 1;
                let e = err.max(1e-10);
                let fac = (SAFETY * e.powf(-ALPHA) * self.err_prev.powf(BETA)).clamp(FAC_MIN, FAC_MAX);
                self.err_prev = e;
                if !last {
                    self.dt = (dt * fac).min(self.cfg.dt_max);
                }
                sink(self.t, &self.x);
            } else {
                self.rejected += 1;
                let fac = if err.is_finite() { (SAFETY * err.powf(-0.2)).max(FAC_MIN) } else { FAC_MIN };
                self.dt = dt * fac;
                if self.dt < self.cfg.dt_min {
                    if !finite {
                        return Err(HkcError::BlowUp { t: self.t, last: self.x.clone(), partial: Box::default() });
                    }
                    return Err(HkcError::StepUnderflow { t: self.t, dt: self.dt, partial: Box::default() });
                }
            }
        }
        Ok(())
    }
}

/// Integrates from t = 0 to `cfg.t_final`, storing every `sample_stride`-th step.
pub fn integrate<S: OdeSystem + ?Sized>(sys: &S, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut integ = Integrator::new(sys, x0, 0.0, *cfg)?;
    let mut traj = Trajectory { times: vec![0.0], states: vec![x0.to_vec()], ..Default::default() };
    let stride = cfg.sample_stride as u64;
    let mut count = 0u64;
    let mut last_t = 0.0;
    let mut last_x = x0.to_vec();
    let res = integ.advance_to(cfg.t_final, |t, x| {
        count += 1;
        if count.is_multiple_of(stride) {
            traj.times.push(t);
            traj.states.push(x.to_vec());
        } else {
            last_t = t;
            last_x.clear();
            last_x.extend_from_slice(x);
        }
    });
    if traj.times.last() != Some(&integ.time()) && integ.time() > 0.0 && last_t == integ.time() {
        traj.times.push(last_t);
        traj.states.push(last_x);
    }
    traj.accepted = integ.accepted();
    traj.rejected = integ.rejected();
    match res {
        Ok(()) => Ok(traj),
        Err(HkcError::BlowUp { t, last, .. }) => Err(HkcError::BlowUp { t, last, partial: Box::new(traj) }),
        Err(HkcError::StepUnderflow { t, dt, .. }) => Err(HkcError::StepUnderflow { t, dt, partial: Box::new(traj) }),
        Err(e) => Err(e),
    }
}
