//! Parameter grids, random initial conditions, the extend-until-converged
//! protocol and ensemble statistics.

use std::f64::consts::PI;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::fmt_f64;
use crate::diagnostics::converged;
use crate::diagnostics::ScalarSeries;
use crate::dynamics::CompiledModel;
use crate::error::{HkcError, Result};
use crate::hierarchy::{build_hkc, ModelSpec};
use crate::integrator::{Integrator, IntegratorConfig};
use crate::types::{Kind, Params};

/// Environment variable capping the sweep worker count.
pub const THREADS_ENV: &str = "HKC_THREADS";

/// Grid of real values written as `a`, `a:d:b`, or comma-separated lists of
/// those, optionally wrapped in brackets.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeExpr {
    values: Vec<f64>,
}

impl RangeExpr {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn parse_num(s: &str, whole: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| HkcError::InvalidInput(format!("bad number '{s}' in range '{whole}'")))
}

impl FromStr for RangeExpr {
    type Err = HkcError;

    fn from_str(s: &str) -> Result<Self> {
        let body = s.trim().trim_start_matches('[').trim_end_matches(']');
        let mut values = Vec::new();
        for item in body.split(',') {
            let parts: Vec<&str> = item.split(':').collect();
            match parts.as_slice() {
                [a] => values.push(parse_num(a, s)?),
                [a, d, b] => {
                    let (a, d, b) = (parse_num(a, s)?, parse_num(d, s)?, parse_num(b, s)?);
                    if !(d > 0.0) {
                        return Err(HkcError::InvalidInput(format!("step must be positive in '{s}'")));
                    }
                    if a > b {
                        return Err(HkcError::InvalidInput(format!("start exceeds end in '{s}'")));
                    }
                    // index-based stepping avoids accumulated rounding; the end is kept when within rounding
                    let n = ((b - a) / d * (1.0 + 1e-12)).floor() as usize;
                    values.extend((0..=n).map(|k| a + k as f64 * d));
                }
                _ => return Err(HkcError::InvalidInput(format!("cannot parse range item '{item}'"))),
            }
        }
        if values.is_empty() {
            return Err(HkcError::InvalidInput("empty range".into()));
        }
        Ok(Self { values })
    }
}

/// Projection of the uniform state theta = x3 - pi/2 onto the stratified mode (0, m3).
pub fn uniform_state_coefficient(m3: u32, k1: f64) -> f64 {
    if m3.is_multiple_of(2) {
        -2.0 * PI / (k1.sqrt() * m3 as f64)
    } else {
        0.0
    }
}

/// Uniform random perturbation in [-amplitude, amplitude] per slot, plus the
/// projection of the uniform state. The stream is fixed by (seed, replicate).
pub fn random_initial_condition(spec: &ModelSpec, k1: f64, seed: u64, replicate: u64, amplitude: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    spec.layout()
        .iter()
        .map(|n| {
            let noise = if amplitude > 0.0 { rng.random_range(-amplitude..=amplitude) } else { 0.0 };
            let base = if n.kind == Kind::Theta && n.m.m1 == 0 { uniform_state_coefficient(n.m.m3, k1) } else { 0.0 };
            noise + base
        })
        .collect()
}

/// Settings of the extend-until-converged protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub integrator: IntegratorConfig,
    /// Initial integration time (10^4 increments of 1e-4).
    pub burn_time: f64,
    /// Time added per extension.
    pub extension_time: f64,
    pub threshold: f64,
    /// Extensions run before the convergence rule is consulted. The running
    /// mean barely moves during a short burn-in, so polling right after it
    /// accepts the initial transient.
    pub min_extensions: u32,
    pub max_extensions: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            burn_time: 1.0,
            extension_time: 1000.0,
            threshold: 0.02,
            min_extensions: 1,
            max_extensions: 10,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        if !(self.burn_time > 0.0 && self.extension_time > 0.0 && self.threshold > 0.0) {
            return Err(HkcError::InvalidInput("burn time, extension time and threshold must be positive".into()));
        }
        if self.min_extensions > self.max_extensions {
            return Err(HkcError::InvalidInput("min_extensions exceeds max_extensions".into()));
        }
        Ok(())
    }
}

/// Outcome of one run of the protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub rayleigh: f64,
    pub rotation: f64,
    pub level: u32,
    pub seed: u64,
    pub replicate: u64,
    pub nu_final: f64,
    pub t_final: f64,
    pub converged: bool,
    pub extension_count: u32,
    pub blowup: bool,
}

/// Running Nusselt accumulator on accepted steps.
struct NusseltTracker {
    weights: Vec<(usize, f64)>,
    acc: f64,
    t_prev: f64,
    g_prev: f64,
    t0: f64,
    series: ScalarSeries,
}

impl NusseltTracker {
    fn new(spec: &ModelSpec, k1: f64, x0: &[f64]) -> Self {
        let weights: Vec<(usize, f64)> = spec
            .layout()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == Kind::Theta && n.m.m1 == 0)
            .map(|(i, n)| (i, k1.sqrt() * n.m.m3 as f64 / PI))
            .collect();
        let mut tr = Self { weights, acc: 0.0, t_prev: 0.0, g_prev: 0.0, t0: 0.0, series: ScalarSeries::default() };
        tr.g_prev = tr.integrand(x0);
        tr.series.times.push(0.0);
        tr.series.values.push(1.0 - tr.g_prev);
        tr
    }

    fn integrand(&self, x: &[f64]) -> f64 {
        self.weights.iter().map(|&(i, w)| w * x[i]).sum()
    }

    fn push(&mut self, t: f64, x: &[f64]) {
        let g = self.integrand(x);
        self.acc += 0.5 * (t - self.t_prev) * (g + self.g_prev);
        self.t_prev = t;
        self.g_prev = g;
        self.series.times.push(t);
        self.series.values.push(1.0 - self.acc / (t - self.t0));
    }
}

/// Runs burn-in, then extends until the Nusselt series passes the
/// convergence rule or the extension budget is spent.
pub fn run_point(model: &CompiledModel, x0: &[f64], cfg: &RunConfig) -> Result<SweepRecord> {
    cfg.validate()?;
    let k1 = model.params().aspect();
    let mut tracker = NusseltTracker::new(model.spec(), k1, x0);
    let mut integ = Integrator::new(model, x0, 0.0, cfg.integrator)?;
    let mut record = SweepRecord {
        rayleigh: model.params().rayleigh(),
        rotation: model.params().rotation(),
        level: model.spec().level(),
        seed: 0,
        replicate: 0,
        nu_final: f64::NAN,
        t_final: 0.0,
        converged: false,
        extension_count: 0,
        blowup: false,
    };
    let mut target = cfg.burn_time;
    loop {
        let res = integ.advance_to(target, |t, x| tracker.push(t, x));
        record.t_final = integ.time();
        record.nu_final = tracker.series.last().unwrap_or(1.0);
        match res {
            Ok(()) => {}
            Err(e) if e.is_numerical() => {
                record.blowup = true;
                return Ok(record);
            }
            Err(e) => return Err(e),
        }
        if record.extension_count >= cfg.min_extensions && converged(&tracker.series, cfg.threshold) {
            record.converged = true;
            return Ok(record);
        }
        if record.extension_count >= cfg.max_extensions {
            return Ok(record);
        }
        record.extension_count += 1;
        target += cfg.extension_time;
    }
}

/// Full sweep description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub r_values: Vec<f64>,
    pub s_values: Vec<f64>,
    pub level: u32,
    pub prandtl: f64,
    pub k1: f64,
    pub ensemble: u64,
    pub seed: u64,
    pub amplitude: f64,
    pub run: RunConfig,
    /// Worker count; `None` reads the environment cap or uses all cores.
    pub threads: Option<usize>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_values.is_empty() || self.s_values.is_empty() {
            return Err(HkcError::InvalidInput("parameter grids must be nonempty".into()));
        }
        if self.ensemble == 0 {
            return Err(HkcError::InvalidInput("ensemble must be at least 1".into()));
        }
        Ok(())
    }

    fn tasks(&self) -> Vec<(usize, usize, u64)> {
        let mut v = Vec::new();
        for i in 0..self.r_values.len() {
            for j in 0..self.s_values.len() {
                for rep in 0..self.ensemble {
                    v.push((i, j, rep));
                }
            }
        }
        v
    }
}

/// Worker count from `HKC_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse::<usize>().ok()).filter(|n| *n > 0)
}

fn run_task(spec: &ModelSpec, cfg: &SweepConfig, task: (usize, usize, u64)) -> Result<SweepRecord> {
    let (i, j, rep) = task;
    let params = Params::new(cfg.r_values[i], cfg.s_values[j], cfg.prandtl, cfg.k1)?;
    let model = CompiledModel::compile(spec, &params)?;
    let x0 = random_initial_condition(spec, cfg.k1, cfg.seed, rep, cfg.amplitude);
    let mut rec = run_point(&model, &x0, &cfg.run)?;
    rec.seed = cfg.seed;
    rec.replicate = rep;
    Ok(rec)
}

fn failed_record(cfg: &SweepConfig, task: (usize, usize, u64)) -> SweepRecord {
    SweepRecord {
        rayleigh: cfg.r_values[task.0],
        rotation: cfg.s_values[task.1],
        level: cfg.level,
        seed: cfg.seed,
        replicate: task.2,
        nu_final: f64::NAN,
        t_final: 0.0,
        converged: false,
        extension_count: 0,
        blowup: false,
    }
}

/// Runs every (R, S, replicate) task. Records reach `sink` as they finish;
/// the returned table is sorted by (R index, S index, replicate).
/// A task that fails outright is recorded with NaN Nusselt number.
pub fn run_sweep<F>(cfg: &SweepConfig, parallel: bool, sink: F) -> Result<Vec<SweepRecord>>
where
    F: Fn(&SweepRecord) + Sync,
{
    cfg.validate()?;
    let spec = build_hkc(cfg.level)?;
    let tasks = cfg.tasks();
    let one = |task: (usize, usize, u64)| {
        let rec = run_task(&spec, cfg, task).unwrap_or_else(|_| failed_record(cfg, task));
        sink(&rec);
        (task, rec)
    };
    let mut out: Vec<((usize, usize, u64), SweepRecord)> = if parallel {
        let threads = cfg.threads.or_else(threads_from_env).unwrap_or(0);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| HkcError::InvalidInput(format!("thread pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(|t| one(*t)).collect())
    } else {
        tasks.iter().map(|t| one(*t)).collect()
    };
    out.sort_by_key(|(k, _)| *k);
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

/// Header of the sweep CSV.
pub const SWEEP_HEADER: [&str; 10] =
    ["R", "S", "M", "seed", "replicate", "nu", "t_final", "converged", "extensions", "blowup"];

/// Row of the sweep CSV.
pub fn sweep_row(r: &SweepRecord) -> Vec<String> {
    vec![
        fmt_f64(r.rayleigh),
        fmt_f64(r.rotation),
        r.level.to_string(),
        r.seed.to_string(),
        r.replicate.to_string(),
        fmt_f64(r.nu_final),
        fmt_f64(r.t_final),
        r.converged.to_string(),
        r.extension_count.to_string(),
        r.blowup.to_string(),
    ]
}

/// Writes a complete sweep CSV.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in records {
        w.write_record(sweep_row(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Default histogram centers 0:0.5:10.
pub fn default_bin_centers() -> Vec<f64> {
    (0..=20).map(|k| 0.5 * k as f64).collect()
}

/// Assigns each value to its nearest center, ties to the lower center.
/// Non-finite values (failed runs) are skipped.
pub fn bin_nusselt(values: &[f64], centers: &[f64]) -> Result<Vec<(f64, usize)>> {
    if centers.is_empty() || centers.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(HkcError::InvalidInput("bin centers must be strictly increasing".into()));
    }
    let mut counts = vec![0usize; centers.len()];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let mut best = 0;
        for k in 1..centers.len() {
            // strict comparison keeps ties in the lower bin
            if (v - centers[k]).abs() < (v - centers[best]).abs() {
                best = k;
            }
        }
        counts[best] += 1;
    }
    Ok(centers.iter().copied().zip(counts).collect())
}

/// Writes the histogram CSV.
pub fn write_histogram_csv<W: Write>(hist: &[(f64, usize)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_center", "count"])?;
    for (c, n) in hist {
        w.write_record([fmt_f64(*c), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
