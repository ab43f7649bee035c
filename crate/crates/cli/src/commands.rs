use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use hkc_core::basis::{reconstruct_fields, GridSpec};
use hkc_core::diagnostics::{converged, nusselt_flux_series, nusselt_series};
use hkc_core::hierarchy::check_all;
use hkc_core::stability::{
    hausdorff_constant, hausdorff_upper_bound, stability_atlas, unstable_dimension, write_atlas_csv,
};
use hkc_core::sweep::{
    bin_nusselt, default_bin_centers, random_initial_condition, run_sweep, sweep_row, write_histogram_csv,
    write_sweep_csv, RangeExpr, RunConfig, SweepConfig, SWEEP_HEADER,
};
use hkc_core::{build_hkc, integrate, CompiledModel, HkcError, IntegratorConfig, ModelSpec, Params, Trajectory};

use crate::{Cli, CliError, Command, IntegratorArgs, PhysicsArgs, Preset, SimulateArgs, SweepArgs};

type CliResult<T> = Result<T, CliError>;

const DEFAULT_R: f64 = 189.0;
const DEFAULT_S: f64 = 0.0;
const DEFAULT_P: f64 = 10.0;
const DEFAULT_K1: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn run(cli: &Cli) -> CliResult<()> {
    let banner = !cli.no_banner;
    match &cli.command {
        Command::Generate { level, out } => generate(*level, out.as_deref()),
        Command::Simulate(args) => simulate(args, banner),
        Command::Nusselt { traj, k1, threshold, out } => nusselt(traj, *k1, *threshold, out.as_deref(), banner),
        Command::Sweep(args) => sweep(args, banner),
        Command::Stability { physics, max_shell, out } => stability(physics, *max_shell, out.as_deref(), banner),
        Command::Field { traj, time, grid, k1, out } => field(traj, *time, grid, *k1, out.as_deref(), banner),
    }
}

fn open_out(path: Option<&Path>) -> CliResult<Box<dyn Write + Send>> {
    Ok(match path {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// Opens the output and writes the banner comment unless suppressed.
fn open_csv(path: Option<&Path>, banner: bool, command: &str) -> CliResult<Box<dyn Write + Send>> {
    let mut w = open_out(path)?;
    if banner {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        writeln!(w, "# hkc {} {command} unix_time={secs}", env!("CARGO_PKG_VERSION"))?;
    }
    Ok(w)
}

fn open_in(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Resolves explicit flags over the preset over the defaults.
pub fn resolve_params(a: &PhysicsArgs) -> CliResult<Params> {
    let (mut r, mut s, mut p) = (DEFAULT_R, DEFAULT_S, DEFAULT_P);
    if let Some(preset) = a.preset {
        let (name, pr, ps) = match preset {
            Preset::TroposphereEquator => ("troposphere-equator", 1e16, 0.0),
            Preset::TropospherePole => ("troposphere-pole", 1e16, 1e15),
        };
        (r, s, p) = (pr, ps, 1.0);
        eprintln!("WARNING: preset {name} sets R = {pr:e}, S = {ps:e}, P = 1.");
        eprintln!("WARNING: integrating at these magnitudes is infeasible at desk scale; use it for stability output.");
    }
    let params = Params::new(
        a.rayleigh.unwrap_or(r),
        a.rotation.unwrap_or(s),
        a.prandtl.unwrap_or(p),
        a.k1.unwrap_or(DEFAULT_K1),
    )?;
    eprintln!(
        "params R={:e} S={:e} P={} k1={}",
        params.rayleigh(),
        params.rotation(),
        params.prandtl(),
        params.aspect()
    );
    Ok(params)
}

fn integrator_config(a: &IntegratorArgs, t_final: f64, stride: usize) -> IntegratorConfig {
    let base = IntegratorConfig::default();
    IntegratorConfig {
        rel_tol: a.rel_tol,
        abs_tol: a.abs_tol,
        dt_max: a.dt_max,
        dt_init: base.dt_init.min(a.dt_max),
        dt_min: base.dt_min.min(a.dt_max),
        t_final,
        sample_stride: stride,
        ..base
    }
}

fn generate(level: u32, out: Option<&Path>) -> CliResult<()> {
    if level == 0 {
        return Err(CliError::Usage("level M must be at least 1".into()));
    }
    let spec = build_hkc(level)?;
    let report = check_all(&spec, true);
    let mut w = open_out(out)?;
    w.write_all(spec.to_json()?.as_bytes())?;
    writeln!(w)?;
    w.flush()?;
    eprintln!("HKC-{level}: dimension {}", spec.dim());
    eprintln!("criteria: {report}");
    if !report.all_ok() {
        return Err(CliError::Criteria(format!("HKC-{level} violates the consistency criteria")));
    }
    Ok(())
}

fn load_spec(model: Option<&Path>, level: u32) -> CliResult<ModelSpec> {
    match model {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Ok(ModelSpec::from_json(&text)?)
        }
        None if level == 0 => Err(CliError::Usage("level M must be at least 1".into())),
        None => Ok(build_hkc(level)?),
    }
}

fn simulate(a: &SimulateArgs, banner: bool) -> CliResult<()> {
    let spec = load_spec(a.model.as_deref(), a.level)?;
    let params = resolve_params(&a.physics)?;
    let model = if a.allow_inconsistent {
        CompiledModel::compile_unchecked(&spec, &params)
    } else {
        CompiledModel::compile(&spec, &params)?
    };
    let cfg = integrator_config(&a.integrator, a.t_final, a.stride);
    cfg.validate()?;
    let x0 = random_initial_condition(&spec, params.aspect(), a.seed, a.replicate, a.amplitude);
    let (traj, failure) = match integrate(&model, &x0, &cfg) {
        Ok(t) => (t, None),
        Err(HkcError::BlowUp { t, partial, .. }) => {
            (*partial, Some(format!("blow-up at t = {t}; partial trajectory written")))
        }
        Err(HkcError::StepUnderflow { t, dt, partial }) => {
            (*partial, Some(format!("step size underflow at t = {t} (dt = {dt:e}); partial trajectory written")))
        }
        Err(e) => return Err(e.into()),
    };
    let mut w = open_csv(a.out.as_deref(), banner, "simulate")?;
    traj.write_csv(&spec, &mut w)?;
    w.flush()?;
    eprintln!("{} samples, {} accepted / {} rejected steps", traj.len(), traj.accepted, traj.rejected);
    match failure {
        Some(msg) => Err(CliError::Numerical(msg)),
        None => Ok(()),
    }
}

/// Reads a trajectory CSV and the spec implied by its header, with states
/// permuted into the spec's slot order.
fn load_trajectory(path: &Path) -> CliResult<(ModelSpec, Trajectory)> {
    let (modes, mut traj) = Trajectory::read_csv(open_in(path)?)?;
    let spec = ModelSpec::from_modes(0, &modes)?;
    let perm: Vec<usize> =
        spec.layout().iter().map(|n| modes.iter().position(|m| m == n).expect("spec built from these modes")).collect();
    for x in traj.states.iter_mut() {
        *x = perm.iter().map(|&k| x[k]).collect();
    }
    Ok((spec, traj))
}

fn nusselt(path: &Path, k1: f64, threshold: f64, out: Option<&Path>, banner: bool) -> CliResult<()> {
    let (spec, traj) = load_trajectory(path)?;
    if traj.is_empty() {
        return Err(CliError::Usage("trajectory has no samples".into()));
    }
    let nu = nusselt_series(&traj, &spec, k1)?;
    let flux = nusselt_flux_series(&traj, &spec, k1)?;
    let mut w = open_csv(out, banner, "nusselt")?;
    {
        let mut c = csv::Writer::from_writer(&mut w);
        c.write_record(["t", "nu", "nu_flux"])?;
        for k in 0..nu.len() {
            c.write_record([nu.times[k], nu.values[k], flux.values[k]].map(hkc_core::basis::fmt_f64))?;
        }
        c.flush()?;
    }
    w.flush()?;
    let verdict = converged(&nu, threshold);
    eprintln!("nu={} converged={verdict}", nu.last().unwrap_or(1.0));
    Ok(())
}

fn parse_range(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.parse::<RangeExpr>().map(|r| r.values().to_vec()).map_err(|e| CliError::Usage(format!("{what}: {e}")))
}

fn sweep(a: &SweepArgs, banner: bool) -> CliResult<()> {
    let cfg = SweepConfig {
        r_values: parse_range(&a.r_values, "--R")?,
        s_values: parse_range(&a.s_values, "--S")?,
        level: a.level,
        prandtl: a.prandtl,
        k1: a.k1,
        ensemble: a.ensemble,
        seed: a.seed,
        amplitude: a.amplitude,
        run: RunConfig {
            integrator: integrator_config(&a.integrator, 1.0, 1),
            burn_time: a.burn_time,
            extension_time: a.extension_time,
            threshold: a.threshold,
            min_extensions: a.min_extensions,
            max_extensions: a.max_extensions,
        },
        threads: a.threads,
    };
    cfg.validate()?;
    cfg.run.validate()?;
    if a.level == 0 {
        return Err(CliError::Usage("level M must be at least 1".into()));
    }
    let progress = |r: &hkc_core::sweep::SweepRecord| {
        eprintln!(
            "R={} S={} replicate={} nu={} converged={} blowup={}",
            r.rayleigh, r.rotation, r.replicate, r.nu_final, r.converged, r.blowup
        );
    };
    let mut w = open_csv(a.out.as_deref(), banner, "sweep")?;
    let records = if a.serial {
        // serial tasks finish in table order, so rows can be appended as they come
        let mut c = csv::Writer::from_writer(&mut w);
        c.write_record(SWEEP_HEADER)?;
        c.flush()?;
        let sink = Mutex::new(c);
        let records = run_sweep(&cfg, false, |r| {
            progress(r);
            let mut c = sink.lock().expect("sink lock");
            let _ = c.write_record(sweep_row(r)).and_then(|_| c.flush().map_err(csv::Error::from));
        })?;
        sink.into_inner().expect("sink lock").flush()?;
        records
    } else {
        let records = run_sweep(&cfg, true, progress)?;
        write_sweep_csv(&records, &mut w)?;
        records
    };
    w.flush()?;
    if let Some(h) = &a.histogram {
        let values: Vec<f64> = records.iter().map(|r| r.nu_final).collect();
        let hist = bin_nusselt(&values, &default_bin_centers())?;
        let mut hw = open_csv(Some(h), banner, "sweep-histogram")?;
        write_histogram_csv(&hist, &mut hw)?;
        hw.flush()?;
    }
    let failed = records.iter().filter(|r| !r.converged).count();
    eprintln!("{} records, {failed} not converged", records.len());
    Ok(())
}

fn stability(physics: &PhysicsArgs, max_shell: u32, out: Option<&Path>, banner: bool) -> CliResult<()> {
    let params = resolve_params(physics)?;
    let rows = stability_atlas(&params, max_shell)?;
    let d = unstable_dimension(&params, max_shell)?;
    let mut w = open_csv(out, banner, "stability")?;
    write_atlas_csv(&rows, &mut w)?;
    w.flush()?;
    eprintln!("d_unstable={d}");
    eprintln!("hausdorff_constant={}", hausdorff_constant(params.prandtl(), params.aspect()));
    eprintln!("hausdorff_bound={}", hausdorff_upper_bound(&params));
    Ok(())
}

/// State at `time` by linear interpolation between samples.
fn state_at(traj: &Trajectory, time: f64) -> CliResult<Vec<f64>> {
    let (first, last) = match (traj.times.first(), traj.times.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(CliError::Usage("trajectory has no samples".into())),
    };
    if !(time >= first && time <= last) {
        return Err(CliError::Usage(format!("time {time} outside the trajectory range [{first}, {last}]")));
    }
    let k = traj.times.partition_point(|t| *t < time);
    if traj.times[k] == time {
        return Ok(traj.states[k].clone());
    }
    let (t0, t1) = (traj.times[k - 1], traj.times[k]);
    let w = (time - t0) / (t1 - t0);
    Ok(traj.states[k - 1].iter().zip(&traj.states[k]).map(|(a, b)| a + w * (b - a)).collect())
}

fn field(path: &Path, time: f64, grid: &str, k1: f64, out: Option<&Path>, banner: bool) -> CliResult<()> {
    let grid = GridSpec::parse(grid)?;
    let (spec, traj) = load_trajectory(path)?;
    let x = state_at(&traj, time)?;
    let snap = reconstruct_fields(&spec, &x, &grid, k1)?;
    let mut w = open_csv(out, banner, "field")?;
    snap.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}
