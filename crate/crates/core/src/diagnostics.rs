//! Scalar functionals of model states: energies, heat flux, balance
//! residuals, Nusselt numbers and the attracting-ball functional.

use std::f64::consts::PI;
use std::io::Write;

use crate::basis::fmt_f64;
use crate::dynamics::CompiledModel;
use crate::error::{HkcError, Result};
use crate::hierarchy::{check_energy_criterion, ModelSpec};
use crate::integrator::Trajectory;
use crate::types::{normalizer_eta, DomainConstants, Kind, ModeIndex, Params};

/// Paired time and value arrays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScalarSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ScalarSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(HkcError::DimensionMismatch { expected: times.len(), got: values.len() });
        }
        Ok(Self { times, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

/// Scalar functionals of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Functionals {
    /// <|u|^2>/2 over both velocity kinds.
    pub kinetic: f64,
    /// <theta^2>/2.
    pub variance: f64,
    /// <(1 - x3/pi) theta>.
    pub potential: f64,
    /// <u3 theta>.
    pub heat_flux: f64,
    /// Domain integral of the vorticity, (x1, x2) components.
    pub vorticity_mean: [f64; 2],
}

/// <(1 - x3/pi) f^(0,m3)> for the stratified temperature mode.
pub fn potential_coefficient(m3: u32, k1: f64) -> f64 {
    2.0 / (k1.sqrt() * m3 as f64)
}

fn is_stratified(n: &ModeIndex) -> bool {
    n.m.m1 == 0 && n.m.m3 > 0
}

fn check_state(spec: &ModelSpec, x: &[f64]) -> Result<()> {
    if spec.dim() != x.len() {
        return Err(HkcError::DimensionMismatch { expected: spec.dim(), got: x.len() });
    }
    Ok(())
}

/// Odd vertical shear modes contribute (4/sqrt(k1)) (w, -u) to the mean vorticity.
fn shear_weight(n: &ModeIndex, k1: f64) -> Option<f64> {
    (n.kind.is_velocity() && n.m.m1 == 0 && n.m.m3 % 2 == 1).then(|| 4.0 / k1.sqrt())
}

/// <u3 theta> = sum (-1)^p1 (k1 m1 / |Km|) u^m theta^m over interior pairs.
pub fn heat_flux(spec: &ModelSpec, x: &[f64], k1: f64) -> Result<f64> {
    check_state(spec, x)?;
    let mut s = 0.0;
    for (i, n) in spec.layout().iter().enumerate() {
        if n.kind != Kind::U || n.m.m1 == 0 {
            continue;
        }
        if let Some(j) = spec.slot(Kind::Theta, n.m) {
            let sign = if n.p1 % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * k1 * n.m.m1 as f64 / n.m.km_sq(k1).sqrt() * x[i] * x[j];
        }
    }
    Ok(s)
}

/// Energies, potential, heat flux and mean vorticity of a state.
pub fn energy_functionals(spec: &ModelSpec, x: &[f64], params: &Params) -> Result<Functionals> {
    check_state(spec, x)?;
    let k1 = params.aspect();
    let mut f = Functionals {
        kinetic: 0.0,
        variance: 0.0,
        potential: 0.0,
        heat_flux: heat_flux(spec, x, k1)?,
        vorticity_mean: [0.0; 2],
    };
    for (n, &v) in spec.layout().iter().zip(x) {
        match n.kind {
            Kind::Theta => {
                f.variance += 0.5 * v * v;
                if is_stratified(n) {
                    f.potential += potential_coefficient(n.m.m3, k1) * v;
                }
            }
            Kind::U | Kind::W => {
                f.kinetic += 0.5 * v * v;
                if let Some(wt) = shear_weight(n, k1) {
                    if n.kind == Kind::W {
                        f.vorticity_mean[0] += wt * v;
                    } else {
                        f.vorticity_mean[1] -= wt * v;
                    }
                }
            }
        }
    }
    Ok(f)
}

/// <(omega . grad) u>, reduced to wall traces of u1 d1 u2; the second
/// component is a total x1-derivative and vanishes.
pub fn vorticity_stretching_mean(spec: &ModelSpec, x: &[f64], k1: f64) -> Result<[f64; 2]> {
    check_state(spec, x)?;
    let v = DomainConstants::new(k1).v;
    let layout = spec.layout();
    let mut s = 0.0;
    for (i, n) in layout.iter().enumerate() {
        if n.kind != Kind::U || n.m.m1 == 0 {
            continue;
        }
        let a = normalizer_eta(n.m) / (n.m.km_sq(k1).sqrt() * v) * n.m.m3 as f64;
        for (j, nn) in layout.iter().enumerate() {
            if nn.kind != Kind::W || nn.m.m1 != n.m.m1 || nn.p1 == n.p1 || (n.m.m3 + nn.m.m3) % 2 == 0 {
                continue;
            }
            let b = normalizer_eta(nn.m) / v;
            let horizontal = if n.p1 == 1 { -PI } else { PI } * n.m.m1 as f64;
            s += x[i] * x[j] * a * b * horizontal * -2.0;
        }
    }
    Ok([s, 0.0])
}

/// Both sides of one balance identity plus a magnitude scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceTerms {
    /// Chain-rule time derivative of the functional.
    pub lhs: f64,
    /// Closed-form right-hand side.
    pub rhs: f64,
    /// Sum of absolute sizes of the contributing terms.
    pub scale: f64,
}

impl BalanceTerms {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    /// Residual over scale; zero when every term vanishes.
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.residual() / self.scale
        } else {
            0.0
        }
    }
}

/// The five balances at one state, ordered kinetic, variance, potential,
/// vorticity x1, vorticity x2.
pub fn balance_at(model: &CompiledModel, x: &[f64]) -> Result<[BalanceTerms; 5]> {
    let spec = model.spec();
    let p = *model.params();
    let k1 = p.aspect();
    let f = model.rhs(x)?;
    let hf = heat_flux(spec, x, k1)?;
    let mut kin = (0.0, 0.0, 0.0);
    let mut var = (0.0, 0.0, 0.0);
    let mut pot = (0.0, 0.0, 0.0);
    let mut vort_lhs = [0.0; 2];
    let mut vort_diff = [0.0; 2];
    let mut vort_cor = [0.0; 2];
    for (i, n) in spec.layout().iter().enumerate() {
        let ksq = n.m.km_sq(k1);
        match n.kind {
            Kind::Theta => {
                var.0 += x[i] * f[i];
                var.2 += (x[i] * f[i]).abs();
                var.1 -= ksq * x[i] * x[i];
                if is_stratified(n) {
                    let c = potential_coefficient(n.m.m3, k1);
                    pot.0 += c * f[i];
                    pot.2 += (c * f[i]).abs();
                    let m3 = n.m.m3 as f64;
                    pot.1 -= m3 * m3 * c * x[i];
                    pot.2 += (m3 * m3 * c * x[i]).abs();
                }
            }
            Kind::U | Kind::W => {
                kin.0 += x[i] * f[i];
                kin.2 += (x[i] * f[i]).abs();
                kin.1 -= p.prandtl() * ksq * x[i] * x[i];
                if let Some(wt) = shear_weight(n, k1) {
                    let m3sq = (n.m.m3 * n.m.m3) as f64;
                    let ps = p.prandtl() * p.rotation();
                    // (d/dt, P d3^2, PS d3) of the mean vorticity; u and w feed opposite components
                    if n.kind == Kind::W {
                        vort_lhs[0] += wt * f[i];
                        vort_diff[0] -= p.prandtl() * m3sq * wt * x[i];
                        vort_cor[1] -= ps * wt * x[i];
                    } else {
                        vort_lhs[1] -= wt * f[i];
                        vort_diff[1] += p.prandtl() * m3sq * wt * x[i];
                        vort_cor[0] -= ps * wt * x[i];
                    }
                }
            }
        }
    }
    let kin_force = p.prandtl() * p.rayleigh() * hf;
    let kinetic = BalanceTerms { lhs: kin.0, rhs: kin.1 + kin_force, scale: kin.2 + kin.1.abs() + kin_force.abs() };
    let variance = BalanceTerms { lhs: var.0, rhs: var.1 + hf, scale: var.2 + var.1.abs() + hf.abs() };
    let potential = BalanceTerms { lhs: pot.0, rhs: pot.1 - hf / PI, scale: pot.2 + (hf / PI).abs() };
    let stretch = vorticity_stretching_mean(spec, x, k1)?;
    let vort = |c: usize| {
        let rhs = vort_diff[c] + stretch[c] + vort_cor[c];
        BalanceTerms {
            lhs: vort_lhs[c],
            rhs,
            scale: vort_lhs[c].abs() + vort_diff[c].abs() + stretch[c].abs() + vort_cor[c].abs(),
        }
    };
    Ok([kinetic, variance, potential, vort(0), vort(1)])
}

/// Absolute residual series of the five balances along a trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BalanceResiduals {
    pub kinetic: ScalarSeries,
    pub variance: ScalarSeries,
    pub potential: ScalarSeries,
    pub vorticity_x: ScalarSeries,
    pub vorticity_y: ScalarSeries,
    /// Per-sample term scales in the same order.
    pub scales: Vec<[f64; 5]>,
}

impl BalanceResiduals {
    fn series(&self) -> [&ScalarSeries; 5] {
        [&self.kinetic, &self.variance, &self.potential, &self.vorticity_x, &self.vorticity_y]
    }

    /// Largest residual-to-scale ratio of each balance over the samples.
    pub fn max_relative(&self) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (b, s) in self.series().iter().enumerate() {
            for (k, r) in s.values.iter().enumerate() {
                let sc = self.scales[k][b];
                if sc > 0.0 {
                    out[b] = f64::max(out[b], r / sc);
                }
            }
        }
        out
    }

    /// Largest absolute residual of each balance.
    pub fn max_abs(&self) -> [f64; 5] {
        self.series().map(|s| s.max_abs())
    }
}

/// Evaluates all balances at every trajectory sample.
pub fn balance_residuals(model: &CompiledModel, traj: &Trajectory) -> Result<BalanceResiduals> {
    let mut out = BalanceResiduals::default();
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let b = balance_at(model, x)?;
        for (s, terms) in
            [&mut out.kinetic, &mut out.variance, &mut out.potential, &mut out.vorticity_x, &mut out.vorticity_y]
                .into_iter()
                .zip(b.iter())
        {
            s.times.push(*t);
            s.values.push(terms.residual());
        }
        out.scales.push(b.map(|t| t.scale));
    }
    Ok(out)
}

/// Running time average (1/t) int_0^t g by the trapezoid rule; the value at t = 0 is g(0).
fn running_mean(times: &[f64], g: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.len());
    let mut acc = 0.0;
    for k in 0..g.len() {
        if k > 0 {
            acc += 0.5 * (times[k] - times[k - 1]) * (g[k] + g[k - 1]);
        }
        let span = times[k] - times[0];
        out.push(if span > 0.0 { acc / span } else { g[k] });
    }
    out
}

/// Finite-time Nusselt number from the stratified temperature modes,
/// 1 - sum (sqrt(k1) m3 / pi) (1/t) int theta^(0,m3).
pub fn nusselt_series(traj: &Trajectory, spec: &ModelSpec, k1: f64) -> Result<ScalarSeries> {
    if traj.is_empty() {
        return Err(HkcError::InvalidInput("empty trajectory".into()));
    }
    let weights: Vec<(usize, f64)> = spec
        .layout()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.kind == Kind::Theta && is_stratified(n))
        .map(|(i, n)| (i, k1.sqrt() * n.m.m3 as f64 / PI))
        .collect();
    let mut g = Vec::with_capacity(traj.len());
    for x in &traj.states {
        check_state(spec, x)?;
        g.push(weights.iter().map(|&(i, w)| w * x[i]).sum::<f64>());
    }
    let mean = running_mean(&traj.times, &g);
    let mut values: Vec<f64> = mean.iter().map(|m| 1.0 - m).collect();
    values[0] = 1.0;
    ScalarSeries::new(traj.times.clone(), values)
}

/// Finite-time Nusselt number from the heat flux, 1 + (k1 / 2 pi^2) (1/t) int <u3 theta>.
pub fn nusselt_flux_series(traj: &Trajectory, spec: &ModelSpec, k1: f64) -> Result<ScalarSeries> {
    if traj.is_empty() {
        return Err(HkcError::InvalidInput("empty trajectory".into()));
    }
    let g = traj.states.iter().map(|x| heat_flux(spec, x, k1)).collect::<Result<Vec<_>>>()?;
    let mean = running_mean(&traj.times, &g);
    let mut values: Vec<f64> = mean.iter().map(|m| 1.0 + k1 / (2.0 * PI * PI) * m).collect();
    values[0] = 1.0;
    ScalarSeries::new(traj.times.clone(), values)
}

/// Stratified-mode Nusselt number of a single state (the t -> infinity value at an equilibrium).
pub fn nusselt_at_state(spec: &ModelSpec, x: &[f64], k1: f64) -> Result<f64> {
    check_state(spec, x)?;
    let s: f64 = spec
        .layout()
        .iter()
        .zip(x)
        .filter(|(n, _)| n.kind == Kind::Theta && is_stratified(n))
        .map(|(n, v)| k1.sqrt() * n.m.m3 as f64 / PI * v)
        .sum();
    Ok(1.0 - s)
}

/// Heat-flux Nusselt number of a single state.
pub fn nusselt_flux_at_state(spec: &ModelSpec, x: &[f64], k1: f64) -> Result<f64> {
    Ok(1.0 + k1 / (2.0 * PI * PI) * heat_flux(spec, x, k1)?)
}

/// Convergence rule: population standard deviation of the values in the
/// second half of the time window is at most `threshold` times |final value|.
/// Fewer than four samples never count as converged.
pub fn converged(nu: &ScalarSeries, threshold: f64) -> bool {
    let n = nu.len();
    if n < 4 {
        return false;
    }
    let t0 = nu.times[0];
    let t1 = nu.times[n - 1];
    let mid = 0.5 * (t0 + t1);
    let tail: Vec<f64> = nu.times.iter().zip(&nu.values).filter(|(t, _)| **t >= mid).map(|(_, v)| *v).collect();
    if tail.is_empty() {
        return false;
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let var = tail.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / tail.len() as f64;
    var.sqrt() <= threshold * nu.values[n - 1].abs()
}

/// Attracting-ball functional and its dissipation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovBall {
    /// (1/2) <|u|^2/(PR) + (theta + 2 pi l)^2>.
    pub weighted_h0: f64,
    /// <|grad u|^2/R + |grad(theta + pi l)|^2> - rho^2; d/dt weighted_h0 = -deficit.
    pub weighted_h1_deficit: f64,
    /// rho^2 = (4 pi^2 / k1) times the number of stratified temperature modes.
    pub rho_sq: f64,
}

/// Evaluates the attracting-ball functional; needs an energy-consistent spec and R > 0.
pub fn lyapunov_ball(spec: &ModelSpec, x: &[f64], params: &Params) -> Result<LyapunovBall> {
    check_state(spec, x)?;
    let report = check_energy_criterion(spec);
    if !report.all_ok() {
        return Err(HkcError::Inconsistent(Box::new(report)));
    }
    let r = params.rayleigh();
    if r <= 0.0 {
        return Err(HkcError::InvalidParams("the attracting-ball functional needs R > 0".into()));
    }
    let k1 = params.aspect();
    let pr = params.prandtl();
    let mut h0 = 0.0;
    let mut h1 = 0.0;
    let mut count = 0usize;
    for (n, &v) in spec.layout().iter().zip(x) {
        let ksq = n.m.km_sq(k1);
        match n.kind {
            Kind::U | Kind::W => {
                h0 += v * v / (pr * r);
                h1 += ksq * v * v / r;
            }
            Kind::Theta => {
                let c = if is_stratified(n) {
                    count += 1;
                    potential_coefficient(n.m.m3, k1)
                } else {
                    0.0
                };
                let a = v + 2.0 * PI * c;
                let b = v + PI * c;
                h0 += a * a;
                h1 += ksq * b * b;
            }
        }
    }
    let rho_sq = 4.0 * PI * PI / k1 * count as f64;
    Ok(LyapunovBall { weighted_h0: 0.5 * h0, weighted_h1_deficit: h1 - rho_sq, rho_sq })
}

/// One diagnostics row per trajectory sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsTable {
    pub times: Vec<f64>,
    pub functionals: Vec<Functionals>,
    pub nusselt: Vec<f64>,
    pub residuals: BalanceResiduals,
}

impl DiagnosticsTable {
    pub fn compute(model: &CompiledModel, traj: &Trajectory) -> Result<Self> {
        let spec = model.spec();
        let functionals =
            traj.states.iter().map(|x| energy_functionals(spec, x, model.params())).collect::<Result<Vec<_>>>()?;
        let nusselt = nusselt_series(traj, spec, model.params().aspect())?.values;
        let residuals = balance_residuals(model, traj)?;
        Ok(Self { times: traj.times.clone(), functionals, nusselt, residuals })
    }

    /// Writes the diagnostics CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t",
            "kinetic",
            "variance",
            "potential",
            "heat_flux",
            "nu",
            "res_kin",
            "res_var",
            "res_pot",
            "res_vort1",
            "res_vort2",
        ])?;
        let r = &self.residuals;
        for k in 0..self.times.len() {
            let f = &self.functionals[k];
            let row = [
                self.times[k],
                f.kinetic,
                f.variance,
                f.potential,
                f.heat_flux,
                self.nusselt[k],
                r.kinetic.values[k],
                r.variance.values[k],
                r.potential.values[k],
                r.vorticity_x.values[k],
                r.vorticity_y.values[k],
            ];
            w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
        }
        w.flush()?;
        Ok(())
    }
}
