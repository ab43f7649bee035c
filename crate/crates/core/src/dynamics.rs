//! Compiled ODE system: dense linear operator, sparse quadratic tensor, RHS,
//! Jacobian and Newton equilibria.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{HkcError, Result};
use crate::hierarchy::{check_all, ModelSpec};
use crate::interaction::{interaction_coefficient, linear_couplings, CoefficientRecord, Triad};
use crate::types::{Kind, ModeIndex, Params, WaveVector};

/// Right-hand side of an autonomous ODE, as consumed by the integrator.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Writes f(x) into `out`; both slices have length `dim()`.
    fn rhs_into(&self, x: &[f64], out: &mut [f64]);
}

/// One quadratic term: dX_out/dt gains coeff * X_adv * X_inp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadEntry {
    pub out: usize,
    pub adv: usize,
    #[serde(rename = "in")]
    pub inp: usize,
    pub value: f64,
}

/// Model ready for evaluation.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    spec: ModelSpec,
    params: Params,
    linear: DMatrix<f64>,
    linear_sparse: Vec<(usize, usize, f64)>,
    quad: Vec<QuadEntry>,
}

fn sparse_of(l: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let mut v = Vec::new();
    for i in 0..l.nrows() {
        for j in 0..l.ncols() {
            if l[(i, j)] != 0.0 {
                v.push((i, j, l[(i, j)]));
            }
        }
    }
    v
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(HkcError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Candidate partner wave numbers k'' with k = |k' +- k''|.
fn partners(k: u32, kp: u32) -> Vec<u32> {
    let mut v = vec![k + kp];
    if kp >= k {
        v.push(kp - k);
    }
    if k >= kp {
        v.push(k - kp);
    }
    v.sort_unstable();
    v.dedup();
    v
}

impl CompiledModel {
    /// Compiles a spec, refusing specs that violate the criteria.
    pub fn compile(spec: &ModelSpec, params: &Params) -> Result<Self> {
        let report = check_all(spec, params.rotation() != 0.0);
        if !report.all_ok() {
            return Err(HkcError::Inconsistent(Box::new(report)));
        }
        Ok(Self::compile_unchecked(spec, params))
    }

    /// Compiles without the consistency check (explicit override).
    pub fn compile_unchecked(spec: &ModelSpec, params: &Params) -> Self {
        let linear = Self::assemble_linear(spec, params);
        let quad = Self::assemble_quad(spec, params.aspect());
        let linear_sparse = sparse_of(&linear);
        Self { spec: spec.clone(), params: *params, linear, linear_sparse, quad }
    }

    fn assemble_linear(spec: &ModelSpec, params: &Params) -> DMatrix<f64> {
        let d = spec.dim();
        let mut l = DMatrix::zeros(d, d);
        for (i, n) in spec.layout().iter().enumerate() {
            let lc = linear_couplings(n, params).expect("layout modes are admissible");
            l[(i, i)] = lc.diffusion;
            for (partner, coeff) in [lc.buoyancy, lc.coriolis].into_iter().flatten() {
                if let Some(j) = spec.slot(partner.kind, partner.m) {
                    l[(i, j)] += coeff;
                }
            }
        }
        l
    }

    fn assemble_quad(spec: &ModelSpec, k1: f64) -> Vec<QuadEntry> {
        let layout = spec.layout();
        let index: HashMap<(Kind, WaveVector), usize> =
            layout.iter().enumerate().map(|(i, n)| ((n.kind, n.m), i)).collect();
        let advecting: Vec<(usize, ModeIndex)> =
            layout.iter().copied().enumerate().filter(|(_, n)| n.kind == Kind::U).collect();
        let mut quad = Vec::new();
        for (i, n) in layout.iter().enumerate() {
            for &(j, np) in &advecting {
                for m1 in partners(n.m.m1, np.m.m1) {
                    for m3 in partners(n.m.m3, np.m.m3) {
                        let Some(&k) = index.get(&(n.kind, WaveVector::new(m1, m3))) else {
                            continue;
                        };
                        let t = Triad::new(*n, np, layout[k]);
                        let value = interaction_coefficient(&t, k1);
                        if value != 0.0 {
                            quad.push(QuadEntry { out: i, adv: j, inp: k, value: -value });
                        }
                    }
                }
            }
        }
        quad
    }

    /// Same model with new parameters; the quadratic part is reused when k1 is unchanged.
    pub fn with_params(&self, params: &Params) -> Self {
        if params.aspect() != self.params.aspect() {
            return Self::compile_unchecked(&self.spec, params);
        }
        let linear = Self::assemble_linear(&self.spec, params);
        let linear_sparse = sparse_of(&linear);
        Self { spec: self.spec.clone(), params: *params, linear, linear_sparse, quad: self.quad.clone() }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Dense linear operator.
    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    /// Sparse quadratic tensor.
    pub fn quad(&self) -> &[QuadEntry] {
        &self.quad
    }

    /// Interaction records in the audit format, one per nonzero entry.
    pub fn coefficient_records(&self) -> Vec<CoefficientRecord> {
        let layout = self.spec.layout();
        self.quad
            .iter()
            .map(|e| CoefficientRecord {
                triad: Triad::new(layout[e.out], layout[e.adv], layout[e.inp]),
                value: -e.value,
            })
            .collect()
    }

    /// Quadratic part alone.
    pub fn quadratic(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        let mut out = vec![0.0; self.dim()];
        self.add_quadratic(x, &mut out);
        Ok(out)
    }

    fn add_quadratic(&self, x: &[f64], out: &mut [f64]) {
        for e in &self.quad {
            out[e.out] += e.value * x[e.adv] * x[e.inp];
        }
    }

    /// f(x) = L x + Q(x, x).
    pub fn rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        let mut out = vec![0.0; self.dim()];
        self.rhs_into(x, &mut out);
        Ok(out)
    }

    /// Analytic Jacobian of the RHS.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_len(self.dim(), x.len())?;
        let mut j = self.linear.clone();
        for e in &self.quad {
            j[(e.out, e.adv)] += e.value * x[e.inp];
            j[(e.out, e.inp)] += e.value * x[e.adv];
        }
        Ok(j)
    }

    /// Newton iteration with LU solves until the max-norm residual is below `tol`.
    pub fn find_equilibrium(&self, guess: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        check_len(self.dim(), guess.len())?;
        let mut x = guess.to_vec();
        let mut f = self.rhs(&x)?;
        let norm = |v: &[f64]| v.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        for it in 0..max_iter {
            let res = norm(&f);
            if res <= tol {
                return Ok(x);
            }
            let lu = self.jacobian(&x)?.lu();
            let Some(dx) = lu.solve(&DVector::from_iterator(f.len(), f.iter().map(|v| -v))) else {
                return Err(HkcError::NoConvergence { iterations: it, residual: res, last: x });
            };
            for (xi, di) in x.iter_mut().zip(dx.iter()) {
                *xi += di;
            }
            f = self.rhs(&x)?;
            if f.iter().any(|v| !v.is_finite()) {
                return Err(HkcError::NoConvergence { iterations: it + 1, residual: f64::INFINITY, last: x });
            }
        }
        let res = norm(&f);
        if res <= tol {
            return Ok(x);
        }
        Err(HkcError::NoConvergence { iterations: max_iter, residual: res, last: x })
    }
}

impl OdeSystem for CompiledModel {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn rhs_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(i, j, a) in &self.linear_sparse {
            out[i] += a * x[j];
        }
        self.add_quadratic(x, out);
    }
}
