//! Energetically consistent spectral-Galerkin truncations of the rotating
//! Boussinesq-Coriolis equations: model generation, simulation, diagnostics
//! and origin stability theory.

// `!(x > 0.0)` style guards are kept because they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod hierarchy;
pub mod integrator;
pub mod interaction;
pub mod stability;
pub mod sweep;
pub mod types;

pub use dynamics::{CompiledModel, OdeSystem, QuadEntry};
pub use error::{HkcError, Result};
pub use hierarchy::{build_hkc, model_dimension, CriteriaReport, ModelSpec};
pub use integrator::{integrate, IntegratorConfig, Trajectory};
pub use types::{Kind, ModeIndex, Params, WaveVector};
