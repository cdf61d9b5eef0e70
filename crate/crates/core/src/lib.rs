//! Spectral Galerkin model of a two-layer quasi-geostrophic atmosphere coupled
//! to a one-and-a-half-layer ocean with radiative and heat-exchange coupling,
//! plus energy diagnostics, a tangent-linear model and twin experiments.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod oracle;
pub mod par;
pub mod params;
pub mod spectral;
pub mod timestepper;
pub mod tlm;

pub use diagnostics::{EnergyBudget, AbsorbingSet};
pub use error::{Error, Result};
pub use model::{Model, ModelConfig, Switches};
pub use par::Exec;
pub use params::{PhysicalParams, ShortwaveConfig};
pub use spectral::{Fields, Resolution, SpectralBasis, State};
pub use timestepper::{RunState, Scheme, SchemeConfig};
