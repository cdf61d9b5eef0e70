//! Galerkin bases, interaction tensors and collocation grid.

mod basis;
mod fields;
mod grid;
pub mod quad;
pub mod trig;

pub use basis::{
    tensor_memory_estimate, AtmMode, OcnMode, Resolution, SparseMatrix, SparseTensor,
    SpectralBasis, Zonal, DEFAULT_TENSOR_CAP,
};
pub use fields::{Fields, State, TangentState, Tendency};
pub use grid::{grid_size, Grid};
