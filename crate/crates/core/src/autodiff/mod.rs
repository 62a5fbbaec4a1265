//! Minimal reverse-mode automatic differentiation over dense matrices, with
//! sparse graph operators entering only as fixed left factors.

mod adam;
pub mod gradcheck;
mod graph;
pub mod shapes;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{
    AutodiffError, ComputeGraph, Gradients, Interrupt, Mode, NodeId, OperatorId, ParamInit,
    Parameter,
};
pub use tensor::{CsrMatrix, Real, Shape, Tensor};
