use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{GraphError, LaplacianVariant, SparseOp};

pub const MAX_DENSE_EIG_NODES: usize = 512;
const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub operator_kind: Option<LaplacianVariant>,
}

impl SpectrumReport {
    pub fn with_kind(mut self, variant: LaplacianVariant) -> Self {
        self.operator_kind = Some(variant);
        self
    }

    pub fn min(&self) -> Option<f64> {
        self.eigenvalues.first().copied()
    }

    pub fn max(&self) -> Option<f64> {
        self.eigenvalues.last().copied()
    }
}

/// Dense symmetric eigendecomposition; intended as a reference check on
/// small operators.
pub fn eig_operator(op: &SparseOp) -> Result<SpectrumReport, GraphError> {
    if op.rows() != op.cols() {
        return Err(GraphError::NotSquare {
            rows: op.rows(),
            cols: op.cols(),
        });
    }
    let n = op.rows();
    if n > MAX_DENSE_EIG_NODES {
        return Err(GraphError::TooLarge {
            max: MAX_DENSE_EIG_NODES,
            got: n,
        });
    }
    let (row, col, diff) = op.max_asymmetry();
    if diff > SYMMETRY_TOLERANCE {
        return Err(GraphError::NotSymmetric { row, col, diff });
    }
    let dense = DMatrix::from_row_slice(n, n, &op.to_dense());
    let mut eigenvalues: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(SpectrumReport {
        eigenvalues,
        operator_kind: None,
    })
}
