//! Output-shape rules shared by the graph builder and static checkers.

use super::graph::AutodiffError;
use super::tensor::Shape;

/// Elementwise broadcast: each dimension must match or be 1 on one side.
pub fn broadcast(op: &'static str, a: Shape, b: Shape) -> Result<Shape, AutodiffError> {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(AutodiffError::ShapeMismatch { op, lhs: a, rhs: b }),
    }
}

pub fn matmul(a: Shape, b: Shape) -> Result<Shape, AutodiffError> {
    if a.1 != b.0 {
        return Err(AutodiffError::ShapeMismatch {
            op: "matmul",
            lhs: a,
            rhs: b,
        });
    }
    Ok((a.0, b.1))
}

pub fn spmm(op: Shape, x: Shape) -> Result<Shape, AutodiffError> {
    if op.1 != x.0 {
        return Err(AutodiffError::ShapeMismatch {
            op: "spmm",
            lhs: op,
            rhs: x,
        });
    }
    Ok((op.0, x.1))
}

pub fn concat_cols(a: Shape, b: Shape) -> Result<Shape, AutodiffError> {
    if a.0 != b.0 {
        return Err(AutodiffError::ShapeMismatch {
            op: "concat",
            lhs: a,
            rhs: b,
        });
    }
    Ok((a.0, a.1 + b.1))
}

/// `adj` must be square `n x n`, scores `n x 1`, values `n x d`.
pub fn edge_attn_agg(adj: Shape, src: Shape, dst: Shape, x: Shape) -> Result<Shape, AutodiffError> {
    let n = adj.0;
    if adj.0 != adj.1 {
        return Err(AutodiffError::ShapeMismatch {
            op: "attn_agg",
            lhs: adj,
            rhs: adj,
        });
    }
    for s in [src, dst] {
        if s != (n, 1) {
            return Err(AutodiffError::ShapeMismatch {
                op: "attn_agg",
                lhs: (n, 1),
                rhs: s,
            });
        }
    }
    if x.0 != n {
        return Err(AutodiffError::ShapeMismatch {
            op: "attn_agg",
            lhs: adj,
            rhs: x,
        });
    }
    Ok(x)
}
