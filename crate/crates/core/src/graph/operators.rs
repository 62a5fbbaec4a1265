use serde::{Deserialize, Serialize};

use super::{Graph, GraphError, SparseOp};

pub const DEFAULT_PRUNE_EPSILON: f64 = 1e-10;

const POWER_ITERATIONS: usize = 100;
const POWER_TOLERANCE: f64 = 1e-6;
const LAMBDA_MAX_FALLBACK: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplacianKind {
    /// `D̃^{-1/2} (A + cI) D̃^{-1/2}`
    AdjacencySymNorm,
    /// `D̃^{-1} (A + cI)`
    AdjacencyRwNorm,
    /// `D - A`
    Combinatorial,
    /// `I - D̃^{-1/2} (A + cI) D̃^{-1/2}`
    SymLaplacian,
    /// `I - D̃^{-1} (A + cI)`
    RwLaplacian,
    /// `2 L_sym / λ_max - I`
    ScaledLaplacian,
    /// mean/std-pruned `A + cI`, normalized by its global sum
    PrunedNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacianVariant {
    pub kind: LaplacianKind,
    /// The constant `c` in `Ã = A + cI`.
    pub self_loop_weight: f64,
}

impl LaplacianVariant {
    pub fn new(kind: LaplacianKind, self_loop_weight: f64) -> Result<Self, GraphError> {
        if !self_loop_weight.is_finite() || self_loop_weight < 0.0 {
            return Err(GraphError::invalid(
                "self_loop_weight",
                format!("must be finite and non-negative, got {self_loop_weight}"),
            ));
        }
        Ok(LaplacianVariant {
            kind,
            self_loop_weight,
        })
    }

    pub fn sym_norm(c: f64) -> Self {
        LaplacianVariant {
            kind: LaplacianKind::AdjacencySymNorm,
            self_loop_weight: c,
        }
    }

    pub fn of(kind: LaplacianKind) -> Self {
        LaplacianVariant {
            kind,
            self_loop_weight: 0.0,
        }
    }
}

/// `d^{-1/2}` with the isolated-node convention `0^{-1/2} = 0`.
fn inv_sqrt(d: f64) -> f64 {
    if d > 0.0 {
        1.0 / d.sqrt()
    } else {
        0.0
    }
}

fn inv(d: f64) -> f64 {
    if d > 0.0 {
        1.0 / d
    } else {
        0.0
    }
}

fn renormalized_degrees(graph: &Graph, c: f64) -> Vec<f64> {
    graph.degrees().iter().map(|&d| d as f64 + c).collect()
}

/// Symmetric normalized `Ã`, optionally as `I - Â`. Each unordered pair is
/// weighted once so the result is exactly symmetric.
fn sym_normalized(graph: &Graph, c: f64, laplacian: bool) -> Vec<(usize, usize, f64)> {
    let n = graph.num_nodes();
    let scale: Vec<f64> = renormalized_degrees(graph, c)
        .into_iter()
        .map(inv_sqrt)
        .collect();
    let sign = if laplacian { -1.0 } else { 1.0 };
    let mut t = Vec::with_capacity(2 * graph.num_edges() + n);
    for &(u, v) in graph.edges() {
        let w = sign * scale[u] * scale[v];
        t.push((u, v, w));
        t.push((v, u, w));
    }
    for (i, s) in scale.iter().enumerate() {
        let self_term = c * s * s;
        let diag = if laplacian {
            1.0 - self_term
        } else {
            self_term
        };
        if diag != 0.0 {
            t.push((i, i, diag));
        }
    }
    t
}

fn rw_normalized(graph: &Graph, c: f64, laplacian: bool) -> Vec<(usize, usize, f64)> {
    let n = graph.num_nodes();
    let scale: Vec<f64> = renormalized_degrees(graph, c)
        .into_iter()
        .map(inv)
        .collect();
    let sign = if laplacian { -1.0 } else { 1.0 };
    let mut t = Vec::with_capacity(2 * graph.num_edges() + n);
    for &(u, v) in graph.edges() {
        t.push((u, v, sign * scale[u]));
        t.push((v, u, sign * scale[v]));
    }
    for (i, s) in scale.iter().enumerate() {
        let self_term = c * s;
        let diag = if laplacian {
            1.0 - self_term
        } else {
            self_term
        };
        if diag != 0.0 {
            t.push((i, i, diag));
        }
    }
    t
}

fn with_self_loops(graph: &Graph, c: f64) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::with_capacity(2 * graph.num_edges() + graph.num_nodes());
    for &(u, v) in graph.edges() {
        t.push((u, v, 1.0));
        t.push((v, u, 1.0));
    }
    if c != 0.0 {
        t.extend((0..graph.num_nodes()).map(|i| (i, i, c)));
    }
    t
}

/// Materializes the requested operator as an `n x n` sparse matrix.
pub fn build_operator(graph: &Graph, variant: LaplacianVariant) -> Result<SparseOp, GraphError> {
    let n = graph.num_nodes();
    let c = variant.self_loop_weight;
    let triplets = match variant.kind {
        LaplacianKind::AdjacencySymNorm => sym_normalized(graph, c, false),
        LaplacianKind::AdjacencyRwNorm => rw_normalized(graph, c, false),
        LaplacianKind::SymLaplacian => sym_normalized(graph, c, true),
        LaplacianKind::RwLaplacian => rw_normalized(graph, c, true),
        LaplacianKind::Combinatorial => {
            let mut t = Vec::with_capacity(2 * graph.num_edges() + n);
            for &(u, v) in graph.edges() {
                t.push((u, v, -1.0));
                t.push((v, u, -1.0));
            }
            for (i, &d) in graph.degrees().iter().enumerate() {
                if d > 0 {
                    t.push((i, i, d as f64));
                }
            }
            t
        }
        LaplacianKind::ScaledLaplacian => {
            let lsym = SparseOp::from_triplets(n, n, sym_normalized(graph, c, true))?;
            let (lambda_max, residual) = power_iteration(&lsym);
            if !lambda_max.is_finite() {
                return Err(GraphError::NonFiniteLambda(lambda_max));
            }
            // An underestimate pushes the top of the spectrum past 1. L_sym
            // never exceeds 2, so the padded estimate is capped there.
            let factor = 2.0 / (lambda_max + residual).min(LAMBDA_MAX_FALLBACK);
            let mut t: Vec<_> = lsym
                .entries()
                .map(|(r, col, w)| (r, col, factor * w))
                .collect();
            t.extend((0..n).map(|i| (i, i, -1.0)));
            t
        }
        LaplacianKind::PrunedNorm => return prune_mean_std(graph, c, DEFAULT_PRUNE_EPSILON),
    };
    SparseOp::from_triplets(n, n, triplets)
}

/// Largest eigenvalue of a symmetric operator by power iteration with a
/// Rayleigh-quotient stopping rule. Returns 2.0 when the iteration fails to
/// settle within the budget.
pub fn estimate_lambda_max(op: &SparseOp) -> f64 {
    power_iteration(op).0
}

/// Rayleigh quotient and residual norm at the point the iteration stopped.
/// The quotient approaches from below and the stopping rule can fire well
/// before it is accurate when the top two eigenvalues are close; quotient plus
/// residual leans high instead. Residual is 0 on the fallback path.
fn power_iteration(op: &SparseOp) -> (f64, f64) {
    let n = op.rows();
    if n == 0 {
        return (LAMBDA_MAX_FALLBACK, 0.0);
    }
    // Fixed pseudo-random start so no eigenvector is systematically missed.
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407);
            0.5 + (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    normalize(&mut v);

    let mut previous: Option<f64> = None;
    for _ in 0..POWER_ITERATIONS {
        let w = op.mul_vec(&v);
        let rayleigh: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return (LAMBDA_MAX_FALLBACK, 0.0);
        }
        if let Some(prev) = previous {
            if rayleigh > 0.0 && ((rayleigh - prev) / rayleigh).abs() < POWER_TOLERANCE {
                let residual = w
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - rayleigh * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                return (rayleigh, residual);
            }
        }
        v = w.into_iter().map(|x| x / norm).collect();
        previous = Some(rayleigh);
    }
    (LAMBDA_MAX_FALLBACK, 0.0)
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Prunes `A + cI` below `mean - std` of its nonzero entries and normalizes
/// the survivors by the global sum of `A + cI` plus `epsilon`.
pub fn prune_mean_std(
    graph: &Graph,
    self_loop_weight: f64,
    epsilon: f64,
) -> Result<SparseOp, GraphError> {
    let n = graph.num_nodes();
    let tilde = SparseOp::from_triplets(n, n, with_self_loops(graph, self_loop_weight))?;
    prune_mean_std_op(&tilde, epsilon)
}

/// Pruning rule applied to an already-materialized weighted operator.
pub fn prune_mean_std_op(op: &SparseOp, epsilon: f64) -> Result<SparseOp, GraphError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(GraphError::invalid(
            "epsilon",
            format!("must be positive, got {epsilon}"),
        ));
    }
    let nonzero: Vec<f64> = op.values().iter().copied().filter(|&w| w != 0.0).collect();
    if nonzero.is_empty() {
        return SparseOp::from_triplets(op.rows(), op.cols(), Vec::new());
    }
    let count = nonzero.len() as f64;
    let total: f64 = nonzero.iter().sum();
    let mean = total / count;
    let var = nonzero.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / count;
    let threshold = mean - var.sqrt();
    let denom = total + epsilon;
    let kept = op
        .entries()
        .filter(|&(_, _, w)| w != 0.0 && w >= threshold)
        .map(|(r, c, w)| (r, c, w / denom))
        .collect();
    SparseOp::from_triplets(op.rows(), op.cols(), kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::new(
            "p3",
            3,
            1,
            1,
            vec![(0, 1), (1, 2)],
            vec![0.0; 3],
            vec![0; 3],
        )
        .unwrap()
    }

    #[test]
    fn p3_sym_norm_with_self_loop() {
        let op = build_operator(&path3(), LaplacianVariant::sym_norm(1.0)).unwrap();
        // Oracle: D̃ = diag(2, 3, 2), Â = D̃^{-1/2}(A + I)D̃^{-1/2}
        let d = [2.0f64, 3.0, 2.0];
        let a = [[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                let expect = a[i][j] / (d[i].sqrt() * d[j].sqrt());
                assert!((op.get(i, j) - expect).abs() < 1e-15, "({i},{j})");
            }
        }
        assert!((op.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((op.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((op.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert_eq!(op.max_asymmetry().2, 0.0);
    }

    #[test]
    fn combinatorial_on_edgeless_graph_is_zero() {
        let g = Graph::new("e", 4, 1, 1, vec![], vec![0.0; 4], vec![0; 4]).unwrap();
        let op = build_operator(&g, LaplacianVariant::of(LaplacianKind::Combinatorial)).unwrap();
        assert!(op.to_dense().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn isolated_nodes_have_zero_normalized_rows() {
        let g = Graph::new("iso", 3, 1, 1, vec![(0, 1)], vec![0.0; 3], vec![0; 3]).unwrap();
        let op = build_operator(&g, LaplacianVariant::sym_norm(0.0)).unwrap();
        assert!(op.to_dense()[6..9].iter().all(|&x| x == 0.0));
        let rw = build_operator(&g, LaplacianVariant::of(LaplacianKind::AdjacencyRwNorm)).unwrap();
        assert!(rw.to_dense().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn rw_norm_rows_sum_to_one() {
        let g = path3();
        let op = build_operator(
            &g,
            LaplacianVariant::new(LaplacianKind::AdjacencyRwNorm, 2.0).unwrap(),
        )
        .unwrap();
        let dense = op.to_dense();
        for r in 0..3 {
            let s: f64 = dense[r * 3..r * 3 + 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn power_iteration_on_p3() {
        let op =
            build_operator(&path3(), LaplacianVariant::of(LaplacianKind::SymLaplacian)).unwrap();
        assert!((estimate_lambda_max(&op) - 2.0).abs() < 1e-5);
    }

    #[test]
    fn prune_two_node_example() {
        let g = Graph::new("pair", 2, 1, 1, vec![(0, 1)], vec![0.0; 2], vec![0; 2]).unwrap();
        let op = prune_mean_std(&g, 2.0, DEFAULT_PRUNE_EPSILON).unwrap();
        // Ã = [[2,1],[1,2]]: mean 1.5, std 0.5, threshold 1.0 keeps everything.
        assert_eq!(op.nnz(), 4);
        assert!((op.get(0, 1) - 1.0 / (6.0 + 1e-10)).abs() < 1e-12);
        assert!((op.get(0, 0) - 2.0 / (6.0 + 1e-10)).abs() < 1e-12);
    }

    #[test]
    fn prune_weighted_toy_drops_small_entry() {
        let toy = SparseOp::from_triplets(
            2,
            2,
            vec![(0, 0, 5.0), (0, 1, 5.0), (1, 0, 5.0), (1, 1, 1.0)],
        )
        .unwrap();
        // mean 4, std sqrt(3), threshold 4 - 1.732 = 2.268
        let out = prune_mean_std_op(&toy, 1e-10).unwrap();
        assert_eq!(out.get(1, 1), 0.0);
        assert_eq!(out.nnz(), 3);
        assert!((out.get(0, 1) - 5.0 / (16.0 + 1e-10)).abs() < 1e-15);
    }

    #[test]
    fn prune_equal_entries_keeps_all() {
        let toy = SparseOp::from_triplets(2, 2, vec![(0, 1, 3.0), (1, 0, 3.0)]).unwrap();
        assert_eq!(prune_mean_std_op(&toy, 1e-10).unwrap().nnz(), 2);
    }

    #[test]
    fn prune_rejects_nonpositive_epsilon() {
        let toy = SparseOp::identity(2);
        assert!(prune_mean_std_op(&toy, 0.0).is_err());
    }

    #[test]
    fn negative_self_loop_weight_rejected() {
        assert!(LaplacianVariant::new(LaplacianKind::AdjacencySymNorm, -1.0).is_err());
    }
}
