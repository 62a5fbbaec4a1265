//! Graph data model and everything that turns a graph into numeric operators.

mod io;
mod operators;
mod sparse;
mod spectrum;
mod split;
mod synthetic;

pub use io::{load_dataset, parse_dataset, save_dataset, to_json_string, Dataset};
pub use operators::{
    build_operator, estimate_lambda_max, prune_mean_std, prune_mean_std_op, LaplacianKind,
    LaplacianVariant, DEFAULT_PRUNE_EPSILON,
};
pub use sparse::SparseOp;
pub use spectrum::{eig_operator, SpectrumReport, MAX_DENSE_EIG_NODES};
pub use split::{make_split, Split, SplitRatios};
pub use synthetic::{gen_synthetic, SyntheticSpec};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error(
        "stratified split infeasible: class {class} (size {size}) receives zero training nodes"
    )]
    StratificationInfeasible { class: usize, size: usize },
    #[error("operator is not symmetric: |M[{row}][{col}] - M[{col}][{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("dense eigensolver limited to {max} nodes, got {got}")]
    TooLarge { max: usize, got: usize },
    #[error("operator is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite largest-eigenvalue estimate {0}")]
    NonFiniteLambda(f64),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl GraphError {
    pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        GraphError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// An undirected, unweighted attributed graph with node labels.
///
/// Edges are stored once as `(u, v)` with `u < v`; self-loops never appear in
/// storage and are only introduced by operator construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    name: String,
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    features: Vec<f64>,
    labels: Vec<usize>,
    degrees: Vec<usize>,
}

impl Graph {
    /// Builds a graph from raw parts. Edges may arrive in either direction and
    /// with duplicates; they are symmetrized and deduplicated, self-loops dropped.
    /// `features` is row-major `num_nodes x num_features`.
    pub fn new(
        name: impl Into<String>,
        num_nodes: usize,
        num_classes: usize,
        num_features: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self, GraphError> {
        let mut stored = Vec::new();
        for (i, (u, v)) in edges.into_iter().enumerate() {
            if u >= num_nodes || v >= num_nodes {
                return Err(GraphError::invalid(
                    format!("edges[{i}]"),
                    format!("endpoint out of range: [{u}, {v}] with num_nodes={num_nodes}"),
                ));
            }
            if u != v {
                stored.push((u.min(v), u.max(v)));
            }
        }
        stored.sort_unstable();
        stored.dedup();

        if features.len() != num_nodes * num_features {
            return Err(GraphError::invalid(
                "features",
                format!(
                    "expected {num_nodes}x{num_features} = {} values, got {}",
                    num_nodes * num_features,
                    features.len()
                ),
            ));
        }
        if let Some(pos) = features.iter().position(|x| !x.is_finite()) {
            return Err(GraphError::invalid(
                format!(
                    "features[{}][{}]",
                    pos / num_features.max(1),
                    pos % num_features.max(1)
                ),
                "non-finite value",
            ));
        }
        if labels.len() != num_nodes {
            return Err(GraphError::invalid(
                "labels",
                format!("expected {num_nodes} labels, got {}", labels.len()),
            ));
        }
        if let Some(i) = labels.iter().position(|&l| l >= num_classes) {
            return Err(GraphError::invalid(
                format!("labels[{i}]"),
                format!("label {} out of range [0, {num_classes})", labels[i]),
            ));
        }

        let mut degrees = vec![0usize; num_nodes];
        for &(u, v) in &stored {
            degrees[u] += 1;
            degrees[v] += 1;
        }
        Ok(Graph {
            name: name.into(),
            num_nodes,
            num_features,
            num_classes,
            edges: stored,
            features,
            labels,
            degrees,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Undirected edges, each stored once with the smaller endpoint first.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, node: usize) -> &[f64] {
        &self.features[node * self.num_features..(node + 1) * self.num_features]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Fraction of edges whose endpoints share a label (edge homophily).
    pub fn edge_homophily(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        let same = self
            .edges
            .iter()
            .filter(|&&(u, v)| self.labels[u] == self.labels[v])
            .count();
        same as f64 / self.edges.len() as f64
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}
