use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Graph, GraphError, Split};

/// A graph plus the split stored alongside it, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub split: Option<Split>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    name: String,
    num_nodes: i64,
    num_classes: i64,
    feature_dim: i64,
    edges: Vec<[i64; 2]>,
    features: Vec<Vec<f64>>,
    labels: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    splits: Option<SplitFile>,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    train: Vec<i64>,
    val: Vec<i64>,
    test: Vec<i64>,
}

fn count(path: &str, v: i64) -> Result<usize, GraphError> {
    usize::try_from(v)
        .map_err(|_| GraphError::invalid(path, format!("must be non-negative, got {v}")))
}

fn indices(field: &str, values: &[i64], n: usize) -> Result<Vec<usize>, GraphError> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| match usize::try_from(v) {
            Ok(u) if u < n => Ok(u),
            _ => Err(GraphError::invalid(
                format!("{field}[{i}]"),
                format!("index {v} out of range [0, {n})"),
            )),
        })
        .collect()
}

/// Parses the JSON dataset document.
pub fn parse_dataset(text: &str) -> Result<Dataset, GraphError> {
    let doc: DatasetFile =
        serde_json::from_str(text).map_err(|e| GraphError::invalid("$", e.to_string()))?;
    let n = count("num_nodes", doc.num_nodes)?;
    let classes = count("num_classes", doc.num_classes)?;
    let dim = count("feature_dim", doc.feature_dim)?;

    let mut edges = Vec::with_capacity(doc.edges.len());
    for (i, [u, v]) in doc.edges.iter().copied().enumerate() {
        let ok = |x: i64| usize::try_from(x).ok().filter(|&x| x < n);
        match (ok(u), ok(v)) {
            (Some(a), Some(b)) => edges.push((a, b)),
            _ => {
                return Err(GraphError::invalid(
                    format!("edges[{i}]"),
                    format!("endpoint out of range: [{u}, {v}] with num_nodes={n}"),
                ))
            }
        }
    }

    if doc.features.len() != n {
        return Err(GraphError::invalid(
            "features",
            format!("expected {n} rows, got {}", doc.features.len()),
        ));
    }
    let mut features = Vec::with_capacity(n * dim);
    for (i, row) in doc.features.iter().enumerate() {
        if row.len() != dim {
            return Err(GraphError::invalid(
                format!("features[{i}]"),
                format!("expected {dim} values, got {}", row.len()),
            ));
        }
        features.extend_from_slice(row);
    }

    let labels = doc
        .labels
        .iter()
        .enumerate()
        .map(|(i, &l)| match usize::try_from(l) {
            Ok(u) if u < classes => Ok(u),
            _ => Err(GraphError::invalid(
                format!("labels[{i}]"),
                format!("label {l} out of range [0, {classes})"),
            )),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let graph = Graph::new(doc.name, n, classes, dim, edges, features, labels)?;
    let split = match doc.splits {
        Some(s) => {
            let split = Split {
                train: indices("splits.train", &s.train, n)?,
                val: indices("splits.val", &s.val, n)?,
                test: indices("splits.test", &s.test, n)?,
            };
            split.check(n)?;
            Some(split)
        }
        None => None,
    };
    Ok(Dataset { graph, split })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, GraphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| GraphError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_dataset(&text)
}

pub fn to_json_string(graph: &Graph, split: Option<&Split>) -> String {
    let as_i64 = |v: &[usize]| v.iter().map(|&x| x as i64).collect::<Vec<_>>();
    let doc = DatasetFile {
        name: graph.name().to_string(),
        num_nodes: graph.num_nodes() as i64,
        num_classes: graph.num_classes() as i64,
        feature_dim: graph.num_features() as i64,
        edges: graph
            .edges()
            .iter()
            .map(|&(u, v)| [u as i64, v as i64])
            .collect(),
        features: (0..graph.num_nodes())
            .map(|i| graph.feature_row(i).to_vec())
            .collect(),
        labels: as_i64(graph.labels()),
        splits: split.map(|s| SplitFile {
            train: as_i64(&s.train),
            val: as_i64(&s.val),
            test: as_i64(&s.test),
        }),
    };
    serde_json::to_string(&doc).expect("dataset serializes")
}

pub fn save_dataset(
    graph: &Graph,
    split: Option<&Split>,
    path: impl AsRef<Path>,
) -> Result<(), GraphError> {
    let path = path.as_ref();
    fs::write(path, to_json_string(graph, split)).map_err(|e| GraphError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
