use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Graph, GraphError};

/// Parameters of the contextual block-model generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub classes: usize,
    /// Probability that a sampled edge joins two nodes of the same class.
    pub homophily: f64,
    pub avg_degree: f64,
    pub feature_dim: usize,
    /// Per-coordinate offset between class-conditional feature means.
    pub signal: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 500,
            classes: 3,
            homophily: 0.8,
            avg_degree: 6.0,
            feature_dim: 16,
            signal: 1.0,
            seed: 0,
        }
    }
}

/// Generates a labelled graph whose edges are intra-class with probability
/// `homophily` and whose features are Gaussian around class means.
///
/// Class `y` has mean `signal * (1[j mod classes == y] - 1/classes)` in
/// coordinate `j`, so the class means are centred and collapse to zero when
/// `signal == 0`. Inter-class partners are drawn from a uniformly chosen other
/// class. Output is bit-identical for a fixed spec.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Graph, GraphError> {
    let SyntheticSpec {
        n,
        classes,
        homophily,
        avg_degree,
        feature_dim,
        signal,
        seed,
    } = *spec;
    if classes == 0 || n < classes {
        return Err(GraphError::invalid(
            "n",
            format!("need n >= classes >= 1, got n={n}, classes={classes}"),
        ));
    }
    if !(0.0..=1.0).contains(&homophily) {
        return Err(GraphError::invalid(
            "homophily",
            format!("must lie in [0, 1], got {homophily}"),
        ));
    }
    if !(avg_degree > 0.0) || !avg_degree.is_finite() {
        return Err(GraphError::invalid(
            "avg_degree",
            format!("must be positive, got {avg_degree}"),
        ));
    }
    if !signal.is_finite() {
        return Err(GraphError::invalid("signal", "must be finite"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let mut members = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }

    let max_edges = n * (n - 1) / 2;
    let target = ((n as f64 * avg_degree / 2.0).round() as usize).min(max_edges);
    let mut seen = HashSet::with_capacity(target);
    let mut edges = Vec::with_capacity(target);
    let budget = target.saturating_mul(50).max(1000);
    let mut attempts = 0;
    while edges.len() < target && attempts < budget {
        attempts += 1;
        let u = rng.random_range(0..n);
        let own = labels[u];
        let intra = classes == 1 || rng.random_bool(homophily);
        let pool = if intra {
            &members[own]
        } else {
            let mut other = rng.random_range(0..classes - 1);
            if other >= own {
                other += 1;
            }
            &members[other]
        };
        let v = pool[rng.random_range(0..pool.len())];
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if seen.insert(key) {
            edges.push(key);
        }
    }

    let inv_classes = 1.0 / classes as f64;
    let mut features = Vec::with_capacity(n * feature_dim);
    for &y in &labels {
        for j in 0..feature_dim {
            let indicator = if j % classes == y { 1.0 } else { 0.0 };
            let mean = signal * (indicator - inv_classes);
            let noise: f64 = rng.sample(StandardNormal);
            features.push(mean + noise);
        }
    }

    Graph::new(
        format!("synthetic-n{n}-c{classes}-h{homophily}-s{seed}"),
        n,
        classes,
        feature_dim,
        edges,
        features,
        labels,
    )
}
