use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GraphError;

/// Fractions of nodes assigned to each partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const SPARSE: SplitRatios = SplitRatios {
        train: 0.025,
        val: 0.025,
        test: 0.95,
    };
    pub const DENSE: SplitRatios = SplitRatios {
        train: 0.6,
        val: 0.2,
        test: 0.2,
    };

    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, GraphError> {
        let r = SplitRatios { train, val, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for (name, v) in [
            ("train", self.train),
            ("val", self.val),
            ("test", self.test),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(GraphError::invalid(
                    format!("ratios.{name}"),
                    format!("must be non-negative, got {v}"),
                ));
            }
        }
        if self.train + self.val + self.test > 1.0 + 1e-9 {
            return Err(GraphError::invalid(
                "ratios",
                "fractions sum to more than 1",
            ));
        }
        Ok(())
    }

    /// Parses `a,b,c` given either as fractions or as percentages summing to 100.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let parts: Vec<f64> = text
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| GraphError::invalid("split", format!("{text:?}: {e}")))?;
        if parts.len() != 3 {
            return Err(GraphError::invalid(
                "split",
                format!("expected three values, got {text:?}"),
            ));
        }
        let sum: f64 = parts.iter().sum();
        let scale = if sum > 1.0 + 1e-9 { 100.0 } else { 1.0 };
        SplitRatios::new(parts[0] / scale, parts[1] / scale, parts[2] / scale)
    }

    fn fills_everything(&self) -> bool {
        (self.train + self.val + self.test - 1.0).abs() < 1e-9
    }
}

/// Disjoint train/validation/test node index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Checks range and pairwise disjointness.
    pub fn check(&self, n: usize) -> Result<(), GraphError> {
        let mut owner = vec![None::<&str>; n];
        for (name, set) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            for (i, &idx) in set.iter().enumerate() {
                if idx >= n {
                    return Err(GraphError::invalid(
                        format!("splits.{name}[{i}]"),
                        format!("index {idx} out of range [0, {n})"),
                    ));
                }
                if let Some(prev) = owner[idx] {
                    return Err(GraphError::invalid(
                        format!("splits.{name}[{i}]"),
                        format!("node {idx} already assigned to {prev}"),
                    ));
                }
                owner[idx] = Some(name);
            }
        }
        Ok(())
    }

    /// [`Split::check`] plus the non-empty train/val requirement for training.
    pub fn validate(&self, n: usize) -> Result<(), GraphError> {
        self.check(n)?;
        if self.train.is_empty() {
            return Err(GraphError::invalid("splits.train", "must be non-empty"));
        }
        if self.val.is_empty() {
            return Err(GraphError::invalid("splits.val", "must be non-empty"));
        }
        Ok(())
    }
}

/// Seeded random split. Stratified splits apply the floor rule per class;
/// when the fractions sum to one, the remainder goes to test.
pub fn make_split(
    n: usize,
    ratios: SplitRatios,
    labels: &[usize],
    seed: u64,
    stratified: bool,
) -> Result<Split, GraphError> {
    ratios.validate()?;
    if labels.len() != n {
        return Err(GraphError::invalid(
            "labels",
            format!("expected {n} labels, got {}", labels.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };

    let groups: Vec<Vec<usize>> = if stratified {
        let classes = labels.iter().max().map_or(0, |&m| m + 1);
        let mut groups = vec![Vec::new(); classes];
        for (i, &l) in labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    } else {
        vec![(0..n).collect()]
    };

    for (class, mut members) in groups.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let m = members.len();
        let n_train = (ratios.train * m as f64).floor() as usize;
        let n_val = (ratios.val * m as f64).floor() as usize;
        if stratified && ratios.train > 0.0 && n_train == 0 {
            return Err(GraphError::StratificationInfeasible { class, size: m });
        }
        let n_test = if ratios.fills_everything() {
            m - n_train - n_val
        } else {
            ((ratios.test * m as f64).floor() as usize).min(m - n_train - n_val)
        };
        split.train.extend_from_slice(&members[..n_train]);
        split
            .val
            .extend_from_slice(&members[n_train..n_train + n_val]);
        split
            .test
            .extend_from_slice(&members[n_train + n_val..n_train + n_val + n_test]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cora_sized_sparse_split() {
        let labels = vec![0; 2708];
        let s = make_split(2708, SplitRatios::SPARSE, &labels, 7, false).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (67, 67, 2574));
        s.validate(2708).unwrap();
    }

    #[test]
    fn all_train_is_permitted() {
        let labels = vec![0; 10];
        let s = make_split(
            10,
            SplitRatios::new(1.0, 0.0, 0.0).unwrap(),
            &labels,
            1,
            false,
        )
        .unwrap();
        assert_eq!(s.train.len(), 10);
        assert!(s.val.is_empty() && s.test.is_empty());
        assert!(s.validate(10).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let labels: Vec<usize> = (0..100).map(|i| i % 3).collect();
        let a = make_split(100, SplitRatios::DENSE, &labels, 42, true).unwrap();
        let b = make_split(100, SplitRatios::DENSE, &labels, 42, true).unwrap();
        let c = make_split(100, SplitRatios::DENSE, &labels, 43, true).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn stratification_infeasible() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let err = make_split(30, SplitRatios::SPARSE, &labels, 0, true).unwrap_err();
        assert!(matches!(err, GraphError::StratificationInfeasible { .. }));
    }

    #[test]
    fn parses_percentages_and_fractions() {
        assert_eq!(SplitRatios::parse("60,20,20").unwrap(), SplitRatios::DENSE);
        let r = SplitRatios::parse("0.6, 0.2, 0.2").unwrap();
        assert!((r.train - 0.6).abs() < 1e-12);
        assert!(SplitRatios::parse("1,2").is_err());
    }

    #[test]
    fn overlapping_split_rejected() {
        let s = Split {
            train: vec![0, 1],
            val: vec![1],
            test: vec![],
        };
        assert!(s.check(3).is_err());
    }

    proptest! {
        #[test]
        fn split_disjoint_and_stratified_counts(seed in any::<u64>(), n in 40usize..300, classes in 1usize..5) {
            let labels: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % classes).collect();
            let ratios = SplitRatios::new(0.3, 0.2, 0.5).unwrap();
            let s = make_split(n, ratios, &labels, seed, true).unwrap();
            s.check(n).unwrap();
            for c in 0..classes {
                let size = labels.iter().filter(|&&l| l == c).count();
                let got = s.train.iter().filter(|&&i| labels[i] == c).count();
                prop_assert_eq!(got, (0.3 * size as f64).floor() as usize);
            }
            prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), n);
        }
    }
}
