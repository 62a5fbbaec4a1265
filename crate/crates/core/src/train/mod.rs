//! Model assembly around a compiled mechanism, the training loop, and
//! fitness scoring with a wall-clock budget.

mod model;
mod score;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::dsl::{DslError, Stage};
use crate::graph::GraphError;

pub use model::{accuracy, train, ModelAssembly, TrainOutcome};
pub use score::{score_batch, score_individual, score_program};

/// Element type used for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden: usize,
    pub seed: u64,
    pub timeout_seconds: f64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 200,
            patience: 50,
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            hidden: 64,
            seed: 0,
            timeout_seconds: 600.0,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &str, why: &str| Err(TrainError::Config(format!("{field} {why}")));
        if self.max_epochs == 0 {
            return bad("max_epochs", "must be positive");
        }
        if self.patience == 0 {
            return bad("patience", "must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", "must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", "must lie in [0, 1)");
        }
        if self.hidden == 0 {
            return bad("hidden", "must be positive");
        }
        if !(self.timeout_seconds >= 1.0 && self.timeout_seconds.is_finite()) {
            return bad("timeout_seconds", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("accuracy over an empty index set")]
    EmptyIndexSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiscardReason {
    Parse,
    Shape,
    Compile,
    Numeric,
    Timeout,
}

impl DiscardReason {
    pub const ALL: [DiscardReason; 5] = [
        DiscardReason::Parse,
        DiscardReason::Shape,
        DiscardReason::Compile,
        DiscardReason::Numeric,
        DiscardReason::Timeout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiscardReason::Parse => "parse",
            DiscardReason::Shape => "shape",
            DiscardReason::Compile => "compile",
            DiscardReason::Numeric => "numeric",
            DiscardReason::Timeout => "timeout",
        }
    }
}

/// Outcome of scoring one candidate. Serialized as `"ok"` or the bare reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitStatus {
    Ok,
    Discarded(DiscardReason),
}

impl fmt::Display for FitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitStatus::Ok => f.write_str("ok"),
            FitStatus::Discarded(r) => f.write_str(r.as_str()),
        }
    }
}

impl FromStr for FitStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "ok" {
            return Ok(FitStatus::Ok);
        }
        DiscardReason::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .map(FitStatus::Discarded)
            .ok_or_else(|| format!("unknown status {s:?}"))
    }
}

impl Serialize for FitStatus {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FitStatus {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl TrainError {
    /// Which discard bucket this failure lands in.
    pub fn discard_reason(&self) -> DiscardReason {
        match self {
            TrainError::Dsl(e) => match e.stage() {
                Stage::Parse => DiscardReason::Parse,
                Stage::Shape => DiscardReason::Shape,
                Stage::Compile => DiscardReason::Compile,
            },
            TrainError::Autodiff(AutodiffError::Interrupted(_)) => DiscardReason::Timeout,
            TrainError::Autodiff(AutodiffError::Numerical { .. }) => DiscardReason::Numeric,
            _ => DiscardReason::Compile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub status: FitStatus,
    /// Validation accuracy; present exactly when `status` is ok.
    pub fitness: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub epochs_run: usize,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl FitResult {
    pub fn discarded(reason: DiscardReason, message: impl Into<String>, wall_seconds: f64) -> Self {
        FitResult {
            status: FitStatus::Discarded(reason),
            fitness: None,
            test_accuracy: None,
            epochs_run: 0,
            wall_seconds,
            message: Some(message.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == FitStatus::Ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        let cfg = TrainConfig {
            timeout_seconds: 0.5,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            dropout: 1.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn status_strings() {
        for s in ["ok", "parse", "shape", "compile", "numeric", "timeout"] {
            let st: FitStatus = s.parse().unwrap();
            assert_eq!(st.to_string(), s);
            assert_eq!(serde_json::to_string(&st).unwrap(), format!("\"{s}\""));
        }
        assert!("discarded".parse::<FitStatus>().is_err());
    }

    #[test]
    fn config_reads_partial_json() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"hidden": 16, "seed": 4}"#).unwrap();
        assert_eq!(cfg.hidden, 16);
        assert_eq!(cfg.max_epochs, 200);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"hiden": 16}"#).is_err());
    }
}
