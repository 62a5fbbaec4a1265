use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use propgen_core::graph::SplitRatios;
use propgen_search::bridge::LiveConfig;
use propgen_search::evo::SearchConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// How the train/val/test split is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SplitSpec {
    /// The dataset's stored split if it has one, otherwise 60/20/20.
    #[default]
    Auto,
    FromFile,
    Ratios(SplitRatios),
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitSpec::Auto => f.write_str("auto"),
            SplitSpec::FromFile => f.write_str("from-file"),
            SplitSpec::Ratios(r) => write!(f, "{},{},{}", r.train, r.val, r.test),
        }
    }
}

impl FromStr for SplitSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "auto" => Ok(SplitSpec::Auto),
            "from-file" => Ok(SplitSpec::FromFile),
            other => SplitRatios::parse(other)
                .map(SplitSpec::Ratios)
                .map_err(|e| e.to_string()),
        }
    }
}

impl Serialize for SplitSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SplitSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendSpec {
    Live(LiveConfig),
    Replay { path: PathBuf },
}

/// Everything a command needs, as read from `--config` and overridden by
/// flags. The resolved value is written to `run_manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub split: SplitSpec,
    pub stratified: bool,
    pub search: SearchConfig,
    pub backend: Option<BackendSpec>,
    pub out_dir: Option<PathBuf>,
    /// Drives the split, the search RNG and training.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            split: SplitSpec::Auto,
            stratified: true,
            search: SearchConfig::default(),
            backend: None,
            out_dir: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }

    /// Copies the global seed into the search and training configs.
    pub fn propagate_seed(&mut self) {
        self.search.seed = self.seed;
        self.search.train.seed = self.seed;
    }
}
