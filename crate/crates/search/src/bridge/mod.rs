//! Prompt rendering for the three prompt operators, response parsing, and
//! completion backends (scripted replay or a live chat-completions endpoint).

mod live;
mod prompt;
mod replay;
mod response;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use live::{LiveClient, LiveConfig, API_KEY_ENV};
pub use prompt::{
    basic_content, render_prompt, request_info, EmbeddedIndividual, PromptRequest, CLOSING,
};
pub use replay::{ReplayRecord, ReplayScript};
pub use response::{parse_response, Malformed, ParsedResponse};

/// Prompt operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    /// Novelty: a design unlike the embedded ones.
    E1,
    /// Common ideas of the embedded designs, recombined.
    E2,
    /// Pairwise comparison of a better and a worse design.
    C1,
}

impl OpKind {
    pub const ALL: [OpKind; 3] = [OpKind::E1, OpKind::E2, OpKind::C1];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::E1 => "E1",
            OpKind::E2 => "E2",
            OpKind::C1 => "C1",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpKind {
    type Err = BridgeError;

    fn from_str(s: &str) -> Result<Self, BridgeError> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| BridgeError::Config(format!("unknown prompt operator {s:?}")))
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("{op} prompt takes {expected} individuals, got {got}")]
    Arity {
        op: OpKind,
        expected: &'static str,
        got: usize,
    },
    #[error("replay script has no response for generation {gen}, {op}, slot {slot}")]
    MissingReplay { gen: usize, op: OpKind, slot: usize },
    #[error("replay script line {line}: {message}")]
    ReplayFormat { line: usize, message: String },
    #[error("bridge configuration: {0}")]
    Config(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// One completion. `text` is `None` when the backend gave up on this slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub gen: usize,
    pub op: OpKind,
    pub slot: usize,
    pub text: Option<String>,
}

/// Where completions come from.
#[derive(Debug)]
pub enum Backend {
    Replay(ReplayScript),
    Live(LiveClient),
}

impl Backend {
    /// Requests `parallelism` completions for each prompt. Results come back
    /// ordered by (prompt, slot) regardless of completion timing.
    pub fn complete(
        &self,
        gen: usize,
        prompts: &[(OpKind, String)],
        parallelism: usize,
    ) -> Result<Vec<LlmResponse>, BridgeError> {
        match self {
            Backend::Replay(script) => {
                let mut out = Vec::with_capacity(prompts.len() * parallelism);
                for &(op, _) in prompts {
                    for slot in 0..parallelism {
                        out.push(LlmResponse {
                            gen,
                            op,
                            slot,
                            text: script.lookup(gen, op, slot)?,
                        });
                    }
                }
                Ok(out)
            }
            Backend::Live(client) => Ok(client.complete_all(gen, prompts, parallelism)),
        }
    }
}
