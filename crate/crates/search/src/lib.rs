//! Prompt construction and LLM transport ([`bridge`]) and the elite-archive
//! evolutionary loop that drives it ([`evo`]).

pub mod bridge;
pub mod evo;
