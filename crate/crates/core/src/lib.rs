//! Core engine for searching spectral GNN propagation mechanisms: graph
//! operators, a small reverse-mode autodiff engine, the propagation DSL and
//! the training loop that scores a mechanism.

pub mod autodiff;
pub mod dsl;
pub mod train;
pub mod graph;
