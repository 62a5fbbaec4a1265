use std::fmt::Write;

use propgen_core::dsl::{builtin, MAX_K};
use propgen_core::graph::Graph;
use serde::{Deserialize, Serialize};

use super::{BridgeError, OpKind};

/// Every prompt ends with this sentence.
pub const CLOSING: &str = "Do not give additional explanations.";

const E1_INSTRUCTION: &str = "Please design a new propagation mechanism that is completely different from the given spectral GNNs. \
Describe the design ideas in one or two sentences, then give the program.";

const E2_INSTRUCTION: &str = "Please identify the common ideas of the existing spectral GNNs below, \
then design a new propagation mechanism built on those ideas whose form differs from each of them. \
Describe the design ideas in one or two sentences, then give the program.";

const C1_INSTRUCTION: &str = "Two elite designs follow with their validation accuracy; the first scores higher than the second. \
Compare them, work out what makes the first one stronger, and design a new propagation mechanism that pushes further in that direction. \
Describe the design ideas in one or two sentences, then give the program.";

const GRAMMAR: &str = "Program language summary:
  mechanism NAME { consts {..} params {..} graph {..} init {..} step k in a..b {..} final {..} out {..} }
  consts: `K = 3;` (K is required), other numeric constants.
  params: `W[k]: matrix(h, h) = glorot;` declares W[1]..W[K]; shapes scalar, vector(n|h|c), matrix(r, c);
    inits glorot, normal, zeros, ones, const(expr).
  graph: `Ahat = sym_norm(c = 1);` with sym_norm, rw_norm, pruned_norm (all take c, the self-loop weight),
    laplacian(), sym_laplacian(), scaled_laplacian(). A is the raw adjacency.
  statements: `Z = expr;` using + - * / (elementwise, row/column broadcast), @ (matrix product), unary minus,
    spmm(G, Z), relu, elu, tanh, sigmoid, softmax_rows, pow(x, k), concat(a, b), attn_agg(A, s, t, V).
  step blocks repeat their body for k = a..b inclusive.";

/// A program shown to the model. `fitness` is validation accuracy only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedIndividual {
    pub ideas: String,
    pub program_text: String,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub op: OpKind,
    pub basic_content: String,
    pub individuals: Vec<EmbeddedIndividual>,
    pub request_info: String,
}

/// Task description for a dataset. Uses only sizes, never labels.
pub fn basic_content(graph: &Graph) -> String {
    format!(
        "Task: node classification on the graph \"{}\" with {} nodes, {} undirected edges, {} input features and {} classes.
The model is an input MLP that produces hidden features X (n x h) and X_raw (its first linear layer's output, n x h), \
then a propagation mechanism, then a linear classifier. \
You write the propagation mechanism of a spectral GNN: a rule that mixes node features through graph operators and learnable parameters.
Tips: low-pass filters such as powers of the normalized adjacency suit graphs whose neighbors share labels; \
high-pass or signed filters suit graphs whose neighbors differ. Residual terms and learnable per-hop weights often help.",
        graph.name(),
        graph.num_nodes(),
        graph.num_edges(),
        graph.num_features(),
        graph.num_classes()
    )
}

pub fn request_info() -> String {
    format!(
        "Requirements: X and X_raw are n x h and A is the raw adjacency. \
The out block assigns exactly one variable of shape n x h or n x c. K is an integer from 1 to {MAX_K}. \
Write the design ideas first, then the complete program in one fenced code block (three backticks). {CLOSING}"
    )
}

fn indent(text: &str) -> String {
    text.lines()
        .map(|l| format!("    {l}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Deterministic prompt text: basic content, operator instruction, the
/// embedded programs in fences, the language summary with one example, then
/// the request information.
pub fn render_prompt(req: &PromptRequest) -> Result<String, BridgeError> {
    let got = req.individuals.len();
    match req.op {
        OpKind::C1 if got != 2 => {
            return Err(BridgeError::Arity {
                op: req.op,
                expected: "exactly 2",
                got,
            })
        }
        OpKind::E1 | OpKind::E2 if got == 0 => {
            return Err(BridgeError::Arity {
                op: req.op,
                expected: "at least 1",
                got,
            })
        }
        _ => {}
    }
    let instruction = match req.op {
        OpKind::E1 => E1_INSTRUCTION,
        OpKind::E2 => E2_INSTRUCTION,
        OpKind::C1 => C1_INSTRUCTION,
    };

    let mut s = String::new();
    let _ = write!(s, "{}\n\n{instruction}\n\n", req.basic_content.trim());
    for (i, ind) in req.individuals.iter().enumerate() {
        let _ = writeln!(s, "Design {}", i + 1);
        let _ = writeln!(s, "Ideas: {}", ind.ideas.trim());
        if req.op == OpKind::C1 {
            let _ = writeln!(s, "Validation accuracy: {:.4}", ind.fitness);
        }
        let _ = write!(s, "```\n{}\n```\n\n", ind.program_text.trim());
    }
    let example = builtin("gcn").expect("gcn is built in");
    let _ = write!(
        s,
        "{GRAMMAR}\n\nExample program:\n{}\n\n{}",
        indent(example.trim()),
        req.request_info.trim()
    );
    if !s.ends_with(CLOSING) {
        s.push(' ');
        s.push_str(CLOSING);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(op: OpKind, fits: &[f64]) -> PromptRequest {
        PromptRequest {
            op,
            basic_content: "Task.".into(),
            individuals: fits
                .iter()
                .enumerate()
                .map(|(i, &f)| EmbeddedIndividual {
                    ideas: format!("idea {i}"),
                    program_text: format!("mechanism m{i} {{ consts {{ K = 1; }} out {{ Y = X; }} }}"),
                    fitness: f,
                })
                .collect(),
            request_info: request_info(),
        }
    }

    fn fences(s: &str) -> usize {
        s.lines().filter(|l| l.trim_start().starts_with("```")).count()
    }

    #[test]
    fn e1_has_one_block_per_individual() {
        let s = render_prompt(&req(OpKind::E1, &[0.1, 0.2, 0.3, 0.4])).unwrap();
        assert_eq!(fences(&s), 8);
        assert!(s.contains("completely different"));
        assert!(s.ends_with(CLOSING));
        assert!(!s.contains("Validation accuracy"));
    }

    #[test]
    fn c1_shows_scores_in_order() {
        let s = render_prompt(&req(OpKind::C1, &[0.85, 0.60])).unwrap();
        let (a, b) = (s.find("0.8500").unwrap(), s.find("0.6000").unwrap());
        assert!(a < b);
        assert!(render_prompt(&req(OpKind::C1, &[0.85])).is_err());
        assert!(render_prompt(&req(OpKind::E2, &[])).is_err());
    }

    #[test]
    fn closing_is_added_when_missing() {
        let mut r = req(OpKind::E2, &[0.5]);
        r.request_info = "Reply briefly.".into();
        let s = render_prompt(&r).unwrap();
        assert!(s.ends_with(CLOSING));
        assert!(s.contains("common ideas"));
        assert_eq!(s, render_prompt(&r).unwrap());
    }
}
