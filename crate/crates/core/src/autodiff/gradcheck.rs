//! Central finite-difference gradient checks.
//!
//! The numeric side only ever calls `forward`, so it is independent of the
//! backward rules being checked.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{AutodiffError, ComputeGraph, Interrupt, Mode, NodeId, ParamInit, Tensor};
use crate::graph::SparseOp;

pub const FD_STEP: f64 = 1e-4;

const CHECK_MODE: Mode = Mode::Train { seed: 17, epoch: 3 };

/// Every op kind covered by [`gradient_suite`].
pub const OP_KINDS: &[&str] = &[
    "matmul",
    "spmm",
    "add",
    "add-broadcast",
    "sub",
    "scale",
    "mul",
    "mul-broadcast",
    "div",
    "pow",
    "relu",
    "elu",
    "tanh",
    "sigmoid",
    "softmax-rows",
    "sum",
    "sum-rows",
    "cross-entropy",
    "dropout",
    "concat-cols",
    "edge-attn-agg",
];

#[derive(Debug, Clone)]
pub struct OpCheck {
    pub op: &'static str,
    pub instances: usize,
    pub worst_relative_error: f64,
}

/// Largest relative error `|analytic - numeric| / max(|analytic|, |numeric|)`
/// (norms over all parameters) between backward and central differences.
pub fn relative_gradient_error(
    graph: &mut ComputeGraph<f64>,
    loss: NodeId,
    h: f64,
) -> Result<f64, AutodiffError> {
    let none = Interrupt::none();
    graph.forward(&[], CHECK_MODE, &none)?;
    let analytic = graph.backward(loss, &none)?;

    let mut diff_sq = 0.0;
    let mut a_sq = 0.0;
    let mut n_sq = 0.0;
    let names: Vec<String> = graph.params().iter().map(|p| p.name.clone()).collect();
    for name in names {
        let base = graph.param_value(&name).expect("registered").clone();
        let a = analytic.get(&name).expect("gradient per parameter").clone();
        for k in 0..base.data().len() {
            let mut plus = base.clone();
            plus.data_mut()[k] += h;
            graph.set_param_value(&name, plus)?;
            graph.forward(&[], CHECK_MODE, &none)?;
            let fp = graph.value(loss).expect("evaluated").at(0, 0);

            let mut minus = base.clone();
            minus.data_mut()[k] -= h;
            graph.set_param_value(&name, minus)?;
            graph.forward(&[], CHECK_MODE, &none)?;
            let fm = graph.value(loss).expect("evaluated").at(0, 0);

            let numeric = (fp - fm) / (2.0 * h);
            let an = a.data()[k];
            diff_sq += (an - numeric).powi(2);
            a_sq += an * an;
            n_sq += numeric * numeric;
        }
        graph.set_param_value(&name, base)?;
    }
    let scale = a_sq.sqrt().max(n_sq.sqrt());
    Ok(if scale < 1e-12 {
        diff_sq.sqrt()
    } else {
        diff_sq.sqrt() / scale
    })
}

fn normal(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Tensor<f64> {
    let v: Vec<f64> = (0..shape.0 * shape.1)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    Tensor::from_f64(shape, &v)
}

/// Values bounded away from zero: magnitude in [0.5, 2], random sign.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Tensor<f64> {
    let v: Vec<f64> = (0..shape.0 * shape.1)
        .map(|_| {
            let m = rng.random_range(0.5..2.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_f64(shape, &v)
}

fn random_adjacency(rng: &mut ChaCha8Rng, n: usize) -> SparseOp {
    let mut t = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.5) {
                let w = rng.random_range(0.2..1.0);
                t.push((i, j, w));
                t.push((j, i, w));
            }
        }
    }
    SparseOp::from_triplets(n, n, t).expect("valid adjacency")
}

/// Builds one random instance of `op` whose operands are all parameters and
/// whose loss is `sum(op(..) * R)` for a random constant `R`.
pub fn random_instance(
    op: &str,
    rng: &mut ChaCha8Rng,
) -> Result<(ComputeGraph<f64>, NodeId), AutodiffError> {
    let mut g = ComputeGraph::<f64>::new();
    let r = rng.random_range(2..5);
    let k = rng.random_range(2..5);
    let c = rng.random_range(2..5);
    let p = |g: &mut ComputeGraph<f64>, name: &str, t: Tensor<f64>| {
        g.param_with_value(name, t, ParamInit::Normal)
    };

    let out = match op {
        "matmul" => {
            let a = p(&mut g, "a", normal(rng, (r, k)))?;
            let b = p(&mut g, "b", normal(rng, (k, c)))?;
            g.matmul(a, b)?
        }
        "spmm" => {
            let s = random_adjacency(rng, r);
            let o = g.add_operator(&s);
            let x = p(&mut g, "x", normal(rng, (r, c)))?;
            g.spmm(o, x)?
        }
        "add" | "sub" | "mul" | "div" => {
            let a = p(&mut g, "a", normal(rng, (r, c)))?;
            let b = if op == "div" {
                p(&mut g, "b", away_from_zero(rng, (r, c)))?
            } else {
                p(&mut g, "b", normal(rng, (r, c)))?
            };
            match op {
                "add" => g.add(a, b)?,
                "sub" => g.sub(a, b)?,
                "mul" => g.mul(a, b)?,
                _ => g.div(a, b)?,
            }
        }
        "add-broadcast" | "mul-broadcast" => {
            let a = p(&mut g, "a", normal(rng, (r, c)))?;
            let row = p(&mut g, "row", normal(rng, (1, c)))?;
            let col = p(&mut g, "col", normal(rng, (r, 1)))?;
            let s = p(&mut g, "s", normal(rng, (1, 1)))?;
            if op == "add-broadcast" {
                let t = g.add(a, row)?;
                let t = g.add(col, t)?;
                g.add(t, s)?
            } else {
                let t = g.mul(a, row)?;
                let t = g.mul(col, t)?;
                g.mul(s, t)?
            }
        }
        "scale" => {
            let a = p(&mut g, "a", normal(rng, (r, c)))?;
            g.scale(a, rng.random_range(-2.0..2.0))
        }
        "pow" => {
            let a = p(&mut g, "a", away_from_zero(rng, (r, c)))?;
            g.powi(a, rng.random_range(-2..5))
        }
        "relu" | "elu" | "tanh" | "sigmoid" | "softmax-rows" | "sum-rows" => {
            let a = p(&mut g, "a", normal(rng, (r, c)))?;
            match op {
                "relu" => g.relu(a),
                "elu" => g.elu(a),
                "tanh" => g.tanh(a),
                "sigmoid" => g.sigmoid(a),
                "softmax-rows" => g.softmax_rows(a),
                _ => g.sum_rows(a),
            }
        }
        "sum" => {
            let a = p(&mut g, "a", normal(rng, (r, c)))?;
            let w = g.constant(normal(rng, (r, c)));
            let t = g.mul(a, w)?;
            return Ok({
                let loss = g.sum(t);
                (g, loss)
            });
        }
        "cross-entropy" => {
            let n = r + 2;
            let logits = p(&mut g, "logits", normal(rng, (n, c)))?;
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
            let index: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.7)).collect();
            let index = if index.is_empty() { vec![0] } else { index };
            let loss = g.cross_entropy(logits, labels.into(), index.into())?;
            return Ok((g, loss));
        }
        "dropout" => {
            let a = p(&mut g, "a", normal(rng, (r, c)))?;
            g.dropout(a, 0.4)?
        }
        "concat-cols" => {
            let a = p(&mut g, "a", normal(rng, (r, k)))?;
            let b = p(&mut g, "b", normal(rng, (r, c)))?;
            g.concat_cols(a, b)?
        }
        "edge-attn-agg" => {
            let n = r + 2;
            let adj = random_adjacency(rng, n);
            let o = g.add_operator(&adj);
            let s = p(&mut g, "src", normal(rng, (n, 1)))?;
            let d = p(&mut g, "dst", normal(rng, (n, 1)))?;
            let x = p(&mut g, "x", normal(rng, (n, c)))?;
            g.edge_attn_agg(o, s, d, x)?
        }
        other => return Err(AutodiffError::Invalid(format!("unknown op kind {other:?}"))),
    };
    let shape = g.shape(out);
    let weights = g.constant(normal(rng, shape));
    let weighted = g.mul(out, weights)?;
    let loss = g.sum(weighted);
    Ok((g, loss))
}

/// Runs `instances` random checks per op kind.
pub fn gradient_suite(instances: usize, seed: u64) -> Result<Vec<OpCheck>, AutodiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = Vec::new();
    for &op in OP_KINDS {
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let (mut g, loss) = random_instance(op, &mut rng)?;
            worst = worst.max(relative_gradient_error(&mut g, loss, FD_STEP)?);
        }
        report.push(OpCheck {
            op,
            instances,
            worst_relative_error: worst,
        });
    }
    Ok(report)
}
