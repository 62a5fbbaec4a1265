use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::autodiff::{
    AdamConfig, AdamState, AutodiffError, ComputeGraph, Interrupt, Mode, NodeId, ParamInit, Real,
    Tensor,
};
use crate::dsl::{compile_into, DslError, MechanismNodes, TypedProgram};
use crate::graph::{Graph, Split};

/// Input MLP, compiled mechanism, output head and training loss in one
/// compute graph. The node features enter as a constant.
///
/// Parameter names: `mlp.W1`, `mlp.b1`, `mlp.W2`, `mlp.b2`, the mechanism's
/// own names, then `head.W`, `head.b` when a head is needed.
#[derive(Debug, Clone)]
pub struct ModelAssembly<T: Real> {
    cg: ComputeGraph<T>,
    x_raw: NodeId,
    x_in: NodeId,
    logits: NodeId,
    loss: NodeId,
    mechanism: MechanismNodes,
    has_head: bool,
    labels: Arc<[usize]>,
}

impl<T: Real> ModelAssembly<T> {
    /// `tp` must have been checked with `n`, `f`, `c` from `graph` and
    /// `h = cfg.hidden`.
    pub fn build(
        tp: &TypedProgram,
        graph: &Graph,
        split: &Split,
        cfg: &TrainConfig,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        split.validate(graph.num_nodes())?;
        let (n, f, c, h) = (
            graph.num_nodes(),
            graph.num_features(),
            graph.num_classes(),
            cfg.hidden,
        );
        let d = tp.dims;
        if (d.n, d.f, d.h, d.c) != (n, f, h, c) {
            return Err(DslError::Compile(format!(
                "program checked for {d:?}, model needs n={n} f={f} h={h} c={c}"
            ))
            .into());
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut cg = ComputeGraph::<T>::new();
        let features = cg.constant(Tensor::from_f64((n, f), graph.features()));
        let w1 = cg.param("mlp.W1", (f, h), ParamInit::GlorotUniform, &mut rng)?;
        let b1 = cg.param("mlp.b1", (1, h), ParamInit::Constant(0.0), &mut rng)?;
        let w2 = cg.param("mlp.W2", (h, h), ParamInit::GlorotUniform, &mut rng)?;
        let b2 = cg.param("mlp.b2", (1, h), ParamInit::Constant(0.0), &mut rng)?;

        let x0 = cg.dropout(features, cfg.dropout)?;
        let x0 = cg.matmul(x0, w1)?;
        let x_raw = cg.add(x0, b1)?;
        let hidden = cg.relu(x_raw);
        let hidden = cg.dropout(hidden, cfg.dropout)?;
        let hidden = cg.matmul(hidden, w2)?;
        let x_in = cg.add(hidden, b2)?;

        let mechanism = compile_into(tp, graph, &mut cg, x_in, x_raw, &mut rng)?;
        let out = mechanism.output;
        let has_head = cg.shape(out) != (n, c);
        let logits = if has_head {
            let w = cg.param("head.W", (h, c), ParamInit::GlorotUniform, &mut rng)?;
            let b = cg.param("head.b", (1, c), ParamInit::Constant(0.0), &mut rng)?;
            let z = cg.dropout(out, cfg.dropout)?;
            let z = cg.matmul(z, w)?;
            cg.add(z, b)?
        } else {
            out
        };
        let labels: Arc<[usize]> = graph.labels().into();
        let loss = cg.cross_entropy(logits, labels.clone(), split.train.as_slice().into())?;
        Ok(ModelAssembly {
            cg,
            x_raw,
            x_in,
            logits,
            loss,
            mechanism,
            has_head,
            labels,
        })
    }

    pub fn compute_graph(&self) -> &ComputeGraph<T> {
        &self.cg
    }

    pub fn mechanism(&self) -> &MechanismNodes {
        &self.mechanism
    }

    /// Whether a linear head maps the mechanism output to class logits.
    pub fn has_head(&self) -> bool {
        self.has_head
    }

    pub fn x_raw(&self) -> NodeId {
        self.x_raw
    }

    pub fn x_in(&self) -> NodeId {
        self.x_in
    }

    /// Class logits in evaluation mode.
    pub fn logits(&mut self, interrupt: &Interrupt) -> Result<Tensor<T>, AutodiffError> {
        self.cg.forward(&[], Mode::Eval, interrupt)?;
        Ok(self.cg.value(self.logits).expect("evaluated").clone())
    }

    pub fn predict(&mut self, interrupt: &Interrupt) -> Result<Vec<usize>, AutodiffError> {
        Ok(self.logits(interrupt)?.argmax_rows())
    }

    /// Accuracy on `index` in evaluation mode.
    pub fn evaluate(&mut self, index: &[usize]) -> Result<f64, TrainError> {
        if index.is_empty() {
            return Err(TrainError::EmptyIndexSet);
        }
        let pred = self.predict(&Interrupt::none())?;
        accuracy(&pred, &self.labels, index)
    }

    /// One optimization step; returns the training-mode loss before the
    /// update.
    fn step(
        &mut self,
        adam: &mut AdamState<T>,
        opt: &AdamConfig,
        mode: Mode,
        interrupt: &Interrupt,
    ) -> Result<f64, AutodiffError> {
        self.cg.forward(&[], mode, interrupt)?;
        let loss = self.cg.value(self.loss).expect("evaluated").at(0, 0).to_f64_lossy();
        if !loss.is_finite() {
            return Err(AutodiffError::Numerical {
                op: "cross_entropy",
                node: self.loss.index(),
            });
        }
        let grads = self.cg.backward(self.loss, interrupt)?;
        adam.step_graph(&mut self.cg, &grads, opt)?;
        Ok(loss)
    }
}

/// Fraction of `index` whose prediction matches the label.
pub fn accuracy(pred: &[usize], labels: &[usize], index: &[usize]) -> Result<f64, TrainError> {
    if index.is_empty() {
        return Err(TrainError::EmptyIndexSet);
    }
    let correct = index.iter().filter(|&&i| pred[i] == labels[i]).count();
    Ok(correct as f64 / index.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub epochs_run: usize,
    /// Zero-based epoch whose parameters were restored.
    pub best_epoch: usize,
    /// Training-mode loss at each epoch, before that epoch's update.
    pub losses: Vec<f64>,
    /// Validation accuracy after each epoch's update.
    pub val_history: Vec<f64>,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// Adam with early stopping on validation accuracy; the best-validation
/// parameters are restored before the final evaluation.
pub fn train<T: Real>(
    model: &mut ModelAssembly<T>,
    split: &Split,
    cfg: &TrainConfig,
    interrupt: &Interrupt,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if split.val.is_empty() {
        return Err(TrainError::EmptyIndexSet);
    }
    let opt = AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new();
    let mut losses = Vec::new();
    let mut val_history = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize, model.cg.snapshot_params());

    for epoch in 0..cfg.max_epochs {
        interrupt.check()?;
        let mode = Mode::Train {
            seed: cfg.seed,
            epoch: epoch as u64,
        };
        losses.push(model.step(&mut adam, &opt, mode, interrupt)?);
        let pred = model.predict(interrupt)?;
        let val = accuracy(&pred, &model.labels, &split.val)?;
        val_history.push(val);
        if val > best.0 {
            best = (val, epoch, model.cg.snapshot_params());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }

    model.cg.restore_params(&best.2);
    let pred = model.predict(interrupt)?;
    let test_accuracy = if split.test.is_empty() {
        None
    } else {
        Some(accuracy(&pred, &model.labels, &split.test)?)
    };
    Ok(TrainOutcome {
        epochs_run: losses.len(),
        best_epoch: best.1,
        train_accuracy: accuracy(&pred, &model.labels, &split.train)?,
        val_accuracy: accuracy(&pred, &model.labels, &split.val)?,
        test_accuracy,
        losses,
        val_history,
    })
}
