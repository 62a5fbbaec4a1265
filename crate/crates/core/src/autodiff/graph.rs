use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::shapes;
use super::tensor::{matmul, CsrMatrix, Real, Shape, Tensor};
use crate::graph::SparseOp;

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("non-finite value produced by {op} at node {node}")]
    Numerical { op: &'static str, node: usize },
    #[error("backward called before forward")]
    NotEvaluated,
    #[error("loss must be 1x1, got {0:?}")]
    NonScalarLoss(Shape),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParameter(String),
    #[error("input {name:?} expects {expected:?}, got {got:?}")]
    InputShape {
        name: String,
        expected: Shape,
        got: Shape,
    },
    #[error("expected {expected} inputs, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("evaluation interrupted ({0})")]
    Interrupted(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OperatorId(usize);

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamInit {
    GlorotUniform,
    Constant(f64),
    /// N(0, 0.1)
    Normal,
}

impl ParamInit {
    pub fn sample(self, (rows, cols): Shape, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            ParamInit::Constant(v) => vec![v; rows * cols],
            ParamInit::GlorotUniform => {
                let bound = (6.0 / (rows + cols) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                (0..rows * cols).map(|_| dist.sample(rng)).collect()
            }
            ParamInit::Normal => {
                let dist = Normal::new(0.0, 0.1).expect("valid std");
                (0..rows * cols).map(|_| dist.sample(rng)).collect()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub init: ParamInit,
}

/// Evaluation mode; dropout is active only in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { seed: u64, epoch: u64 },
    Eval,
}

/// Deadline and cancellation flag polled between node evaluations.
#[derive(Debug, Clone, Default)]
pub struct Interrupt {
    deadline: Option<Instant>,
    flag: Option<Arc<AtomicBool>>,
}

impl Interrupt {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(deadline: Option<Instant>, flag: Option<Arc<AtomicBool>>) -> Self {
        Interrupt { deadline, flag }
    }

    pub fn check(&self) -> Result<(), AutodiffError> {
        if let Some(flag) = &self.flag {
            if flag.load(Ordering::Relaxed) {
                return Err(AutodiffError::Interrupted("cancelled"));
            }
        }
        if let Some(deadline) = self.deadline {
            if Instant::now() >= deadline {
                return Err(AutodiffError::Interrupted("deadline"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Input(usize),
    Param(usize),
    Constant(Tensor<T>),
    MatMul(NodeId, NodeId),
    SpMM(OperatorId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, T),
    PowI(NodeId, i32),
    Relu(NodeId),
    Elu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    SoftmaxRows(NodeId),
    Sum(NodeId),
    SumRows(NodeId),
    CrossEntropy {
        logits: NodeId,
        labels: Arc<[usize]>,
        index: Arc<[usize]>,
    },
    Dropout(NodeId, f64),
    ConcatCols(NodeId, NodeId),
    EdgeAttnAgg {
        adj: OperatorId,
        src: NodeId,
        dst: NodeId,
        x: NodeId,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Constant(_) => "constant",
            Op::MatMul(..) => "matmul",
            Op::SpMM(..) => "spmm",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::PowI(..) => "pow",
            Op::Relu(_) => "relu",
            Op::Elu(_) => "elu",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::Sum(_) => "sum",
            Op::SumRows(_) => "sum_rows",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Dropout(..) => "dropout",
            Op::ConcatCols(..) => "concat",
            Op::EdgeAttnAgg { .. } => "attn_agg",
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Input(_) | Op::Param(_) | Op::Constant(_) => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::ConcatCols(a, b) => {
                vec![*a, *b]
            }
            Op::SpMM(_, a)
            | Op::Scale(a, _)
            | Op::PowI(a, _)
            | Op::Relu(a)
            | Op::Elu(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::SoftmaxRows(a)
            | Op::Sum(a)
            | Op::SumRows(a)
            | Op::Dropout(a, _) => vec![*a],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::EdgeAttnAgg { src, dst, x, .. } => vec![*src, *dst, *x],
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    shape: Shape,
    requires_grad: bool,
}

/// Saved forward state needed by some backward rules.
#[derive(Debug, Clone)]
enum Aux<T> {
    Mask(Tensor<T>),
    Probs(Tensor<T>),
    /// Attention weight and pre-activation per stored adjacency entry.
    Attention {
        alpha: Vec<T>,
        pre: Vec<T>,
    },
}

#[derive(Debug, Clone)]
struct Operator<T> {
    forward: CsrMatrix<T>,
    transpose: CsrMatrix<T>,
}

/// Gradient of the loss with respect to every registered parameter.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    names: Vec<String>,
    grads: Vec<Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.grads[i])
    }

    pub fn as_slice(&self) -> &[Tensor<T>] {
        &self.grads
    }

    pub fn into_map(self) -> BTreeMap<String, Tensor<T>> {
        self.names.into_iter().zip(self.grads).collect()
    }
}

/// A static computation graph: nodes are appended in evaluation order, so a
/// node's parents always precede it.
#[derive(Debug, Clone)]
pub struct ComputeGraph<T> {
    nodes: Vec<Node<T>>,
    inputs: Vec<(String, Shape)>,
    params: Vec<Parameter<T>>,
    param_index: HashMap<String, usize>,
    param_nodes: Vec<Option<NodeId>>,
    operators: Vec<Operator<T>>,
    values: Vec<Option<Tensor<T>>>,
    aux: Vec<Option<Aux<T>>>,
    evaluated: bool,
}

impl<T: Real> Default for ComputeGraph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn zip_broadcast<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    shape: Shape,
    f: impl Fn(T, T) -> T,
) -> Tensor<T> {
    let (rows, cols) = shape;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let ra = if a.rows() == 1 { 0 } else { r };
        let rb = if b.rows() == 1 { 0 } else { r };
        for c in 0..cols {
            let ca = if a.cols() == 1 { 0 } else { c };
            let cb = if b.cols() == 1 { 0 } else { c };
            out.push(f(a.at(ra, ca), b.at(rb, cb)));
        }
    }
    Tensor::from_vec(shape, out)
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to<T: Real>(grad: Tensor<T>, shape: Shape) -> Tensor<T> {
    if grad.shape() == shape {
        return grad;
    }
    let mut out = Tensor::zeros(shape);
    for r in 0..grad.rows() {
        let ro = if shape.0 == 1 { 0 } else { r };
        for c in 0..grad.cols() {
            let co = if shape.1 == 1 { 0 } else { c };
            let v = out.at(ro, co) + grad.at(r, c);
            out.set(ro, co, v);
        }
    }
    out
}

fn mix_seed(seed: u64, node: usize, epoch: u64) -> u64 {
    let mut z = seed
        ^ (node as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ epoch.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn leaky<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * T::of(LEAKY_SLOPE)
    }
}

impl<T: Real> ComputeGraph<T> {
    pub fn new() -> Self {
        ComputeGraph {
            nodes: Vec::new(),
            inputs: Vec::new(),
            params: Vec::new(),
            param_index: HashMap::new(),
            param_nodes: Vec::new(),
            operators: Vec::new(),
            values: Vec::new(),
            aux: Vec::new(),
            evaluated: false,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].shape
    }

    /// Name of the op at each node, in evaluation order.
    pub fn topology(&self) -> Vec<(&'static str, Vec<usize>)> {
        self.nodes
            .iter()
            .map(|n| {
                (
                    n.op.name(),
                    n.op.parents().into_iter().map(NodeId::index).collect(),
                )
            })
            .collect()
    }

    fn push(&mut self, op: Op<T>, shape: Shape) -> NodeId {
        let requires_grad = match &op {
            Op::Param(_) => true,
            other => other
                .parents()
                .iter()
                .any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            shape,
            requires_grad,
        });
        self.evaluated = false;
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, name: impl Into<String>, shape: Shape) -> NodeId {
        self.inputs.push((name.into(), shape));
        let idx = self.inputs.len() - 1;
        self.push(Op::Input(idx), shape)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        let shape = value.shape();
        self.push(Op::Constant(value), shape)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(T::of(value)))
    }

    /// Registers a parameter initialized from `init`, returning its leaf node.
    pub fn param(
        &mut self,
        name: impl Into<String>,
        shape: Shape,
        init: ParamInit,
        rng: &mut impl Rng,
    ) -> Result<NodeId, AutodiffError> {
        let values = init.sample(shape, rng);
        self.param_with_value(name, Tensor::from_f64(shape, &values), init)
    }

    pub fn param_with_value(
        &mut self,
        name: impl Into<String>,
        value: Tensor<T>,
        init: ParamInit,
    ) -> Result<NodeId, AutodiffError> {
        let name = name.into();
        if self.param_index.contains_key(&name) {
            return Err(AutodiffError::DuplicateParameter(name));
        }
        let shape = value.shape();
        self.params.push(Parameter {
            name: name.clone(),
            value,
            init,
        });
        let idx = self.params.len() - 1;
        self.param_index.insert(name, idx);
        let node = self.push(Op::Param(idx), shape);
        self.param_nodes.push(Some(node));
        Ok(node)
    }

    pub fn param_node(&self, name: &str) -> Option<NodeId> {
        self.param_index
            .get(name)
            .and_then(|&i| self.param_nodes[i])
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn param_value(&self, name: &str) -> Option<&Tensor<T>> {
        self.param_index.get(name).map(|&i| &self.params[i].value)
    }

    pub fn set_param_value(&mut self, name: &str, value: Tensor<T>) -> Result<(), AutodiffError> {
        let idx = *self
            .param_index
            .get(name)
            .ok_or_else(|| AutodiffError::Invalid(format!("unknown parameter {name:?}")))?;
        let expected = self.params[idx].value.shape();
        if value.shape() != expected {
            return Err(AutodiffError::ShapeMismatch {
                op: "set_param",
                lhs: expected,
                rhs: value.shape(),
            });
        }
        self.params[idx].value = value;
        self.evaluated = false;
        Ok(())
    }

    pub fn snapshot_params(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore_params(&mut self, snapshot: &[Tensor<T>]) {
        assert_eq!(
            snapshot.len(),
            self.params.len(),
            "snapshot from another graph"
        );
        for (p, v) in self.params.iter_mut().zip(snapshot) {
            p.value = v.clone();
        }
        self.evaluated = false;
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter<T>] {
        self.evaluated = false;
        &mut self.params
    }

    pub fn add_operator(&mut self, op: &SparseOp) -> OperatorId {
        let forward = CsrMatrix::from_sparse(op);
        let transpose = forward.transpose();
        self.operators.push(Operator { forward, transpose });
        OperatorId(self.operators.len() - 1)
    }

    pub fn operator_shape(&self, id: OperatorId) -> Shape {
        let m = &self.operators[id.0].forward;
        (m.rows(), m.cols())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let shape = shapes::matmul(self.shape(a), self.shape(b))?;
        Ok(self.push(Op::MatMul(a, b), shape))
    }

    pub fn spmm(&mut self, op: OperatorId, x: NodeId) -> Result<NodeId, AutodiffError> {
        let shape = shapes::spmm(self.operator_shape(op), self.shape(x))?;
        Ok(self.push(Op::SpMM(op, x), shape))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        make: fn(NodeId, NodeId) -> Op<T>,
    ) -> Result<NodeId, AutodiffError> {
        let shape = shapes::broadcast(name, self.shape(a), self.shape(b))?;
        Ok(self.push(make(a, b), shape))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary("add", a, b, Op::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary("sub", a, b, Op::Sub)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary("mul", a, b, Op::Mul)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary("div", a, b, Op::Div)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let shape = self.shape(a);
        self.push(Op::Scale(a, T::of(factor)), shape)
    }

    pub fn powi(&mut self, a: NodeId, exponent: i32) -> NodeId {
        let shape = self.shape(a);
        self.push(Op::PowI(a, exponent), shape)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a);
        self.push(Op::Relu(a), shape)
    }

    pub fn elu(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a);
        self.push(Op::Elu(a), shape)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a);
        self.push(Op::Tanh(a), shape)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a);
        self.push(Op::Sigmoid(a), shape)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a);
        self.push(Op::SoftmaxRows(a), shape)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a), (1, 1))
    }

    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let rows = self.shape(a).0;
        self.push(Op::SumRows(a), (rows, 1))
    }

    /// Mean softmax cross-entropy of `logits` rows listed in `index`.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        labels: Arc<[usize]>,
        index: Arc<[usize]>,
    ) -> Result<NodeId, AutodiffError> {
        let (rows, cols) = self.shape(logits);
        if labels.len() != rows {
            return Err(AutodiffError::Invalid(format!(
                "{} labels for {rows} rows",
                labels.len()
            )));
        }
        if index.is_empty() {
            return Err(AutodiffError::Invalid(
                "cross-entropy over an empty index set".into(),
            ));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= rows || labels[i] >= cols) {
            return Err(AutodiffError::Invalid(format!(
                "row {bad} out of range or label beyond {cols} classes"
            )));
        }
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                labels,
                index,
            },
            (1, 1),
        ))
    }

    /// Inverted dropout with drop probability `rate`.
    pub fn dropout(&mut self, a: NodeId, rate: f64) -> Result<NodeId, AutodiffError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(AutodiffError::Invalid(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        let shape = self.shape(a);
        Ok(self.push(Op::Dropout(a, rate), shape))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let shape = shapes::concat_cols(self.shape(a), self.shape(b))?;
        Ok(self.push(Op::ConcatCols(a, b), shape))
    }

    /// Attention-weighted neighbor aggregation over the sparsity pattern of
    /// `adj`: `out[i] = Σ_j softmax_j(lrelu(src[i] + dst[j])) x[j]`.
    pub fn edge_attn_agg(
        &mut self,
        adj: OperatorId,
        src: NodeId,
        dst: NodeId,
        x: NodeId,
    ) -> Result<NodeId, AutodiffError> {
        let shape = shapes::edge_attn_agg(
            self.operator_shape(adj),
            self.shape(src),
            self.shape(dst),
            self.shape(x),
        )?;
        Ok(self.push(Op::EdgeAttnAgg { adj, src, dst, x }, shape))
    }

    pub fn value(&self, id: NodeId) -> Option<&Tensor<T>> {
        if !self.evaluated {
            return None;
        }
        self.values.get(id.0).and_then(Option::as_ref)
    }

    fn val(&self, id: NodeId) -> &Tensor<T> {
        self.values[id.0]
            .as_ref()
            .expect("parents evaluated before children")
    }

    /// Evaluates every node in order.
    pub fn forward(
        &mut self,
        inputs: &[Tensor<T>],
        mode: Mode,
        interrupt: &Interrupt,
    ) -> Result<(), AutodiffError> {
        if inputs.len() != self.inputs.len() {
            return Err(AutodiffError::InputCount {
                expected: self.inputs.len(),
                got: inputs.len(),
            });
        }
        for ((name, shape), t) in self.inputs.iter().zip(inputs) {
            if t.shape() != *shape {
                return Err(AutodiffError::InputShape {
                    name: name.clone(),
                    expected: *shape,
                    got: t.shape(),
                });
            }
        }
        self.evaluated = false;
        self.values.clear();
        self.values.resize(self.nodes.len(), None);
        self.aux.clear();
        self.aux.resize(self.nodes.len(), None);

        for idx in 0..self.nodes.len() {
            interrupt.check()?;
            let (value, aux) = self.eval_node(idx, inputs, mode);
            if !value.all_finite() {
                return Err(AutodiffError::Numerical {
                    op: self.nodes[idx].op.name(),
                    node: idx,
                });
            }
            self.values[idx] = Some(value);
            self.aux[idx] = aux;
        }
        self.evaluated = true;
        Ok(())
    }

    fn eval_node(
        &self,
        idx: usize,
        inputs: &[Tensor<T>],
        mode: Mode,
    ) -> (Tensor<T>, Option<Aux<T>>) {
        let node = &self.nodes[idx];
        let shape = node.shape;
        let value = match &node.op {
            Op::Input(i) => inputs[*i].clone(),
            Op::Param(p) => self.params[*p].value.clone(),
            Op::Constant(t) => t.clone(),
            Op::MatMul(a, b) => matmul(self.val(*a), false, self.val(*b), false),
            Op::SpMM(o, a) => self.operators[o.0].forward.spmm(self.val(*a)),
            Op::Add(a, b) => zip_broadcast(self.val(*a), self.val(*b), shape, |x, y| x + y),
            Op::Sub(a, b) => zip_broadcast(self.val(*a), self.val(*b), shape, |x, y| x - y),
            Op::Mul(a, b) => zip_broadcast(self.val(*a), self.val(*b), shape, |x, y| x * y),
            Op::Div(a, b) => zip_broadcast(self.val(*a), self.val(*b), shape, |x, y| x / y),
            Op::Scale(a, s) => self.val(*a).map(|x| x * *s),
            Op::PowI(a, p) => self.val(*a).map(|x| x.powi(*p)),
            Op::Relu(a) => self
                .val(*a)
                .map(|x| if x > T::zero() { x } else { T::zero() }),
            Op::Elu(a) => self
                .val(*a)
                .map(|x| if x > T::zero() { x } else { x.exp_m1() }),
            Op::Tanh(a) => self.val(*a).map(T::tanh),
            Op::Sigmoid(a) => self.val(*a).map(|x| T::one() / (T::one() + (-x).exp())),
            Op::SoftmaxRows(a) => softmax_rows(self.val(*a)),
            Op::Sum(a) => Tensor::scalar(self.val(*a).sum()),
            Op::SumRows(a) => {
                let v = self.val(*a);
                Tensor::from_vec(
                    (v.rows(), 1),
                    (0..v.rows())
                        .map(|r| v.row(r).iter().copied().sum())
                        .collect(),
                )
            }
            Op::CrossEntropy {
                logits,
                labels,
                index,
            } => {
                let probs = softmax_rows(self.val(*logits));
                let z = self.val(*logits);
                let mut loss = T::zero();
                for &i in index.iter() {
                    let row = z.row(i);
                    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
                    loss += lse - row[labels[i]];
                }
                let value = Tensor::scalar(loss / T::of(index.len() as f64));
                return (value, Some(Aux::Probs(probs)));
            }
            Op::Dropout(a, rate) => match mode {
                Mode::Eval => self.val(*a).clone(),
                Mode::Train { seed, epoch } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, idx, epoch));
                    let keep = 1.0 - rate;
                    let scale = T::of(1.0 / keep);
                    let mask: Vec<T> = (0..shape.0 * shape.1)
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                scale
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    let mask = Tensor::from_vec(shape, mask);
                    let out = zip_broadcast(self.val(*a), &mask, shape, |x, m| x * m);
                    return (out, Some(Aux::Mask(mask)));
                }
            },
            Op::ConcatCols(a, b) => {
                let (va, vb) = (self.val(*a), self.val(*b));
                let mut data = Vec::with_capacity(shape.0 * shape.1);
                for r in 0..shape.0 {
                    data.extend_from_slice(va.row(r));
                    data.extend_from_slice(vb.row(r));
                }
                Tensor::from_vec(shape, data)
            }
            Op::EdgeAttnAgg { adj, src, dst, x } => {
                let m = &self.operators[adj.0].forward;
                let (s, t, xv) = (self.val(*src), self.val(*dst), self.val(*x));
                let d = shape.1;
                let mut out = Tensor::zeros(shape);
                let mut alpha = vec![T::zero(); m.nnz()];
                let mut pre = vec![T::zero(); m.nnz()];
                for i in 0..m.rows() {
                    let range = m.row_range(i);
                    if range.is_empty() {
                        continue;
                    }
                    let mut max = T::neg_infinity();
                    for k in range.clone() {
                        pre[k] = s.at(i, 0) + t.at(m.col_idx()[k], 0);
                        max = max.max(leaky(pre[k]));
                    }
                    let mut total = T::zero();
                    for k in range.clone() {
                        alpha[k] = (leaky(pre[k]) - max).exp();
                        total += alpha[k];
                    }
                    for k in range {
                        alpha[k] /= total;
                        let j = m.col_idx()[k];
                        for c in 0..d {
                            let v = out.at(i, c) + alpha[k] * xv.at(j, c);
                            out.set(i, c, v);
                        }
                    }
                }
                return (out, Some(Aux::Attention { alpha, pre }));
            }
        };
        (value, None)
    }

    /// Attention weights computed by the last forward pass at `node`, one per
    /// stored adjacency entry in row-major order.
    pub fn attention_weights(&self, node: NodeId) -> Option<&[T]> {
        match self.aux.get(node.0)? {
            Some(Aux::Attention { alpha, .. }) => Some(alpha),
            _ => None,
        }
    }

    /// Reverse pass from a scalar `loss`. Parameters the loss does not depend
    /// on receive zero gradients.
    pub fn backward(
        &self,
        loss: NodeId,
        interrupt: &Interrupt,
    ) -> Result<Gradients<T>, AutodiffError> {
        if !self.evaluated {
            return Err(AutodiffError::NotEvaluated);
        }
        let ls = self.shape(loss);
        if ls != (1, 1) {
            return Err(AutodiffError::NonScalarLoss(ls));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        let mut param_grads: Vec<Tensor<T>> = self
            .params
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            interrupt.check()?;
            if let Op::Param(p) = self.nodes[idx].op {
                param_grads[p].add_assign(&g);
                continue;
            }
            for (parent, contribution) in self.local_grads(idx, g) {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot => *slot = Some(contribution),
                }
            }
        }
        Ok(Gradients {
            names: self.params.iter().map(|p| p.name.clone()).collect(),
            grads: param_grads,
        })
    }

    fn local_grads(&self, idx: usize, g: Tensor<T>) -> Vec<(NodeId, Tensor<T>)> {
        let node = &self.nodes[idx];
        let out = self.values[idx].as_ref().expect("evaluated");
        let wants = |n: &NodeId| self.nodes[n.0].requires_grad;
        match &node.op {
            Op::Input(_) | Op::Param(_) | Op::Constant(_) => vec![],
            Op::MatMul(a, b) => {
                let mut v = Vec::new();
                if wants(a) {
                    v.push((*a, matmul(&g, false, self.val(*b), true)));
                }
                if wants(b) {
                    v.push((*b, matmul(self.val(*a), true, &g, false)));
                }
                v
            }
            Op::SpMM(o, a) => vec![(*a, self.operators[o.0].transpose.spmm(&g))],
            Op::Add(a, b) => vec![
                (*a, reduce_to(g.clone(), self.shape(*a))),
                (*b, reduce_to(g, self.shape(*b))),
            ],
            Op::Sub(a, b) => vec![
                (*a, reduce_to(g.clone(), self.shape(*a))),
                (*b, reduce_to(g.map(|x| -x), self.shape(*b))),
            ],
            Op::Mul(a, b) => {
                let (va, vb) = (self.val(*a), self.val(*b));
                let mut v = Vec::new();
                if wants(a) {
                    v.push((
                        *a,
                        reduce_to(zip_broadcast(&g, vb, node.shape, |x, y| x * y), va.shape()),
                    ));
                }
                if wants(b) {
                    v.push((
                        *b,
                        reduce_to(zip_broadcast(&g, va, node.shape, |x, y| x * y), vb.shape()),
                    ));
                }
                v
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.val(*a), self.val(*b));
                let mut v = Vec::new();
                if wants(a) {
                    v.push((
                        *a,
                        reduce_to(zip_broadcast(&g, vb, node.shape, |x, y| x / y), va.shape()),
                    ));
                }
                if wants(b) {
                    // d(a/b)/db = -(a/b)/b
                    let ratio = zip_broadcast(out, vb, node.shape, |q, y| q / y);
                    v.push((
                        *b,
                        reduce_to(
                            zip_broadcast(&g, &ratio, node.shape, |x, r| -x * r),
                            vb.shape(),
                        ),
                    ));
                }
                v
            }
            Op::Scale(a, s) => vec![(*a, g.map(|x| x * *s))],
            Op::PowI(a, p) => {
                let va = self.val(*a);
                let p = *p;
                let pf = T::of(p as f64);
                let d = zip_broadcast(&g, va, node.shape, |x, y| {
                    if p == 0 {
                        T::zero()
                    } else {
                        x * pf * y.powi(p - 1)
                    }
                });
                vec![(*a, d)]
            }
            Op::Relu(a) => vec![(
                *a,
                zip_broadcast(&g, self.val(*a), node.shape, |x, y| {
                    if y > T::zero() {
                        x
                    } else {
                        T::zero()
                    }
                }),
            )],
            Op::Elu(a) => vec![(
                *a,
                zip_broadcast(&g, self.val(*a), node.shape, |x, y| {
                    if y > T::zero() {
                        x
                    } else {
                        x * y.exp()
                    }
                }),
            )],
            Op::Tanh(a) => vec![(
                *a,
                zip_broadcast(&g, out, node.shape, |x, y| x * (T::one() - y * y)),
            )],
            Op::Sigmoid(a) => vec![(
                *a,
                zip_broadcast(&g, out, node.shape, |x, y| x * y * (T::one() - y)),
            )],
            Op::SoftmaxRows(a) => {
                let mut d = Tensor::zeros(node.shape);
                for r in 0..node.shape.0 {
                    let dot: T = g.row(r).iter().zip(out.row(r)).map(|(&x, &y)| x * y).sum();
                    for c in 0..node.shape.1 {
                        d.set(r, c, out.at(r, c) * (g.at(r, c) - dot));
                    }
                }
                vec![(*a, d)]
            }
            Op::Sum(a) => vec![(*a, Tensor::filled(self.shape(*a), g.at(0, 0)))],
            Op::SumRows(a) => {
                let sa = self.shape(*a);
                let mut d = Tensor::zeros(sa);
                for r in 0..sa.0 {
                    for c in 0..sa.1 {
                        d.set(r, c, g.at(r, 0));
                    }
                }
                vec![(*a, d)]
            }
            Op::CrossEntropy {
                logits,
                labels,
                index,
            } => {
                let Some(Aux::Probs(probs)) = &self.aux[idx] else {
                    unreachable!("cross-entropy saves probabilities")
                };
                let scale = g.at(0, 0) / T::of(index.len() as f64);
                let mut d = Tensor::zeros(self.shape(*logits));
                for &i in index.iter() {
                    for c in 0..d.cols() {
                        let target = if c == labels[i] { T::one() } else { T::zero() };
                        d.set(i, c, d.at(i, c) + (probs.at(i, c) - target) * scale);
                    }
                }
                vec![(*logits, d)]
            }
            Op::Dropout(a, _) => match &self.aux[idx] {
                Some(Aux::Mask(mask)) => {
                    vec![(*a, zip_broadcast(&g, mask, node.shape, |x, m| x * m))]
                }
                _ => vec![(*a, g)],
            },
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (self.shape(*a).1, self.shape(*b).1);
                let rows = node.shape.0;
                let mut ga = Vec::with_capacity(rows * ca);
                let mut gb = Vec::with_capacity(rows * cb);
                for r in 0..rows {
                    let row = g.row(r);
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                vec![
                    (*a, Tensor::from_vec((rows, ca), ga)),
                    (*b, Tensor::from_vec((rows, cb), gb)),
                ]
            }
            Op::EdgeAttnAgg { adj, src, dst, x } => {
                let Some(Aux::Attention { alpha, pre }) = &self.aux[idx] else {
                    unreachable!("attention saves weights")
                };
                let m = &self.operators[adj.0].forward;
                let xv = self.val(*x);
                let n = m.rows();
                let d = node.shape.1;
                let mut gx = Tensor::zeros(xv.shape());
                let mut gs = Tensor::zeros((n, 1));
                let mut gt = Tensor::zeros((n, 1));
                let slope = T::of(LEAKY_SLOPE);
                for i in 0..n {
                    let range = m.row_range(i);
                    if range.is_empty() {
                        continue;
                    }
                    let gi = g.row(i);
                    // dL/dalpha_ij = g_i . x_j
                    let dalpha: Vec<T> = range
                        .clone()
                        .map(|k| {
                            let j = m.col_idx()[k];
                            gi.iter().zip(xv.row(j)).map(|(&a, &b)| a * b).sum()
                        })
                        .collect();
                    let weighted: T = range
                        .clone()
                        .zip(&dalpha)
                        .map(|(k, &da)| alpha[k] * da)
                        .sum();
                    for (pos, k) in range.enumerate() {
                        let j = m.col_idx()[k];
                        for c in 0..d {
                            let v = gx.at(j, c) + alpha[k] * gi[c];
                            gx.set(j, c, v);
                        }
                        let de = alpha[k] * (dalpha[pos] - weighted);
                        let dpre = if pre[k] > T::zero() { de } else { de * slope };
                        gs.set(i, 0, gs.at(i, 0) + dpre);
                        gt.set(j, 0, gt.at(j, 0) + dpre);
                    }
                }
                vec![(*src, gs), (*dst, gt), (*x, gx)]
            }
        }
    }
}

fn softmax_rows<T: Real>(z: &Tensor<T>) -> Tensor<T> {
    let (rows, cols) = z.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let row = z.row(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    Tensor::from_vec((rows, cols), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64((rows, cols), data)
    }

    #[test]
    fn spmm_swaps_rows() {
        let s = SparseOp::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let mut g = ComputeGraph::<f64>::new();
        let op = g.add_operator(&s);
        let x = g.input("X", (2, 2));
        let y = g.spmm(op, x).unwrap();
        g.forward(
            &[t(2, 2, &[1., 2., 3., 4.])],
            Mode::Eval,
            &Interrupt::none(),
        )
        .unwrap();
        assert_eq!(g.value(y).unwrap().data(), &[3., 4., 1., 2.]);
    }

    #[test]
    fn spmm_identity_is_noop() {
        let mut g = ComputeGraph::<f64>::new();
        let op = g.add_operator(&SparseOp::identity(3));
        let x = g.input("X", (3, 2));
        let y = g.spmm(op, x).unwrap();
        let xv = t(3, 2, &[1., -2., 3., 0.5, 7., 8.]);
        g.forward(std::slice::from_ref(&xv), Mode::Eval, &Interrupt::none())
            .unwrap();
        assert_eq!(g.value(y).unwrap(), &xv);
    }

    #[test]
    fn softmax_of_equal_row_is_uniform() {
        let mut g = ComputeGraph::<f64>::new();
        let x = g.input("X", (1, 4));
        let y = g.softmax_rows(x);
        g.forward(&[t(1, 4, &[3.0; 4])], Mode::Eval, &Interrupt::none())
            .unwrap();
        assert_eq!(g.value(y).unwrap().data(), &[0.25; 4]);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut g = ComputeGraph::<f64>::new();
        let a = g.input("A", (4, 3));
        let b = g.input("B", (4, 3));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("(4, 3)") && err.contains("matmul"), "{err}");
        assert!(g.add(a, b).is_ok());
        let c = g.input("C", (2, 3));
        assert!(g.add(a, c).is_err());
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = ComputeGraph::<f64>::new();
        let x = g
            .param_with_value("X", t(2, 2, &[1., 2., 3., 4.]), ParamInit::Normal)
            .unwrap();
        let loss = g.sum(x);
        g.forward(&[], Mode::Eval, &Interrupt::none()).unwrap();
        let grads = g.backward(loss, &Interrupt::none()).unwrap();
        assert_eq!(grads.get("X").unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn unreachable_parameter_gets_exact_zero() {
        let mut g = ComputeGraph::<f64>::new();
        let x = g
            .param_with_value("X", t(1, 2, &[1., 2.]), ParamInit::Normal)
            .unwrap();
        let _w = g
            .param_with_value("W", t(2, 2, &[1., 2., 3., 4.]), ParamInit::Normal)
            .unwrap();
        let loss = g.sum(x);
        g.forward(&[], Mode::Eval, &Interrupt::none()).unwrap();
        let grads = g.backward(loss, &Interrupt::none()).unwrap();
        assert!(grads.get("W").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_before_forward_fails() {
        let mut g = ComputeGraph::<f64>::new();
        let x = g
            .param_with_value("X", t(1, 1, &[1.]), ParamInit::Normal)
            .unwrap();
        let loss = g.sum(x);
        assert_eq!(
            g.backward(loss, &Interrupt::none()).unwrap_err(),
            AutodiffError::NotEvaluated
        );
    }

    #[test]
    fn non_finite_forward_is_numerical_error() {
        let mut g = ComputeGraph::<f64>::new();
        let a = g.input("A", (1, 1));
        let z = g.scalar(0.0);
        g.div(a, z).unwrap();
        let err = g
            .forward(&[t(1, 1, &[1.0])], Mode::Eval, &Interrupt::none())
            .unwrap_err();
        assert!(matches!(err, AutodiffError::Numerical { op: "div", .. }));
    }

    #[test]
    fn duplicate_parameter_rejected() {
        let mut g = ComputeGraph::<f64>::new();
        g.param_with_value("W", t(1, 1, &[1.]), ParamInit::Normal)
            .unwrap();
        assert!(g
            .param_with_value("W", t(1, 1, &[1.]), ParamInit::Normal)
            .is_err());
    }

    fn path3_adj() -> SparseOp {
        SparseOp::from_triplets(
            3,
            3,
            vec![(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn attention_hand_computed_on_path() {
        let mut g = ComputeGraph::<f64>::new();
        let op = g.add_operator(&path3_adj());
        let s = g.input("s", (3, 1));
        let d = g.input("d", (3, 1));
        let x = g.input("x", (3, 2));
        let y = g.edge_attn_agg(op, s, d, x).unwrap();
        let scores = t(3, 1, &[1., 0., 0.]);
        g.forward(
            &[scores.clone(), scores, t(3, 2, &[1., 0., 0., 0., 0., 1.])],
            Mode::Eval,
            &Interrupt::none(),
        )
        .unwrap();
        // node 1 neighbors {0, 2}: softmax([lrelu(0 + 1), lrelu(0 + 0)]) = softmax([1, 0])
        let w = g.attention_weights(y).unwrap();
        let e = 1f64.exp();
        assert!((w[1] - e / (e + 1.0)).abs() < 1e-12);
        assert!((w[2] - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert!((w[1] - 0.7311).abs() < 1e-4);
        let out = g.value(y).unwrap();
        assert!((out.at(1, 0) - e / (e + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn attention_uniform_scores_and_isolated_node() {
        let adj = SparseOp::from_triplets(
            4,
            4,
            vec![(0, 1, 1.0), (1, 0, 1.0), (0, 2, 1.0), (2, 0, 1.0)],
        )
        .unwrap();
        let mut g = ComputeGraph::<f64>::new();
        let op = g.add_operator(&adj);
        let s = g.input("s", (4, 1));
        let x = g.input("x", (4, 2));
        let y = g.edge_attn_agg(op, s, s, x).unwrap();
        g.forward(
            &[
                t(4, 1, &[0.3; 4]),
                t(4, 2, &[9., 9., 1., 2., 3., 6., 5., 5.]),
            ],
            Mode::Eval,
            &Interrupt::none(),
        )
        .unwrap();
        let out = g.value(y).unwrap();
        assert_eq!(out.row(0), &[2.0, 4.0]);
        assert_eq!(out.row(3), &[0.0, 0.0]);
    }

    #[test]
    fn dropout_replays_exactly_and_is_identity_in_eval() {
        let build = || {
            let mut g = ComputeGraph::<f64>::new();
            let x = g.input("x", (8, 8));
            let y = g.dropout(x, 0.5).unwrap();
            (g, y)
        };
        let x = Tensor::filled((8, 8), 1.0);
        let (mut g1, y1) = build();
        let (mut g2, y2) = build();
        g1.forward(
            std::slice::from_ref(&x),
            Mode::Train { seed: 3, epoch: 1 },
            &Interrupt::none(),
        )
        .unwrap();
        g2.forward(
            std::slice::from_ref(&x),
            Mode::Train { seed: 3, epoch: 1 },
            &Interrupt::none(),
        )
        .unwrap();
        assert_eq!(g1.value(y1), g2.value(y2));
        assert!(g1
            .value(y1)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0 || v == 2.0));
        g2.forward(
            std::slice::from_ref(&x),
            Mode::Train { seed: 3, epoch: 2 },
            &Interrupt::none(),
        )
        .unwrap();
        assert_ne!(g1.value(y1), g2.value(y2));
        g1.forward(std::slice::from_ref(&x), Mode::Eval, &Interrupt::none())
            .unwrap();
        assert_eq!(g1.value(y1).unwrap(), &x);
    }

    #[test]
    fn interrupt_stops_forward() {
        let mut g = ComputeGraph::<f64>::new();
        let x = g.input("x", (1, 1));
        g.relu(x);
        let flag = Arc::new(AtomicBool::new(true));
        let err = g
            .forward(
                &[t(1, 1, &[1.])],
                Mode::Eval,
                &Interrupt::new(None, Some(flag)),
            )
            .unwrap_err();
        assert!(matches!(err, AutodiffError::Interrupted(_)));
    }
}
