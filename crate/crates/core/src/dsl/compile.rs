use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ast::{BinOp, GraphCtor, GraphDef};
use super::check::TypedProgram;
use super::eval::{run, Emitter, Unary};
use super::DslError;
use crate::autodiff::{
    AutodiffError, ComputeGraph, Interrupt, Mode, NodeId, OperatorId, ParamInit, Real, Shape,
    Tensor,
};
use crate::graph::{
    build_operator, prune_mean_std, Graph, LaplacianKind, LaplacianVariant, SparseOp,
    DEFAULT_PRUNE_EPSILON,
};

/// Handles into a compute graph that a mechanism was compiled into.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismNodes {
    pub output: NodeId,
    /// Registered parameter names in declaration order.
    pub params: Vec<String>,
    /// Materialized operators by DSL name; `A` is the raw adjacency.
    pub operators: Vec<(String, OperatorId)>,
}

struct GraphEmitter<'a, T: Real> {
    cg: &'a mut ComputeGraph<T>,
    graph: &'a Graph,
    rng: &'a mut ChaCha8Rng,
    operators: Vec<OperatorId>,
    params: Vec<String>,
}

fn raw_adjacency(graph: &Graph) -> Result<SparseOp, DslError> {
    let mut t = Vec::with_capacity(2 * graph.num_edges());
    for &(u, v) in graph.edges() {
        t.push((u, v, 1.0));
        t.push((v, u, 1.0));
    }
    SparseOp::from_triplets(graph.num_nodes(), graph.num_nodes(), t)
        .map_err(|e| DslError::Compile(e.to_string()))
}

/// Builds the sparse operator a graph definition names.
pub(crate) fn materialize(
    graph: &Graph,
    ctor: GraphCtor,
    self_loop: f64,
) -> Result<SparseOp, DslError> {
    let kind = match ctor {
        GraphCtor::PrunedNorm => {
            return prune_mean_std(graph, self_loop, DEFAULT_PRUNE_EPSILON)
                .map_err(|e| DslError::Compile(e.to_string()))
        }
        GraphCtor::SymNorm => LaplacianKind::AdjacencySymNorm,
        GraphCtor::RwNorm => LaplacianKind::AdjacencyRwNorm,
        GraphCtor::Laplacian => LaplacianKind::Combinatorial,
        GraphCtor::SymLaplacian => LaplacianKind::SymLaplacian,
        GraphCtor::ScaledLaplacian => LaplacianKind::ScaledLaplacian,
    };
    let variant =
        LaplacianVariant::new(kind, self_loop).map_err(|e| DslError::Compile(e.to_string()))?;
    build_operator(graph, variant).map_err(|e| DslError::Compile(e.to_string()))
}

impl<T: Real> Emitter for GraphEmitter<'_, T> {
    type V = NodeId;

    fn shape(&self, v: NodeId) -> Shape {
        self.cg.shape(v)
    }

    fn operator(&mut self, def: &GraphDef, self_loop: f64) -> Result<usize, DslError> {
        let op = materialize(self.graph, def.ctor, self_loop)?;
        self.operators.push(self.cg.add_operator(&op));
        Ok(self.operators.len() - 1)
    }

    fn adjacency(&mut self) -> Result<usize, DslError> {
        let op = raw_adjacency(self.graph)?;
        self.operators.push(self.cg.add_operator(&op));
        Ok(self.operators.len() - 1)
    }

    fn param(&mut self, name: &str, shape: Shape, init: ParamInit) -> Result<NodeId, DslError> {
        self.params.push(name.to_string());
        self.cg
            .param(name, shape, init, self.rng)
            .map_err(|e| DslError::Compile(e.to_string()))
    }

    fn scalar(&mut self, x: f64) -> NodeId {
        self.cg.scalar(x)
    }

    fn binary(&mut self, op: BinOp, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        match op {
            BinOp::Add => self.cg.add(a, b),
            BinOp::Sub => self.cg.sub(a, b),
            BinOp::Mul => self.cg.mul(a, b),
            BinOp::Div => self.cg.div(a, b),
            BinOp::MatMul => self.cg.matmul(a, b),
        }
    }

    fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.cg.scale(a, factor)
    }

    fn powi(&mut self, a: NodeId, exponent: i32) -> NodeId {
        self.cg.powi(a, exponent)
    }

    fn unary(&mut self, f: Unary, a: NodeId) -> NodeId {
        match f {
            Unary::Relu => self.cg.relu(a),
            Unary::Elu => self.cg.elu(a),
            Unary::Tanh => self.cg.tanh(a),
            Unary::Sigmoid => self.cg.sigmoid(a),
            Unary::SoftmaxRows => self.cg.softmax_rows(a),
            Unary::SumRows => self.cg.sum_rows(a),
        }
    }

    fn spmm(&mut self, op: usize, x: NodeId) -> Result<NodeId, AutodiffError> {
        self.cg.spmm(self.operators[op], x)
    }

    fn attn(
        &mut self,
        op: usize,
        src: NodeId,
        dst: NodeId,
        x: NodeId,
    ) -> Result<NodeId, AutodiffError> {
        self.cg.edge_attn_agg(self.operators[op], src, dst, x)
    }

    fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.cg.concat_cols(a, b)
    }
}

/// Unrolls the mechanism into `cg` on top of existing `x_in` and `x_raw`
/// nodes (both `n x h`). Parameters are sampled from `rng` in declaration
/// order; graph operators are materialized once.
pub fn compile_into<T: Real>(
    tp: &TypedProgram,
    graph: &Graph,
    cg: &mut ComputeGraph<T>,
    x_in: NodeId,
    x_raw: NodeId,
    rng: &mut ChaCha8Rng,
) -> Result<MechanismNodes, DslError> {
    let dims = tp.dims;
    if graph.num_nodes() != dims.n {
        return Err(DslError::Compile(format!(
            "program checked for n = {} but the graph has {} nodes",
            dims.n,
            graph.num_nodes()
        )));
    }
    for (name, id) in [("X", x_in), ("X_raw", x_raw)] {
        if cg.shape(id) != (dims.n, dims.h) {
            return Err(DslError::Compile(format!(
                "{name} is {:?}, expected {:?}",
                cg.shape(id),
                (dims.n, dims.h)
            )));
        }
    }
    let mut em = GraphEmitter {
        cg,
        graph,
        rng,
        operators: Vec::new(),
        params: Vec::new(),
    };
    let output = run(&tp.program, dims, &mut em, x_in, x_raw)?;
    let mut names = vec!["A".to_string()];
    names.extend(tp.program.graph_defs.iter().map(|g| g.name.clone()));
    Ok(MechanismNodes {
        output,
        params: em.params,
        operators: names.into_iter().zip(em.operators).collect(),
    })
}

/// A mechanism compiled into its own graph with inputs `X` and `X_raw`.
#[derive(Debug, Clone)]
pub struct CompiledMechanism<T: Real> {
    graph: ComputeGraph<T>,
    nodes: MechanismNodes,
}

/// Compiles `tp` standalone, sampling parameters from `seed`.
pub fn compile<T: Real>(
    tp: &TypedProgram,
    graph: &Graph,
    seed: u64,
) -> Result<CompiledMechanism<T>, DslError> {
    let mut cg = ComputeGraph::new();
    let shape = (tp.dims.n, tp.dims.h);
    let x = cg.input("X", shape);
    let x_raw = cg.input("X_raw", shape);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = compile_into(tp, graph, &mut cg, x, x_raw, &mut rng)?;
    Ok(CompiledMechanism { graph: cg, nodes })
}

impl<T: Real> CompiledMechanism<T> {
    /// Evaluates the mechanism (no dropout) on the given inputs.
    pub fn forward(
        &mut self,
        x_in: &Tensor<T>,
        x_raw: &Tensor<T>,
    ) -> Result<Tensor<T>, AutodiffError> {
        self.graph.forward(
            &[x_in.clone(), x_raw.clone()],
            Mode::Eval,
            &Interrupt::none(),
        )?;
        Ok(self
            .graph
            .value(self.nodes.output)
            .expect("evaluated")
            .clone())
    }

    pub fn nodes(&self) -> &MechanismNodes {
        &self.nodes
    }

    pub fn compute_graph(&self) -> &ComputeGraph<T> {
        &self.graph
    }

    pub fn compute_graph_mut(&mut self) -> &mut ComputeGraph<T> {
        &mut self.graph
    }

    pub fn set_param(&mut self, name: &str, value: Tensor<T>) -> Result<(), AutodiffError> {
        self.graph.set_param_value(name, value)
    }
}
