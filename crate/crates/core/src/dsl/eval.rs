//! The unrolling walker shared by the shape checker and the compiler.

use std::collections::HashMap;

use super::ast::*;
use super::printer;
use super::{Dims, DslError};
use crate::autodiff::{AutodiffError, ParamInit, Shape};

/// Values of all constants, evaluated in declaration order.
pub(crate) fn const_values(prog: &PropProgram) -> Result<HashMap<String, f64>, DslError> {
    let mut values = HashMap::new();
    for c in &prog.consts {
        if values.contains_key(&c.name) {
            return Err(DslError::invalid(
                c.span,
                format!("constant `{}` declared twice", c.name),
            ));
        }
        let v = const_eval(&c.value, &values, &[])?;
        values.insert(c.name.clone(), v);
    }
    Ok(values)
}

/// Evaluates a compile-time expression over constants and bound indices.
pub(crate) fn const_eval(
    e: &Expr,
    consts: &HashMap<String, f64>,
    bound: &[(&str, f64)],
) -> Result<f64, DslError> {
    let v = match &e.kind {
        ExprKind::Num(v) => *v,
        ExprKind::Var(name) => match bound.iter().find(|(b, _)| b == name) {
            Some(&(_, v)) => v,
            None => *consts
                .get(name)
                .ok_or_else(|| DslError::UndeclaredIdentifier {
                    name: name.clone(),
                    span: e.span,
                })?,
        },
        ExprKind::Neg(inner) => -const_eval(inner, consts, bound)?,
        ExprKind::Bin(op, l, r) => {
            let (a, b) = (const_eval(l, consts, bound)?, const_eval(r, consts, bound)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div if b == 0.0 => {
                    return Err(DslError::invalid(e.span, "division by a zero constant"))
                }
                BinOp::Div => a / b,
                BinOp::MatMul => {
                    return Err(DslError::invalid(e.span, "`@` in a constant expression"))
                }
            }
        }
        ExprKind::Call(Func::Pow, args) => {
            let base = const_eval(&args[0], consts, bound)?;
            base.powi(int_exponent(&args[1], consts, bound)?)
        }
        _ => {
            return Err(DslError::invalid(
                e.span,
                format!("`{}` is not a compile-time constant", printer::expr(e)),
            ))
        }
    };
    if !v.is_finite() {
        return Err(DslError::invalid(
            e.span,
            "constant expression is not finite",
        ));
    }
    Ok(v)
}

fn int_exponent(
    e: &Expr,
    consts: &HashMap<String, f64>,
    bound: &[(&str, f64)],
) -> Result<i32, DslError> {
    let v = const_eval(e, consts, bound)?;
    if v.fract() != 0.0 || v.abs() > 64.0 {
        return Err(DslError::invalid(
            e.span,
            format!("pow exponent must be an integer in -64..=64, got {v}"),
        ));
    }
    Ok(v as i32)
}

pub(crate) fn resolve_dim(d: Dim, dims: Dims) -> usize {
    match d {
        Dim::N => dims.n,
        Dim::F => dims.f,
        Dim::H => dims.h,
        Dim::C => dims.c,
        Dim::Lit(k) => k,
    }
}

pub(crate) fn param_shape(s: ParamShape, dims: Dims) -> Shape {
    match s {
        ParamShape::Scalar => (1, 1),
        ParamShape::Vector(Dim::N) => (dims.n, 1),
        ParamShape::Vector(d) => (1, resolve_dim(d, dims)),
        ParamShape::Matrix(a, b) => (resolve_dim(a, dims), resolve_dim(b, dims)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Unary {
    Relu,
    Elu,
    Tanh,
    Sigmoid,
    SoftmaxRows,
    SumRows,
}

/// Backend receiving the unrolled operations.
pub(crate) trait Emitter {
    type V: Copy;

    fn shape(&self, v: Self::V) -> Shape;
    fn operator(&mut self, def: &GraphDef, self_loop: f64) -> Result<usize, DslError>;
    fn adjacency(&mut self) -> Result<usize, DslError>;
    fn param(&mut self, name: &str, shape: Shape, init: ParamInit) -> Result<Self::V, DslError>;
    fn scalar(&mut self, x: f64) -> Self::V;
    fn binary(&mut self, op: BinOp, a: Self::V, b: Self::V) -> Result<Self::V, AutodiffError>;
    fn scale(&mut self, a: Self::V, factor: f64) -> Self::V;
    fn powi(&mut self, a: Self::V, exponent: i32) -> Self::V;
    fn unary(&mut self, f: Unary, a: Self::V) -> Self::V;
    fn spmm(&mut self, op: usize, x: Self::V) -> Result<Self::V, AutodiffError>;
    fn attn(
        &mut self,
        op: usize,
        src: Self::V,
        dst: Self::V,
        x: Self::V,
    ) -> Result<Self::V, AutodiffError>;
    fn concat(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, AutodiffError>;

    fn annotate(&mut self, _span: Span, _shape: Shape) {}
    fn warn(&mut self, _span: Span, _message: String) {}
}

#[derive(Clone, Copy)]
enum Val<V> {
    Num(f64),
    T(V),
}

struct ParamEntry<V> {
    layered: bool,
    values: Vec<V>,
}

pub(crate) struct Walk<'a, E: Emitter> {
    em: &'a mut E,
    dims: Dims,
    k_max: usize,
    consts: HashMap<String, f64>,
    params: HashMap<String, ParamEntry<E::V>>,
    operators: HashMap<String, usize>,
    env: HashMap<String, Val<E::V>>,
    loop_var: Option<(String, f64)>,
}

const IMPLICIT: [&str; 3] = ["X", "X_raw", "A"];

/// Registers parameters and operators, unrolls every block, and returns the
/// output value. `x` and `x_raw` must be `n x h`.
pub(crate) fn run<E: Emitter>(
    prog: &PropProgram,
    dims: Dims,
    em: &mut E,
    x: E::V,
    x_raw: E::V,
) -> Result<E::V, DslError> {
    let consts = const_values(prog)?;
    let k_max = consts["K"] as usize;
    let mut w = Walk {
        em,
        dims,
        k_max,
        consts,
        params: HashMap::new(),
        operators: HashMap::new(),
        env: HashMap::new(),
        loop_var: None,
    };
    w.env.insert("X".into(), Val::T(x));
    w.env.insert("X_raw".into(), Val::T(x_raw));
    w.declare(prog)?;

    w.block(&prog.init)?;
    if let Some(step) = &prog.step {
        let from = w.bound(&step.from)?;
        let to = w.bound(&step.to)?;
        if w.consts.contains_key(&step.var) || IMPLICIT.contains(&step.var.as_str()) {
            return Err(DslError::invalid(
                step.span,
                format!("loop variable `{}` shadows a name", step.var),
            ));
        }
        for k in from..=to {
            w.loop_var = Some((step.var.clone(), k as f64));
            w.block(&step.body)?;
        }
        w.loop_var = None;
    }
    w.block(&prog.final_block)?;

    let [out] = prog.out.as_slice() else {
        let span = prog.out.get(1).map_or(Span::default(), |s| s.span);
        return Err(DslError::invalid(
            span,
            format!(
                "the out block must contain exactly one assignment, found {}",
                prog.out.len()
            ),
        ));
    };
    let value = w.expr(&out.value)?;
    let Val::T(y) = value else {
        return Err(DslError::invalid(
            out.span,
            "the output must be a tensor, not a constant",
        ));
    };
    let shape = w.em.shape(y);
    if shape != (dims.n, dims.h) && shape != (dims.n, dims.c) {
        return Err(DslError::ShapeMismatch {
            op: "output",
            lhs: (dims.n, dims.h),
            rhs: shape,
            span: out.span,
        });
    }
    Ok(y)
}

impl<E: Emitter> Walk<'_, E> {
    fn taken(&self, name: &str) -> bool {
        IMPLICIT.contains(&name)
            || self.consts.contains_key(name)
            || self.params.contains_key(name)
            || self.operators.contains_key(name)
    }

    fn declare(&mut self, prog: &PropProgram) -> Result<(), DslError> {
        let adjacency = self.em.adjacency()?;
        self.operators.insert("A".into(), adjacency);

        for p in &prog.params {
            if self.taken(&p.name) {
                return Err(DslError::invalid(
                    p.span,
                    format!("`{}` is already declared", p.name),
                ));
            }
            let shape = param_shape(p.shape, self.dims);
            if shape.0 == 0 || shape.1 == 0 {
                return Err(DslError::invalid(
                    p.span,
                    format!("parameter `{}` has an empty shape", p.name),
                ));
            }
            let mut values = Vec::new();
            match &p.layer_var {
                Some(var) => {
                    for k in 1..=self.k_max {
                        let init = self.init(&p.init, &[(var.as_str(), k as f64)])?;
                        values.push(self.em.param(&format!("{}[{k}]", p.name), shape, init)?);
                    }
                }
                None => {
                    let init = self.init(&p.init, &[])?;
                    values.push(self.em.param(&p.name, shape, init)?);
                }
            }
            self.params.insert(
                p.name.clone(),
                ParamEntry {
                    layered: p.layer_var.is_some(),
                    values,
                },
            );
        }

        for g in &prog.graph_defs {
            if self.taken(&g.name) {
                return Err(DslError::invalid(
                    g.span,
                    format!("`{}` is already declared", g.name),
                ));
            }
            let c = match &g.self_loop {
                Some(e) => const_eval(e, &self.consts, &[])?,
                None => 0.0,
            };
            if c < 0.0 {
                return Err(DslError::invalid(
                    g.span,
                    format!("self-loop weight c = {c} must be non-negative"),
                ));
            }
            let id = self.em.operator(g, c)?;
            self.operators.insert(g.name.clone(), id);
        }
        Ok(())
    }

    fn init(&self, spec: &InitSpec, bound: &[(&str, f64)]) -> Result<ParamInit, DslError> {
        Ok(match spec {
            InitSpec::Glorot => ParamInit::GlorotUniform,
            InitSpec::Normal => ParamInit::Normal,
            InitSpec::Zeros => ParamInit::Constant(0.0),
            InitSpec::Ones => ParamInit::Constant(1.0),
            InitSpec::Const(e) => ParamInit::Constant(const_eval(e, &self.consts, bound)?),
        })
    }

    fn bound_vars(&self) -> Vec<(&str, f64)> {
        self.loop_var
            .iter()
            .map(|(n, v)| (n.as_str(), *v))
            .collect()
    }

    fn bound(&self, e: &Expr) -> Result<i64, DslError> {
        let v = const_eval(e, &self.consts, &self.bound_vars())?;
        if v.fract() != 0.0 {
            return Err(DslError::invalid(
                e.span,
                format!("loop bound {v} is not an integer"),
            ));
        }
        Ok(v as i64)
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<(), DslError> {
        for st in stmts {
            let reserved = self.taken(&st.target)
                || self.loop_var.as_ref().is_some_and(|(n, _)| *n == st.target);
            if reserved {
                return Err(DslError::invalid(
                    st.span,
                    format!("cannot assign to `{}`", st.target),
                ));
            }
            let v = self.expr(&st.value)?;
            self.env.insert(st.target.clone(), v);
        }
        Ok(())
    }

    fn tensor(&mut self, v: Val<E::V>) -> E::V {
        match v {
            Val::T(t) => t,
            Val::Num(x) => self.em.scalar(x),
        }
    }

    fn mismatch(span: Span) -> impl Fn(AutodiffError) -> DslError {
        move |e| match e {
            AutodiffError::ShapeMismatch { op, lhs, rhs } => {
                DslError::ShapeMismatch { op, lhs, rhs, span }
            }
            other => DslError::Compile(other.to_string()),
        }
    }

    fn operator_arg(&self, e: &Expr) -> Result<usize, DslError> {
        match &e.kind {
            ExprKind::Var(name) => self.operators.get(name).copied().ok_or_else(|| {
                if self.env.contains_key(name) || self.params.contains_key(name) {
                    DslError::invalid(
                        e.span,
                        format!("`{name}` is a tensor, but a graph operator is required here"),
                    )
                } else {
                    DslError::UndeclaredIdentifier {
                        name: name.clone(),
                        span: e.span,
                    }
                }
            }),
            _ => Err(DslError::invalid(
                e.span,
                "expected the name of a graph operator",
            )),
        }
    }

    fn expr(&mut self, e: &Expr) -> Result<Val<E::V>, DslError> {
        let v = self.expr_inner(e)?;
        let shape = match v {
            Val::Num(_) => (1, 1),
            Val::T(t) => self.em.shape(t),
        };
        self.em.annotate(e.span, shape);
        Ok(v)
    }

    fn expr_inner(&mut self, e: &Expr) -> Result<Val<E::V>, DslError> {
        let span = e.span;
        match &e.kind {
            ExprKind::Num(v) => Ok(Val::Num(*v)),
            ExprKind::Var(name) => self.lookup(name, span),
            ExprKind::Index(name, idx) => {
                let Some(entry) = self.params.get(name) else {
                    return Err(DslError::UndeclaredIdentifier {
                        name: name.clone(),
                        span,
                    });
                };
                if !entry.layered {
                    return Err(DslError::invalid(
                        span,
                        format!("`{name}` is not a per-layer parameter"),
                    ));
                }
                let i = const_eval(idx, &self.consts, &self.bound_vars())?;
                if i.fract() != 0.0 || i < 1.0 || i > self.k_max as f64 {
                    return Err(DslError::invalid(
                        span,
                        format!("layer index {i} outside 1..={}", self.k_max),
                    ));
                }
                Ok(Val::T(self.params[name].values[i as usize - 1]))
            }
            ExprKind::Neg(inner) => Ok(match self.expr(inner)? {
                Val::Num(x) => Val::Num(-x),
                Val::T(t) => Val::T(self.em.scale(t, -1.0)),
            }),
            ExprKind::Bin(op, l, r) => {
                let a = self.expr(l)?;
                let b = self.expr(r)?;
                self.binary(*op, a, b, span, r)
            }
            ExprKind::Call(f, args) => self.call(*f, args, span),
        }
    }

    fn lookup(&mut self, name: &str, span: Span) -> Result<Val<E::V>, DslError> {
        if let Some((var, k)) = &self.loop_var {
            if var == name {
                return Ok(Val::Num(*k));
            }
        }
        if let Some(v) = self.env.get(name) {
            return Ok(*v);
        }
        if let Some(p) = self.params.get(name) {
            if p.layered {
                return Err(DslError::invalid(
                    span,
                    format!("per-layer parameter `{name}` needs an index, e.g. `{name}[k]`"),
                ));
            }
            return Ok(Val::T(p.values[0]));
        }
        if let Some(&c) = self.consts.get(name) {
            return Ok(Val::Num(c));
        }
        if self.operators.contains_key(name) {
            return Err(DslError::invalid(
                span,
                format!("graph operator `{name}` can only be applied through spmm or attn_agg"),
            ));
        }
        Err(DslError::UndeclaredIdentifier {
            name: name.to_string(),
            span,
        })
    }

    fn binary(
        &mut self,
        op: BinOp,
        a: Val<E::V>,
        b: Val<E::V>,
        span: Span,
        rhs: &Expr,
    ) -> Result<Val<E::V>, DslError> {
        let mismatch = Self::mismatch(span);
        match (a, b) {
            (Val::Num(x), Val::Num(y)) => Ok(Val::Num(match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div if y == 0.0 => {
                    return Err(DslError::invalid(span, "division by a zero constant"))
                }
                BinOp::Div => x / y,
                BinOp::MatMul => return Err(DslError::invalid(span, "`@` needs tensor operands")),
            })),
            (_, _) if op == BinOp::MatMul => {
                let (Val::T(x), Val::T(y)) = (a, b) else {
                    return Err(DslError::invalid(span, "`@` needs tensor operands"));
                };
                Ok(Val::T(self.em.binary(op, x, y).map_err(mismatch)?))
            }
            (Val::T(t), Val::Num(x)) if op == BinOp::Mul => Ok(Val::T(self.em.scale(t, x))),
            (Val::Num(x), Val::T(t)) if op == BinOp::Mul => Ok(Val::T(self.em.scale(t, x))),
            (Val::T(t), Val::Num(x)) if op == BinOp::Div => {
                if x == 0.0 {
                    return Err(DslError::invalid(span, "division by a zero constant"));
                }
                Ok(Val::T(self.em.scale(t, 1.0 / x)))
            }
            _ => {
                if op == BinOp::Div {
                    self.em.warn(
                        span,
                        format!(
                            "division by `{}` may reach zero at run time",
                            printer::expr(rhs)
                        ),
                    );
                }
                let x = self.tensor(a);
                let y = self.tensor(b);
                Ok(Val::T(self.em.binary(op, x, y).map_err(mismatch)?))
            }
        }
    }

    fn call(&mut self, f: Func, args: &[Expr], span: Span) -> Result<Val<E::V>, DslError> {
        let mismatch = Self::mismatch(span);
        match f {
            Func::Spmm => {
                let op = self.operator_arg(&args[0])?;
                let x = self.expr(&args[1])?;
                let x = self.tensor(x);
                Ok(Val::T(self.em.spmm(op, x).map_err(mismatch)?))
            }
            Func::AttnAgg => {
                let op = self.operator_arg(&args[0])?;
                let mut t = [None; 3];
                for (slot, arg) in t.iter_mut().zip(&args[1..]) {
                    let v = self.expr(arg)?;
                    *slot = Some(self.tensor(v));
                }
                let [Some(s), Some(d), Some(x)] = t else {
                    unreachable!("three operands")
                };
                Ok(Val::T(self.em.attn(op, s, d, x).map_err(mismatch)?))
            }
            Func::Concat => {
                let a = self.expr(&args[0])?;
                let a = self.tensor(a);
                let b = self.expr(&args[1])?;
                let b = self.tensor(b);
                Ok(Val::T(self.em.concat(a, b).map_err(mismatch)?))
            }
            Func::Pow => {
                let exponent = int_exponent(&args[1], &self.consts, &self.bound_vars())?;
                Ok(match self.expr(&args[0])? {
                    Val::Num(x) => {
                        let v = x.powi(exponent);
                        if !v.is_finite() {
                            return Err(DslError::invalid(span, "pow of a constant is not finite"));
                        }
                        Val::Num(v)
                    }
                    Val::T(t) => Val::T(self.em.powi(t, exponent)),
                })
            }
            _ => {
                let u = match f {
                    Func::Relu => Unary::Relu,
                    Func::Elu => Unary::Elu,
                    Func::Tanh => Unary::Tanh,
                    Func::Sigmoid => Unary::Sigmoid,
                    Func::SoftmaxRows => Unary::SoftmaxRows,
                    _ => Unary::SumRows,
                };
                let a = self.expr(&args[0])?;
                let a = self.tensor(a);
                Ok(Val::T(self.em.unary(u, a)))
            }
        }
    }
}
