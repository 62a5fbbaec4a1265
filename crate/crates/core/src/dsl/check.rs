use super::ast::{BinOp, GraphDef, PropProgram, Span};
use super::eval::{run, Emitter, Unary};
use super::{Dims, DslError};
use crate::autodiff::{shapes, AutodiffError, ParamInit, Shape};

/// Shape of one evaluated sub-expression. Loop bodies appear once per
/// unrolled iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation {
    pub span: Span,
    pub shape: Shape,
}

/// A program whose every expression has a concrete shape under `dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedProgram {
    pub program: PropProgram,
    pub dims: Dims,
    pub k: usize,
    pub output: Shape,
    pub annotations: Vec<Annotation>,
    pub warnings: Vec<String>,
}

struct ShapeEmitter {
    n: usize,
    annotations: Vec<Annotation>,
    warnings: Vec<String>,
}

impl Emitter for ShapeEmitter {
    type V = Shape;

    fn shape(&self, v: Shape) -> Shape {
        v
    }

    fn operator(&mut self, _def: &GraphDef, _self_loop: f64) -> Result<usize, DslError> {
        Ok(0)
    }

    fn adjacency(&mut self) -> Result<usize, DslError> {
        Ok(0)
    }

    fn param(&mut self, _name: &str, shape: Shape, _init: ParamInit) -> Result<Shape, DslError> {
        Ok(shape)
    }

    fn scalar(&mut self, _x: f64) -> Shape {
        (1, 1)
    }

    fn binary(&mut self, op: BinOp, a: Shape, b: Shape) -> Result<Shape, AutodiffError> {
        match op {
            BinOp::MatMul => shapes::matmul(a, b),
            BinOp::Add => shapes::broadcast("add", a, b),
            BinOp::Sub => shapes::broadcast("sub", a, b),
            BinOp::Mul => shapes::broadcast("mul", a, b),
            BinOp::Div => shapes::broadcast("div", a, b),
        }
    }

    fn scale(&mut self, a: Shape, _factor: f64) -> Shape {
        a
    }

    fn powi(&mut self, a: Shape, _exponent: i32) -> Shape {
        a
    }

    fn unary(&mut self, f: Unary, a: Shape) -> Shape {
        match f {
            Unary::SumRows => (a.0, 1),
            _ => a,
        }
    }

    fn spmm(&mut self, _op: usize, x: Shape) -> Result<Shape, AutodiffError> {
        shapes::spmm((self.n, self.n), x)
    }

    fn attn(
        &mut self,
        _op: usize,
        src: Shape,
        dst: Shape,
        x: Shape,
    ) -> Result<Shape, AutodiffError> {
        shapes::edge_attn_agg((self.n, self.n), src, dst, x)
    }

    fn concat(&mut self, a: Shape, b: Shape) -> Result<Shape, AutodiffError> {
        shapes::concat_cols(a, b)
    }

    fn annotate(&mut self, span: Span, shape: Shape) {
        self.annotations.push(Annotation { span, shape });
    }

    fn warn(&mut self, span: Span, message: String) {
        self.warnings.push(format!("{span}: {message}"));
    }
}

/// Infers the shape of every expression with `X` and `X_raw` bound to `n x h`.
pub fn check_shapes(prog: &PropProgram, dims: Dims) -> Result<TypedProgram, DslError> {
    if dims.n == 0 || dims.h == 0 || dims.c == 0 {
        return Err(DslError::Compile(format!(
            "dimensions must be positive, got {dims:?}"
        )));
    }
    let mut em = ShapeEmitter {
        n: dims.n,
        annotations: Vec::new(),
        warnings: Vec::new(),
    };
    let x = (dims.n, dims.h);
    let output = run(prog, dims, &mut em, x, x)?;
    let k = super::eval::const_values(prog)?["K"] as usize;
    Ok(TypedProgram {
        program: prog.clone(),
        dims,
        k,
        output,
        annotations: em.annotations,
        warnings: em.warnings,
    })
}
