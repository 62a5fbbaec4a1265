/// Source position of a token (1-based).
///
/// Spans never take part in AST equality, so a reprinted program compares
/// equal to the original.
#[derive(Debug, Clone, Copy, Default, Eq)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropProgram {
    pub name: String,
    pub consts: Vec<ConstDef>,
    pub params: Vec<ParamDecl>,
    pub graph_defs: Vec<GraphDef>,
    pub init: Vec<Stmt>,
    pub step: Option<StepBlock>,
    pub final_block: Vec<Stmt>,
    pub out: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstDef {
    pub name: String,
    pub value: Expr,
    pub span: Span,
}

/// Symbolic or literal dimension in a parameter shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    N,
    F,
    H,
    C,
    Lit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamShape {
    Scalar,
    /// `vector(n)` is a column (one entry per node); any other vector is a row.
    Vector(Dim),
    Matrix(Dim, Dim),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Glorot,
    Normal,
    Zeros,
    Ones,
    Const(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    /// `W[k]` declares one copy per layer `1..=K`; the index name is bound
    /// while evaluating the init spec.
    pub layer_var: Option<String>,
    pub shape: ParamShape,
    pub init: InitSpec,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphCtor {
    SymNorm,
    RwNorm,
    Laplacian,
    SymLaplacian,
    ScaledLaplacian,
    PrunedNorm,
}

impl GraphCtor {
    pub const ALL: [GraphCtor; 6] = [
        GraphCtor::SymNorm,
        GraphCtor::RwNorm,
        GraphCtor::Laplacian,
        GraphCtor::SymLaplacian,
        GraphCtor::ScaledLaplacian,
        GraphCtor::PrunedNorm,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            GraphCtor::SymNorm => "sym_norm",
            GraphCtor::RwNorm => "rw_norm",
            GraphCtor::Laplacian => "laplacian",
            GraphCtor::SymLaplacian => "sym_laplacian",
            GraphCtor::ScaledLaplacian => "scaled_laplacian",
            GraphCtor::PrunedNorm => "pruned_norm",
        }
    }

    pub fn from_keyword(word: &str) -> Option<GraphCtor> {
        Self::ALL.into_iter().find(|c| c.keyword() == word)
    }

    /// Whether the constructor takes the self-loop weight `c`.
    pub fn takes_self_loop(self) -> bool {
        matches!(
            self,
            GraphCtor::SymNorm | GraphCtor::RwNorm | GraphCtor::PrunedNorm
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphDef {
    pub name: String,
    pub ctor: GraphCtor,
    pub self_loop: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub target: String,
    pub value: Expr,
    pub span: Span,
}

/// `step k in from..to { ... }`, both bounds inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct StepBlock {
    pub var: String,
    pub from: Expr,
    pub to: Expr,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    MatMul,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::MatMul => "@",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div | BinOp::MatMul => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Spmm,
    Relu,
    Elu,
    Tanh,
    Sigmoid,
    SoftmaxRows,
    Pow,
    SumRows,
    AttnAgg,
    Concat,
}

impl Func {
    pub const ALL: [Func; 10] = [
        Func::Spmm,
        Func::Relu,
        Func::Elu,
        Func::Tanh,
        Func::Sigmoid,
        Func::SoftmaxRows,
        Func::Pow,
        Func::SumRows,
        Func::AttnAgg,
        Func::Concat,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            Func::Spmm => "spmm",
            Func::Relu => "relu",
            Func::Elu => "elu",
            Func::Tanh => "tanh",
            Func::Sigmoid => "sigmoid",
            Func::SoftmaxRows => "softmax_rows",
            Func::Pow => "pow",
            Func::SumRows => "sum_rows",
            Func::AttnAgg => "attn_agg",
            Func::Concat => "concat",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Func> {
        Self::ALL.into_iter().find(|f| f.keyword() == word)
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Spmm | Func::Pow | Func::Concat => 2,
            Func::AttnAgg => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    /// Literals are never negative; `-2` parses as `Neg(Num(2))`.
    Num(f64),
    Var(String),
    Index(String, Box<Expr>),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Expr {
        Expr { kind, span }
    }

    pub fn num(value: f64) -> Expr {
        Expr::new(ExprKind::Num(value), Span::default())
    }
}

impl PropProgram {
    pub fn const_def(&self, name: &str) -> Option<&ConstDef> {
        self.consts.iter().find(|c| c.name == name)
    }

    /// Replaces the value of an existing constant.
    pub fn set_const(&mut self, name: &str, value: f64) -> Result<(), super::DslError> {
        match self.consts.iter_mut().find(|c| c.name == name) {
            Some(c) => {
                c.value = if value < 0.0 {
                    Expr::new(ExprKind::Neg(Box::new(Expr::num(-value))), c.span)
                } else {
                    Expr::num(value)
                };
                Ok(())
            }
            None => Err(super::DslError::UndeclaredIdentifier {
                name: name.to_string(),
                span: Span::default(),
            }),
        }
    }
}
