use std::fmt::Write;

use super::ast::*;

/// Canonical text: fixed section order, one statement per line, two-space
/// indent. Comments are not preserved.
pub fn print(prog: &PropProgram) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mechanism {} {{", prog.name);

    section(&mut s, "consts", &prog.consts, |c| {
        format!("{} = {};", c.name, expr(&c.value))
    });
    section(&mut s, "params", &prog.params, |p| {
        let layer = p
            .layer_var
            .as_ref()
            .map(|v| format!("[{v}]"))
            .unwrap_or_default();
        format!(
            "{}{}: {} = {};",
            p.name,
            layer,
            shape(p.shape),
            init(&p.init)
        )
    });
    section(&mut s, "graph", &prog.graph_defs, |g| {
        let arg = g
            .self_loop
            .as_ref()
            .map(|c| format!("c = {}", expr(c)))
            .unwrap_or_default();
        format!("{} = {}({});", g.name, g.ctor.keyword(), arg)
    });
    section(&mut s, "init", &prog.init, stmt);
    if let Some(step) = &prog.step {
        let _ = writeln!(
            s,
            "  step {} in {}..{} {{",
            step.var,
            expr(&step.from),
            expr(&step.to)
        );
        for st in &step.body {
            let _ = writeln!(s, "    {}", stmt(st));
        }
        s.push_str("  }\n");
    }
    section(&mut s, "final", &prog.final_block, stmt);
    let _ = writeln!(s, "  out {{");
    for st in &prog.out {
        let _ = writeln!(s, "    {}", stmt(st));
    }
    s.push_str("  }\n}\n");
    s
}

fn section<T>(s: &mut String, name: &str, items: &[T], line: impl Fn(&T) -> String) {
    if items.is_empty() {
        return;
    }
    let _ = writeln!(s, "  {name} {{");
    for item in items {
        let _ = writeln!(s, "    {}", line(item));
    }
    s.push_str("  }\n");
}

fn stmt(st: &Stmt) -> String {
    format!("{} = {};", st.target, expr(&st.value))
}

fn dim(d: Dim) -> String {
    match d {
        Dim::N => "n".into(),
        Dim::F => "f".into(),
        Dim::H => "h".into(),
        Dim::C => "c".into(),
        Dim::Lit(k) => k.to_string(),
    }
}

fn shape(sh: ParamShape) -> String {
    match sh {
        ParamShape::Scalar => "scalar".into(),
        ParamShape::Vector(d) => format!("vector({})", dim(d)),
        ParamShape::Matrix(a, b) => format!("matrix({}, {})", dim(a), dim(b)),
    }
}

fn init(i: &InitSpec) -> String {
    match i {
        InitSpec::Glorot => "glorot".into(),
        InitSpec::Normal => "normal".into(),
        InitSpec::Zeros => "zeros".into(),
        InitSpec::Ones => "ones".into(),
        InitSpec::Const(e) => format!("const({})", expr(e)),
    }
}

/// Shortest text that parses back to exactly `v`.
pub(crate) fn number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

const PREC_UNARY: u8 = 3;
const PREC_ATOM: u8 = 4;

fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Bin(op, _, _) => op.precedence(),
        ExprKind::Neg(_) => PREC_UNARY,
        _ => PREC_ATOM,
    }
}

pub(crate) fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Num(v) => number(*v),
        ExprKind::Var(name) => name.clone(),
        ExprKind::Index(name, idx) => format!("{name}[{}]", expr(idx)),
        ExprKind::Neg(inner) => {
            if precedence(inner) < PREC_UNARY {
                format!("-({})", expr(inner))
            } else {
                format!("-{}", expr(inner))
            }
        }
        ExprKind::Bin(op, l, r) => {
            let p = op.precedence();
            let ls = if precedence(l) < p {
                format!("({})", expr(l))
            } else {
                expr(l)
            };
            let rs = if precedence(r) <= p {
                format!("({})", expr(r))
            } else {
                expr(r)
            };
            format!("{ls} {} {rs}", op.symbol())
        }
        ExprKind::Call(f, args) => {
            let args: Vec<String> = args.iter().map(expr).collect();
            format!("{}({})", f.keyword(), args.join(", "))
        }
    }
}
