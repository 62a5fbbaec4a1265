use super::ast::*;
use super::eval::const_values;
use super::lexer::{tokenize, Tok, Token};
use super::DslError;

/// Largest permitted layer count.
pub const MAX_K: usize = 16;

const SECTIONS: [&str; 7] = ["consts", "params", "graph", "init", "step", "final", "out"];

/// Parses program text. Also validates that `K` is declared and in range.
pub fn parse(text: &str) -> Result<PropProgram, DslError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let prog = p.program()?;
    validate_k(&prog)?;
    Ok(prog)
}

fn validate_k(prog: &PropProgram) -> Result<(), DslError> {
    let def = prog.const_def("K").ok_or(DslError::MissingK)?;
    let values = const_values(prog)?;
    let k = values["K"];
    if k.fract() != 0.0 || k < 1.0 || k > MAX_K as f64 {
        return Err(DslError::KOutOfRange {
            value: k,
            max: MAX_K,
            span: def.span,
        });
    }
    Ok(())
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        &self.tokens[(self.pos + ahead).min(self.tokens.len() - 1)].tok
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at_sym(&self, sym: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(s) if *s == sym)
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if self.at_sym(sym) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<Span, DslError> {
        let t = self.next();
        match t.tok {
            Tok::Sym(s) if s == sym => Ok(t.span),
            other => Err(DslError::syntax(
                t.span,
                format!("expected `{sym}`, found {other}"),
            )),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), DslError> {
        let t = self.next();
        match t.tok {
            Tok::Ident(s) => Ok((s, t.span)),
            other => Err(DslError::syntax(
                t.span,
                format!("expected {what}, found {other}"),
            )),
        }
    }

    fn keyword(&mut self, word: &str) -> Result<Span, DslError> {
        let (got, span) = self.ident(&format!("`{word}`"))?;
        if got != word {
            return Err(DslError::syntax(
                span,
                format!("expected `{word}`, found `{got}`"),
            ));
        }
        Ok(span)
    }

    fn program(&mut self) -> Result<PropProgram, DslError> {
        self.keyword("mechanism")?;
        let (mut name, _) = self.ident("mechanism name")?;
        // hyphenated names such as `cora-appnp-residual`
        while self.at_sym("-") && matches!(self.peek_at(1), Tok::Ident(_)) {
            self.next();
            let (part, _) = self.ident("name")?;
            name.push('-');
            name.push_str(&part);
        }
        self.expect_sym("{")?;
        let mut prog = PropProgram {
            name,
            consts: Vec::new(),
            params: Vec::new(),
            graph_defs: Vec::new(),
            init: Vec::new(),
            step: None,
            final_block: Vec::new(),
            out: Vec::new(),
        };
        let mut seen: Vec<&'static str> = Vec::new();
        while !self.at_sym("}") {
            let t = self.next();
            let word = match t.tok {
                Tok::Ident(w) => w,
                Tok::Eof => {
                    return Err(DslError::syntax(
                        t.span,
                        "unexpected end of input, expected `}`",
                    ))
                }
                other => {
                    return Err(DslError::syntax(
                        t.span,
                        format!("expected a section keyword, found {other}"),
                    ))
                }
            };
            let Some(&section) = SECTIONS.iter().find(|s| **s == word) else {
                return Err(DslError::UnknownKeyword { word, span: t.span });
            };
            if seen.contains(&section) {
                return Err(DslError::syntax(
                    t.span,
                    format!("duplicate `{section}` section"),
                ));
            }
            seen.push(section);
            match section {
                "consts" => prog.consts = self.consts()?,
                "params" => prog.params = self.params()?,
                "graph" => prog.graph_defs = self.graph_defs()?,
                "init" => prog.init = self.block()?,
                "step" => prog.step = Some(self.step(t.span)?),
                "final" => prog.final_block = self.block()?,
                _ => prog.out = self.block()?,
            }
        }
        self.expect_sym("}")?;
        let t = self.next();
        if t.tok != Tok::Eof {
            return Err(DslError::syntax(
                t.span,
                format!("unexpected {} after the closing `}}`", t.tok),
            ));
        }
        Ok(prog)
    }

    fn consts(&mut self) -> Result<Vec<ConstDef>, DslError> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.eat_sym("}") {
            let (name, span) = self.ident("constant name")?;
            self.expect_sym("=")?;
            let value = self.expr()?;
            self.expect_sym(";")?;
            out.push(ConstDef { name, value, span });
        }
        Ok(out)
    }

    fn dim(&mut self) -> Result<Dim, DslError> {
        let t = self.next();
        match t.tok {
            Tok::Ident(s) => match s.as_str() {
                "n" => Ok(Dim::N),
                "f" => Ok(Dim::F),
                "h" => Ok(Dim::H),
                "c" => Ok(Dim::C),
                _ => Err(DslError::syntax(
                    t.span,
                    format!("unknown dimension `{s}` (use n, f, h, c or an integer)"),
                )),
            },
            Tok::Num(v) if v.fract() == 0.0 && v >= 1.0 => Ok(Dim::Lit(v as usize)),
            other => Err(DslError::syntax(
                t.span,
                format!("expected a dimension, found {other}"),
            )),
        }
    }

    fn params(&mut self) -> Result<Vec<ParamDecl>, DslError> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.eat_sym("}") {
            let (name, span) = self.ident("parameter name")?;
            let layer_var = if self.eat_sym("[") {
                let (v, _) = self.ident("layer index name")?;
                self.expect_sym("]")?;
                Some(v)
            } else {
                None
            };
            self.expect_sym(":")?;
            let (kind, kspan) = self.ident("parameter shape")?;
            let shape = match kind.as_str() {
                "scalar" => ParamShape::Scalar,
                "vector" => {
                    self.expect_sym("(")?;
                    let d = self.dim()?;
                    self.expect_sym(")")?;
                    ParamShape::Vector(d)
                }
                "matrix" => {
                    self.expect_sym("(")?;
                    let a = self.dim()?;
                    self.expect_sym(",")?;
                    let b = self.dim()?;
                    self.expect_sym(")")?;
                    ParamShape::Matrix(a, b)
                }
                _ => {
                    return Err(DslError::UnknownKeyword {
                        word: kind,
                        span: kspan,
                    })
                }
            };
            self.expect_sym("=")?;
            let (init_word, ispan) = self.ident("initializer")?;
            let init = match init_word.as_str() {
                "glorot" => InitSpec::Glorot,
                "normal" => InitSpec::Normal,
                "zeros" => InitSpec::Zeros,
                "ones" => InitSpec::Ones,
                "const" => {
                    self.expect_sym("(")?;
                    let e = self.expr()?;
                    self.expect_sym(")")?;
                    InitSpec::Const(e)
                }
                _ => {
                    return Err(DslError::UnknownKeyword {
                        word: init_word,
                        span: ispan,
                    })
                }
            };
            self.expect_sym(";")?;
            out.push(ParamDecl {
                name,
                layer_var,
                shape,
                init,
                span,
            });
        }
        Ok(out)
    }

    fn graph_defs(&mut self) -> Result<Vec<GraphDef>, DslError> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.eat_sym("}") {
            let (name, span) = self.ident("operator name")?;
            self.expect_sym("=")?;
            let (word, cspan) = self.ident("graph constructor")?;
            let ctor = GraphCtor::from_keyword(&word)
                .ok_or(DslError::UnknownKeyword { word, span: cspan })?;
            self.expect_sym("(")?;
            let self_loop = if ctor.takes_self_loop() {
                let (arg, aspan) = self.ident("`c`")?;
                if arg != "c" {
                    return Err(DslError::syntax(
                        aspan,
                        format!("{} takes only `c`, found `{arg}`", ctor.keyword()),
                    ));
                }
                self.expect_sym("=")?;
                Some(self.expr()?)
            } else {
                None
            };
            let close = self.next();
            if close.tok != Tok::Sym(")") {
                let msg = if ctor.takes_self_loop() {
                    format!("expected `)`, found {}", close.tok)
                } else {
                    format!("{}() takes no arguments", ctor.keyword())
                };
                return Err(DslError::syntax(close.span, msg));
            }
            self.expect_sym(";")?;
            out.push(GraphDef {
                name,
                ctor,
                self_loop,
                span,
            });
        }
        Ok(out)
    }

    fn step(&mut self, span: Span) -> Result<StepBlock, DslError> {
        let (var, _) = self.ident("loop variable")?;
        self.keyword("in")?;
        let from = self.expr()?;
        self.expect_sym("..")?;
        let to = self.expr()?;
        let body = self.block()?;
        Ok(StepBlock {
            var,
            from,
            to,
            body,
            span,
        })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, DslError> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        loop {
            if self.eat_sym("}") {
                return Ok(out);
            }
            if self.peek().tok == Tok::Eof {
                return Err(DslError::syntax(
                    self.peek().span,
                    "unexpected end of input, expected `}`",
                ));
            }
            let (target, span) = self.ident("assignment target")?;
            self.expect_sym("=")?;
            let value = self.expr()?;
            self.expect_sym(";")?;
            out.push(Stmt {
                target,
                value,
                span,
            });
        }
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.at_sym("+") {
                BinOp::Add
            } else if self.at_sym("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let span = self.next().span;
            let rhs = self.term()?;
            lhs = Expr::new(ExprKind::Bin(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.at_sym("*") {
                BinOp::Mul
            } else if self.at_sym("/") {
                BinOp::Div
            } else if self.at_sym("@") {
                BinOp::MatMul
            } else {
                return Ok(lhs);
            };
            let span = self.next().span;
            let rhs = self.unary()?;
            lhs = Expr::new(ExprKind::Bin(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if self.at_sym("-") {
            let span = self.next().span;
            let inner = self.unary()?;
            return Ok(Expr::new(ExprKind::Neg(Box::new(inner)), span));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        let t = self.next();
        let span = t.span;
        match t.tok {
            Tok::Num(v) => Ok(Expr::new(ExprKind::Num(v), span)),
            Tok::Sym("(") => {
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.at_sym("(") {
                    let func =
                        Func::from_keyword(&name).ok_or_else(|| DslError::UnknownKeyword {
                            word: name.clone(),
                            span,
                        })?;
                    self.next();
                    let mut args = Vec::new();
                    if !self.at_sym(")") {
                        args.push(self.expr()?);
                        while self.eat_sym(",") {
                            args.push(self.expr()?);
                        }
                    }
                    self.expect_sym(")")?;
                    if args.len() != func.arity() {
                        return Err(DslError::syntax(
                            span,
                            format!(
                                "{} takes {} arguments, got {}",
                                func.keyword(),
                                func.arity(),
                                args.len()
                            ),
                        ));
                    }
                    Ok(Expr::new(ExprKind::Call(func, args), span))
                } else if self.eat_sym("[") {
                    let idx = self.expr()?;
                    self.expect_sym("]")?;
                    Ok(Expr::new(ExprKind::Index(name, Box::new(idx)), span))
                } else {
                    Ok(Expr::new(ExprKind::Var(name), span))
                }
            }
            other => Err(DslError::syntax(
                span,
                format!("expected an expression, found {other}"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = "mechanism m { consts { K = 2; } out { Y = X; } }";

    #[test]
    fn precedence_and_associativity() {
        let p = parse("mechanism m { consts { K = 1; } out { Y = a - b - c * d @ e; } }").unwrap();
        let ExprKind::Bin(BinOp::Sub, lhs, rhs) = &p.out[0].value.kind else {
            panic!()
        };
        assert!(matches!(lhs.kind, ExprKind::Bin(BinOp::Sub, _, _)));
        // `*` and `@` share a level and associate left
        let ExprKind::Bin(BinOp::MatMul, inner, _) = &rhs.kind else {
            panic!()
        };
        assert!(matches!(inner.kind, ExprKind::Bin(BinOp::Mul, _, _)));
    }

    #[test]
    fn hyphenated_name_and_sections() {
        let p = parse(
            "mechanism a-b-c { consts { K = 3; } step k in 1..K - 1 { Z = Z; } out { Y = Z; } }",
        )
        .unwrap();
        assert_eq!(p.name, "a-b-c");
        assert_eq!(p.step.unwrap().var, "k");
        assert!(parse(MINI).is_ok());
    }

    #[test]
    fn k_rules() {
        assert_eq!(
            parse("mechanism m { out { Y = X; } }").unwrap_err(),
            DslError::MissingK
        );
        assert!(matches!(
            parse(&MINI.replace("K = 2", "K = 17")).unwrap_err(),
            DslError::KOutOfRange { .. }
        ));
        assert!(matches!(
            parse(&MINI.replace("K = 2", "K = 2.5")).unwrap_err(),
            DslError::KOutOfRange { .. }
        ));
        assert!(parse(&MINI.replace("K = 2", "L = 8; K = L * 2")).is_ok());
    }

    #[test]
    fn unbalanced_block_names_line() {
        let text = "mechanism m {\n  consts {\n    K = 1;\n  }\n  out {\n    Y = X;\n}\n";
        let err = parse(text).unwrap_err();
        assert!(
            matches!(err, DslError::Syntax { span, .. } if span.line == 8),
            "{err}"
        );
        assert!(err.to_string().contains("8:1"), "{err}");
    }

    #[test]
    fn unknown_keywords() {
        let err = parse("mechanism m { consts { K = 1; } loop { } }").unwrap_err();
        assert!(matches!(err, DslError::UnknownKeyword { ref word, .. } if word == "loop"));
        let err = parse("mechanism m { consts { K = 1; } out { Y = gelu(X); } }").unwrap_err();
        assert!(matches!(err, DslError::UnknownKeyword { ref word, .. } if word == "gelu"));
        let err = parse("mechanism m { consts { K = 1; } graph { B = cheb(); } out { Y = X; } }")
            .unwrap_err();
        assert!(matches!(err, DslError::UnknownKeyword { ref word, .. } if word == "cheb"));
    }

    #[test]
    fn ctor_arguments_checked() {
        assert!(parse(
            "mechanism m { consts { K = 1; } graph { B = laplacian(c = 1); } out { Y = X; } }"
        )
        .is_err());
        assert!(parse(
            "mechanism m { consts { K = 1; } graph { B = sym_norm(); } out { Y = X; } }"
        )
        .is_err());
        assert!(parse("mechanism m { consts { K = 1; } out { Y = pow(X); } }").is_err());
    }

    #[test]
    fn trailing_garbage_rejected() {
        assert!(parse(&format!("{MINI} }}")).is_err());
        assert!(parse("mechanism m { consts { K = 1; } consts { } out { Y = X; } }").is_err());
    }
}
