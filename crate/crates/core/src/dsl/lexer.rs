use super::ast::Span;
use super::DslError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Num(f64),
    Sym(&'static str),
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

const SYMBOLS: [&str; 15] = [
    "..", "{", "}", "(", ")", "[", "]", ";", ":", ",", "=", "+", "-", "*", "/",
];

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, DslError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let bump = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };

    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        if c.is_whitespace() {
            bump(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                {
                    let ch = chars[i];
                    bump(&mut i, &mut line, &mut col, ch);
                }
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                {
                    let ch = chars[i];
                    bump(&mut i, &mut line, &mut col, ch);
                }
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                span,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let digits = |i: &mut usize, line: &mut usize, col: &mut usize| {
                while *i < chars.len() && chars[*i].is_ascii_digit() {
                    bump(i, line, col, chars[*i]);
                }
            };
            digits(&mut i, &mut line, &mut col);
            // `1..K` is a range, not a decimal point
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                bump(&mut i, &mut line, &mut col, '.');
                digits(&mut i, &mut line, &mut col);
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while i < j {
                        {
                            let ch = chars[i];
                            bump(&mut i, &mut line, &mut col, ch);
                        }
                    }
                    digits(&mut i, &mut line, &mut col);
                }
            }
            let lexeme: String = chars[start..i].iter().collect();
            let value: f64 = lexeme
                .parse()
                .map_err(|_| DslError::syntax(span, format!("bad number {lexeme:?}")))?;
            if !value.is_finite() {
                return Err(DslError::syntax(span, format!("number {lexeme} overflows")));
            }
            out.push(Token {
                tok: Tok::Num(value),
                span,
            });
            continue;
        }
        if c == '@' {
            bump(&mut i, &mut line, &mut col, c);
            out.push(Token {
                tok: Tok::Sym("@"),
                span,
            });
            continue;
        }
        let matched = SYMBOLS.iter().find(|s| {
            let s: Vec<char> = s.chars().collect();
            chars[i..].starts_with(&s)
        });
        match matched {
            Some(sym) => {
                for ch in sym.chars() {
                    bump(&mut i, &mut line, &mut col, ch);
                }
                out.push(Token {
                    tok: Tok::Sym(sym),
                    span,
                });
            }
            None => {
                return Err(DslError::syntax(
                    span,
                    format!("unexpected character {c:?}"),
                ))
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span { line, col },
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn range_is_not_a_decimal() {
        assert_eq!(
            toks("1..K"),
            vec![
                Tok::Num(1.0),
                Tok::Sym(".."),
                Tok::Ident("K".into()),
                Tok::Eof
            ]
        );
        assert_eq!(
            toks("0.15 1e-10 2.5E3"),
            vec![Tok::Num(0.15), Tok::Num(1e-10), Tok::Num(2500.0), Tok::Eof]
        );
    }

    #[test]
    fn comments_and_positions() {
        let t = tokenize("# note\n  x @ W").unwrap();
        assert_eq!((t[0].span.line, t[0].span.col), (2, 3));
        assert_eq!((t[1].span.line, t[1].span.col), (2, 5));
        assert_eq!(t[1].tok, Tok::Sym("@"));
    }

    #[test]
    fn rejects_stray_character() {
        let err = tokenize("x = $;").unwrap_err();
        assert!(err.to_string().contains("1:5"), "{err}");
    }
}
