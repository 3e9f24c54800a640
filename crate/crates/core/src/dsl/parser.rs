//! Recursive-descent parser for the component expression language.
//!
//! ```text
//! field     = component { ( ";" | newline ) component } ;
//! component = sum ;
//! sum       = product { ( "+" | "-" ) product } ;
//! product   = unary { ( "*" | "/" ) unary } ;
//! unary     = "-" unary | power ;
//! power     = atom [ "^" integer ] ;
//! atom      = number | variable | function "(" sum ")" | "(" sum ")" ;
//! variable  = "x" integer ;            (* x1 ... xn *)
//! function  = "sin" | "cos" | "exp" | "tanh" | "sqrt" ;
//! ```
//!
//! Empty components (blank lines, a trailing `;`) are skipped.

use thiserror::Error;

use super::expr::{BinaryOp, Expr, UnaryOp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("expected {expected} components, found {found}")]
    ComponentCount { expected: usize, found: usize },
    #[error("variable {name} at line {line}, column {column} exceeds dimension {dimension}")]
    VariableOutOfRange {
        name: String,
        dimension: usize,
        line: usize,
        column: usize,
    },
    #[error("exponent at line {line}, column {column} must be a non-negative integer literal, found `{found}`")]
    NonIntegerExponent {
        found: String,
        line: usize,
        column: usize,
    },
    #[error("dimension must be positive")]
    ZeroDimension,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(String),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Sep,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Number(s) | Tok::Ident(s) => format!("`{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Sep => "component separator".into(),
            Tok::End => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    offset: usize,
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |p| offset - p - 1) + 1;
    (line, column)
}

fn syntax(src: &str, offset: usize, message: impl Into<String>) -> ParseError {
    let (line, column) = line_col(src, offset);
    ParseError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = match c {
            b' ' | b'\t' | b'\r' => {
                i += 1;
                continue;
            }
            b'\n' | b';' => Some(Tok::Sep),
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned { tok, offset: start });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            if text.parse::<f64>().is_err() {
                return Err(syntax(src, start, format!("malformed number `{text}`")));
            }
            out.push(Spanned {
                tok: Tok::Number(text.to_string()),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() {
            while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Spanned {
                tok: Tok::Ident(src[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        let ch = src[start..].chars().next().unwrap_or('?');
        return Err(syntax(src, start, format!("unexpected character `{ch}`")));
    }
    out.push(Spanned {
        tok: Tok::End,
        offset: src.len(),
    });
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Spanned>,
    pos: usize,
    dimension: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].offset
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        syntax(
            self.src,
            self.offset(),
            format!("expected {wanted}, found {}", self.peek().describe()),
        )
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let offset = self.offset();
        let (line, column) = line_col(self.src, offset);
        match self.peek().clone() {
            Tok::Number(text) if text.bytes().all(|b| b.is_ascii_digit()) => {
                self.bump();
                let exponent = text.parse::<u32>().map_err(|_| {
                    syntax(self.src, offset, format!("exponent `{text}` is too large"))
                })?;
                Ok(Expr::Pow(Box::new(base), exponent))
            }
            Tok::End | Tok::Sep => Err(self.unexpected("an exponent")),
            other => {
                let found = match other {
                    Tok::Number(s) | Tok::Ident(s) => s,
                    t => t.describe().trim_matches('`').to_string(),
                };
                Err(ParseError::NonIntegerExponent {
                    found,
                    line,
                    column,
                })
            }
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Number(text) => {
                self.bump();
                // lexer already validated the literal
                Ok(Expr::Const(text.parse().unwrap_or(f64::NAN)))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(op) = UnaryOp::from_function_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(self.unexpected(&format!("`(` after `{name}`")));
                    }
                    self.bump();
                    let arg = self.sum()?;
                    self.expect_rparen()?;
                    return Ok(Expr::Unary(op, Box::new(arg)));
                }
                self.variable(&name, offset)
            }
            _ => Err(self.unexpected("an operand")),
        }
    }

    fn variable(&self, name: &str, offset: usize) -> Result<Expr, ParseError> {
        let index = name
            .strip_prefix('x')
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|d| d.parse::<usize>().ok());
        match index {
            Some(i) if i >= 1 && i <= self.dimension => Ok(Expr::Var(i - 1)),
            Some(_) => {
                let (line, column) = line_col(self.src, offset);
                Err(ParseError::VariableOutOfRange {
                    name: name.to_string(),
                    dimension: self.dimension,
                    line,
                    column,
                })
            }
            None => Err(syntax(
                self.src,
                offset,
                format!("unknown identifier `{name}`"),
            )),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected("`)`"))
        }
    }
}

fn parse_all(source: &str, dimension: usize) -> Result<Vec<Expr>, ParseError> {
    if dimension == 0 {
        return Err(ParseError::ZeroDimension);
    }
    let toks = lex(source)?;
    let mut parser = Parser {
        src: source,
        toks,
        pos: 0,
        dimension,
    };
    let mut components = Vec::new();
    loop {
        while *parser.peek() == Tok::Sep {
            parser.bump();
        }
        if *parser.peek() == Tok::End {
            return Ok(components);
        }
        components.push(parser.sum()?);
        match parser.peek() {
            Tok::Sep | Tok::End => {}
            _ => return Err(parser.unexpected("an operator or component separator")),
        }
    }
}

/// Parses a field source into its component expressions, checking the
/// component count and every variable index against `dimension`.
pub fn parse_components(source: &str, dimension: usize) -> Result<Vec<Expr>, ParseError> {
    let components = parse_all(source, dimension)?;
    if components.len() != dimension {
        return Err(ParseError::ComponentCount {
            expected: dimension,
            found: components.len(),
        });
    }
    Ok(components)
}

/// Parses a single expression over variables `x1..x{dimension}`.
pub fn parse_expr(source: &str, dimension: usize) -> Result<Expr, ParseError> {
    let mut components = parse_all(source, dimension)?;
    if components.len() != 1 {
        return Err(ParseError::ComponentCount {
            expected: 1,
            found: components.len(),
        });
    }
    Ok(components.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_field() {
        let c = parse_components("x2; -x1", 2).unwrap();
        assert_eq!(c[0], Expr::Var(1));
        assert_eq!(c[1], Expr::Unary(UnaryOp::Neg, Box::new(Expr::Var(0))));
    }

    #[test]
    fn affine_one_dimensional() {
        let c = parse_components("1 - x1", 1).unwrap();
        assert_eq!(
            c[0],
            Expr::Binary(
                BinaryOp::Sub,
                Box::new(Expr::Const(1.0)),
                Box::new(Expr::Var(0))
            )
        );
    }

    #[test]
    fn trailing_operator_is_a_syntax_error() {
        let err = parse_components("x1 +", 1).unwrap_err();
        assert!(
            matches!(
                err,
                ParseError::Syntax {
                    line: 1,
                    column: 5,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn newline_separates_components() {
        let c = parse_components("x1*x2\n  sin(x1)\n", 2).unwrap();
        assert_eq!(c.len(), 2);
        let err = parse_components("x1\nx2 +* 1", 2).unwrap_err();
        assert!(
            matches!(
                err,
                ParseError::Syntax {
                    line: 2,
                    column: 5,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn component_count_is_checked() {
        assert_eq!(
            parse_components("x1; x2; 1", 2).unwrap_err(),
            ParseError::ComponentCount {
                expected: 2,
                found: 3
            }
        );
    }

    #[test]
    fn variable_beyond_dimension() {
        let err = parse_components("x1; x3", 2).unwrap_err();
        assert!(matches!(
            err,
            ParseError::VariableOutOfRange { dimension: 2, .. }
        ));
        assert!(matches!(
            parse_components("x0", 1).unwrap_err(),
            ParseError::VariableOutOfRange { .. }
        ));
    }

    #[test]
    fn exponent_must_be_integer_literal() {
        for src in ["x1^2.5", "x1^x1", "x1^-1", "x1^(2)"] {
            assert!(
                matches!(
                    parse_components(src, 1).unwrap_err(),
                    ParseError::NonIntegerExponent { .. }
                ),
                "{src}"
            );
        }
        assert_eq!(
            parse_components("x1^3", 1).unwrap()[0],
            Expr::Pow(Box::new(Expr::Var(0)), 3)
        );
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let e = &parse_components("-x1^2", 1).unwrap()[0];
        assert_eq!(e.eval(&[3.0]).unwrap(), -9.0);
    }

    #[test]
    fn scientific_literals() {
        let e = &parse_components("1.5e-3 * x1 + 2E2", 1).unwrap()[0];
        assert!((e.eval(&[2.0]).unwrap() - 200.003).abs() < 1e-12);
    }

    #[test]
    fn unknown_identifiers_and_characters() {
        assert!(matches!(
            parse_components("y1", 1).unwrap_err(),
            ParseError::Syntax { .. }
        ));
        assert!(matches!(
            parse_components("x1 % 2", 1).unwrap_err(),
            ParseError::Syntax { .. }
        ));
        assert!(matches!(
            parse_components("sin x1", 1).unwrap_err(),
            ParseError::Syntax { .. }
        ));
        assert!(matches!(
            parse_components("(x1", 1).unwrap_err(),
            ParseError::Syntax { .. }
        ));
    }
}
