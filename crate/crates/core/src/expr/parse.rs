//! Infix mini-grammar for expressions.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | ident ('[' int ']')? | func '(' args ')' | '(' expr ')'
//! ```
//!
//! Identifiers: `x`, `x1`, `x2` (optionally indexed, `x[1]`), `r`, `t`, and
//! the constants `e` and `pi`. Functions: `exp`, `ln` (alias `log`),
//! `pow(a, b)`, `ind(h)` (one where `h = 0`), `eq(a, b)` (`ind(a - b)`) and
//! `ne(a, b)` (`1 - ind(a - b)`).

use crate::error::{DualityError, Result};
use crate::scalar::Scalar;

use super::{Expr, Var};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer { src, toks: Vec::new() };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text
                    .parse()
                    .map_err(|_| error_at(src, start, format!("malformed number '{text}'")))?;
                lx.toks.push((Tok::Num(value), start));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(src[start..i].to_string()), start));
            } else if "+-*/^()[],".contains(c) {
                lx.toks.push((Tok::Op(c), i));
                i += 1;
            } else {
                return Err(error_at(src, i, format!("unexpected character '{c}'")));
            }
        }
        lx.toks.push((Tok::End, lx.src.len()));
        Ok(lx.toks)
    }
}

/// Converts a byte offset into a 1-based line/column parse error.
fn error_at(src: &str, offset: usize, message: String) -> DualityError {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    DualityError::Parse {
        line,
        column,
        message,
    }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

pub fn parse_expr<S: Scalar>(src: &str) -> Result<Expr<S>> {
    let toks = Lexer::run(src)?;
    let mut p = Parser { src, toks, pos: 0 };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        t => Err(p.err(format!("unexpected token {t:?} after expression"))),
    }
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, message: String) -> DualityError {
        error_at(self.src, self.toks[self.pos].1, message)
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.peek() == &Tok::Op(op) {
            self.next();
            Ok(())
        } else {
            Err(self.err(format!("expected '{op}'")))
        }
    }

    fn expr<S: Scalar>(&mut self) -> Result<Expr<S>> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.next();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Op('-') => {
                    self.next();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term<S: Scalar>(&mut self) -> Result<Expr<S>> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.next();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Op('/') => {
                    self.next();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary<S: Scalar>(&mut self) -> Result<Expr<S>> {
        if self.peek() == &Tok::Op('-') {
            self.next();
            return Ok(match self.unary::<S>()? {
                Expr::Const(c) => Expr::Const(-c),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.power()
    }

    fn power<S: Scalar>(&mut self) -> Result<Expr<S>> {
        let base = self.primary()?;
        if self.peek() == &Tok::Op('^') {
            self.next();
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn index(&mut self) -> Result<usize> {
        if self.peek() != &Tok::Op('[') {
            return Ok(0);
        }
        self.next();
        let i = match self.next() {
            Tok::Num(v) if v >= 0.0 && v.fract() == 0.0 => v as usize,
            _ => return Err(self.err("expected a non-negative integer index".into())),
        };
        self.expect(']')?;
        Ok(i)
    }

    fn args<S: Scalar>(&mut self, name: &str, count: usize) -> Result<Vec<Expr<S>>> {
        self.expect('(')?;
        let mut out = vec![self.expr()?];
        while self.peek() == &Tok::Op(',') {
            self.next();
            out.push(self.expr()?);
        }
        self.expect(')')?;
        if out.len() != count {
            return Err(self.err(format!(
                "{name} takes {count} argument(s), got {}",
                out.len()
            )));
        }
        Ok(out)
    }

    fn primary<S: Scalar>(&mut self) -> Result<Expr<S>> {
        let at = self.pos;
        match self.next() {
            Tok::Num(v) => S::from_f64(v)
                .map(Expr::Const)
                .ok_or_else(|| self.err(format!("number {v} not representable"))),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let unary = |e: Expr<S>, f: fn(Box<Expr<S>>) -> Expr<S>| f(Box::new(e));
                match name.as_str() {
                    "x" => Ok(Expr::Var(Var::X(self.index()?))),
                    "x1" => Ok(Expr::Var(Var::X1(self.index()?))),
                    "x2" => Ok(Expr::Var(Var::X2(self.index()?))),
                    "r" => Ok(Expr::Var(Var::R)),
                    "t" => Ok(Expr::Var(Var::T)),
                    "e" => Ok(Expr::Const(S::E())),
                    "pi" => Ok(Expr::Const(S::PI())),
                    "exp" => {
                        let a = self.args(&name, 1)?;
                        Ok(unary(a.into_iter().next().unwrap(), Expr::Exp))
                    }
                    "ln" | "log" => {
                        let a = self.args(&name, 1)?;
                        Ok(unary(a.into_iter().next().unwrap(), Expr::Ln))
                    }
                    "ind" => {
                        let a = self.args(&name, 1)?;
                        Ok(unary(a.into_iter().next().unwrap(), Expr::Ind))
                    }
                    "pow" | "eq" | "ne" => {
                        let mut a = self.args(&name, 2)?.into_iter();
                        let (lhs, rhs) = (a.next().unwrap(), a.next().unwrap());
                        Ok(match name.as_str() {
                            "pow" => Expr::Pow(Box::new(lhs), Box::new(rhs)),
                            "eq" => Expr::Ind(Box::new(Expr::Sub(Box::new(lhs), Box::new(rhs)))),
                            _ => Expr::Sub(
                                Box::new(Expr::one()),
                                Box::new(Expr::Ind(Box::new(Expr::Sub(
                                    Box::new(lhs),
                                    Box::new(rhs),
                                )))),
                            ),
                        })
                    }
                    _ => {
                        self.pos = at;
                        Err(self.err(format!("unknown identifier '{name}'")))
                    }
                }
            }
            t => {
                self.pos = at;
                Err(self.err(format!("unexpected token {t:?}")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Env;

    fn eval(src: &str, x: f64) -> f64 {
        parse_expr::<f64>(src)
            .unwrap()
            .eval(&Env::single(&[x]).with_r(Some(2.0)))
            .unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(eval("2 ^ 3 ^ 2", 0.0), 512.0);
        assert_eq!(eval("-x ^ 2", 3.0), -9.0);
        assert_eq!(eval("8 / 4 / 2", 0.0), 1.0);
        assert_eq!(eval("10 - 3 - 2", 0.0), 5.0);
        assert_eq!(eval("x ^ -1", 4.0), 0.25);
    }

    #[test]
    fn functions_and_constants() {
        assert_eq!(eval("ln(e)", 0.0), 1.0);
        assert_eq!(eval("eq(x, 2)", 2.0), 1.0);
        assert_eq!(eval("ne(x, 2)", 2.0), 0.0);
        assert_eq!(eval("pow(x, r)", 3.0), 9.0);
        assert!((eval("exp(-r * x)", 0.5) - (-1.0f64).exp()).abs() < 1e-16);
        assert_eq!(eval("1.5e2", 0.0), 150.0);
    }

    #[test]
    fn errors_carry_positions() {
        match parse_expr::<f64>("x +\n  * 2") {
            Err(DualityError::Parse { line, column, .. }) => {
                assert_eq!((line, column), (2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_expr::<f64>("foo(x)"),
            Err(DualityError::Parse { column: 1, .. })
        ));
        assert!(parse_expr::<f64>("exp(x, 2)").is_err());
        assert!(parse_expr::<f64>("(x").is_err());
        assert!(parse_expr::<f64>("x $ 2").is_err());
    }
}
