//! Parser for the prefix expression grammar over `+ * ^ exp2 x y z` and
//! numeric literals.
//!
//! Literals are decimal numbers; a fraction form `a/b` is accepted as a
//! literal so that coefficients like `1/3` can be written exactly as printed.
//! Whitespace is insignificant.

use super::{Poly3, ScalarField};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' {
            tokens.push((i, Token::Open));
            i += 1;
        } else if c == ')' {
            tokens.push((i, Token::Close));
            i += 1;
        } else {
            let start = i;
            while i < bytes.len() {
                let c = bytes[i] as char;
                if c.is_whitespace() || c == '(' || c == ')' {
                    break;
                }
                i += 1;
            }
            tokens.push((start, Token::Atom(text[start..i].to_string())));
        }
    }
    Ok(tokens)
}

fn parse_number(atom: &str) -> Option<f64> {
    if let Some((num, den)) = atom.split_once('/') {
        let n: f64 = num.parse().ok()?;
        let d: f64 = den.parse().ok()?;
        if d == 0.0 {
            return None;
        }
        return Some(n / d);
    }
    atom.parse().ok()
}

struct Parser<'a> {
    tokens: &'a [(usize, Token)],
    pos: usize,
    len: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, pos: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<&(usize, Token)> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&(usize, Token)> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<ScalarField> {
        let (pos, token) = match self.next() {
            Some(t) => (t.0, t.1.clone()),
            None => return Err(self.err(self.len, "unexpected end of input")),
        };
        match token {
            Token::Close => Err(self.err(pos, "unexpected ')'")),
            Token::Atom(a) => match a.as_str() {
                "x" => Ok(ScalarField::poly(Poly3::variable(super::Axis::X))),
                "y" => Ok(ScalarField::poly(Poly3::variable(super::Axis::Y))),
                "z" => Ok(ScalarField::poly(Poly3::variable(super::Axis::Z))),
                _ => match parse_number(&a) {
                    Some(v) if v.is_finite() => Ok(ScalarField::constant(v)),
                    _ => Err(self.err(pos, format!("expected number or variable, got '{a}'"))),
                },
            },
            Token::Open => {
                let (hpos, head) = match self.next() {
                    Some((p, Token::Atom(a))) => (*p, a.clone()),
                    Some((p, _)) => {
                        let p = *p;
                        return Err(self.err(p, "expected operator after '('"));
                    }
                    None => return Err(self.err(self.len, "unexpected end of input")),
                };
                match head.as_str() {
                    "+" | "*" => {
                        let mut args = Vec::new();
                        loop {
                            match self.peek() {
                                Some((_, Token::Close)) => {
                                    self.pos += 1;
                                    break;
                                }
                                Some(_) => args.push(self.expr()?),
                                None => {
                                    return Err(self.err(self.len, "missing ')'"));
                                }
                            }
                        }
                        if args.is_empty() {
                            return Err(self.err(hpos, format!("'{head}' needs arguments")));
                        }
                        Ok(if head == "+" {
                            ScalarField::sum(args)
                        } else {
                            ScalarField::product(args)
                        })
                    }
                    "^" => {
                        let base = self.expr()?;
                        let (epos, exp_tok) = match self.next() {
                            Some((p, Token::Atom(a))) => (*p, a.clone()),
                            Some((p, _)) => {
                                let p = *p;
                                return Err(self.err(p, "expected integer exponent"));
                            }
                            None => return Err(self.err(self.len, "unexpected end of input")),
                        };
                        let exp: u32 = exp_tok.parse().map_err(|_| {
                            self.err(epos, "exponent must be a non-negative integer")
                        })?;
                        self.expect_close()?;
                        let p = base
                            .as_poly()
                            .ok_or_else(|| self.err(hpos, "'^' base must be polynomial"))?;
                        let mut acc = Poly3::constant(1.0);
                        for _ in 0..exp {
                            acc = &acc * &p;
                        }
                        Ok(ScalarField::poly(acc))
                    }
                    "exp2" => {
                        let arg = self.expr()?;
                        self.expect_close()?;
                        let p = arg
                            .as_poly()
                            .ok_or_else(|| self.err(hpos, "exp2 argument must be polynomial"))?;
                        Ok(ScalarField::exp2(p))
                    }
                    other => Err(self.err(hpos, format!("unknown operator '{other}'"))),
                }
            }
        }
    }

    fn expect_close(&mut self) -> Result<()> {
        match self.next() {
            Some((_, Token::Close)) => Ok(()),
            Some((p, _)) => {
                let p = *p;
                Err(self.err(p, "expected ')'"))
            }
            None => Err(self.err(self.len, "missing ')'")),
        }
    }
}

/// Parses an expression in the prefix grammar into a normalized field.
pub fn parse(text: &str) -> Result<ScalarField> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        len: text.len(),
    };
    let field = parser.expr()?;
    if let Some((p, _)) = parser.peek() {
        return Err(Error::Parse {
            pos: *p,
            msg: "trailing input after expression".into(),
        });
    }
    Ok(field.normalize())
}
