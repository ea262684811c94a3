use thiserror::Error;

use super::{Expr, UnaryFn};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("exponent at byte {pos} must be an integer literal")]
    NonIntegerExponent { pos: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { src, toks: Vec::new() };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                i = lx.number(i)?;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(src[start..i].to_string()), start));
            } else if "+-*/^(),".contains(c) {
                lx.toks.push((Tok::Op(c), i));
                i += 1;
            } else {
                return Err(ParseError::Syntax {
                    pos: i,
                    msg: format!("unexpected character `{c}`"),
                });
            }
        }
        lx.toks.push((Tok::End, src.len()));
        Ok(lx.toks)
    }

    fn number(&mut self, start: usize) -> Result<usize, ParseError> {
        let b = self.src.as_bytes();
        let mut i = start;
        let digits = |i: &mut usize| {
            let s = *i;
            while *i < b.len() && b[*i].is_ascii_digit() {
                *i += 1;
            }
            *i > s
        };
        let int_part = digits(&mut i);
        let mut frac_part = false;
        if i < b.len() && b[i] == b'.' {
            i += 1;
            frac_part = digits(&mut i);
        }
        if !int_part && !frac_part {
            return Err(ParseError::Syntax {
                pos: start,
                msg: "malformed number".into(),
            });
        }
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            let mut j = i + 1;
            if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                j += 1;
            }
            let s = j;
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            if j == s {
                return Err(ParseError::Syntax {
                    pos: i,
                    msg: "malformed exponent".into(),
                });
            }
            i = j;
        }
        let text = &self.src[start..i];
        let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
            pos: start,
            msg: format!("malformed number `{text}`"),
        })?;
        if !v.is_finite() {
            return Err(ParseError::Syntax {
                pos: start,
                msg: format!("literal `{text}` is not finite"),
            });
        }
        self.toks.push((Tok::Num(v, text.to_string()), start));
        Ok(i)
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    vars: &'a [String],
}

/// Parses `text` over the variables `vars` (variable `i` is `vars[i]`).
pub fn parse(text: &str, vars: &[String]) -> Result<Expr, ParseError> {
    let toks = Lexer::run(text)?;
    let mut p = Parser { toks, at: 0, vars };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        t => Err(p.syntax(format!("unexpected {}", describe(t)))),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(_, s) => format!("number `{s}`"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Op(c) => format!("`{c}`"),
        Tok::End => "end of input".into(),
    }
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.at + k).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn syntax(&self, msg: String) -> ParseError {
        ParseError::Syntax { pos: self.pos(), msg }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Op(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{c}`, found {}", describe(self.peek()))))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    terms.push(self.term()?);
                }
                Tok::Op('-') => {
                    self.bump();
                    terms.push(self.term()?.neg());
                }
                _ => break,
            }
        }
        Ok(Expr::sum(terms))
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut factors = vec![self.unary()?];
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    factors.push(self.unary()?);
                }
                Tok::Op('/') => {
                    self.bump();
                    let den = self.unary()?;
                    let num = Expr::product(std::mem::take(&mut factors));
                    factors.push(Expr::quotient(num, den));
                }
                _ => break,
            }
        }
        Ok(Expr::product(factors))
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('-') {
            // a literal directly after the sign is a negative constant
            if let Tok::Num(v, _) = *self.peek_at(1) {
                if *self.peek_at(2) != Tok::Op('^') {
                    self.bump();
                    self.bump();
                    return Ok(Expr::Const(-v));
                }
            }
            self.bump();
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Op('^') {
            return Ok(base);
        }
        self.bump();
        let pos = self.pos();
        let negative = if *self.peek() == Tok::Op('-') {
            self.bump();
            true
        } else {
            false
        };
        match self.bump() {
            Tok::Num(_, text) if text.bytes().all(|b| b.is_ascii_digit()) => {
                let k: i32 = text.parse().map_err(|_| ParseError::NonIntegerExponent { pos })?;
                Ok(base.pow(if negative { -k } else { k }))
            }
            _ => Err(ParseError::NonIntegerExponent { pos }),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(v, _) => Ok(Expr::Const(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::Op('(') {
                    self.call(&name, pos)
                } else if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    Ok(Expr::Var(i))
                } else {
                    Err(ParseError::UnknownIdentifier { name, pos })
                }
            }
            t => Err(ParseError::Syntax {
                pos,
                msg: format!("expected an operand, found {}", describe(&t)),
            }),
        }
    }

    fn call(&mut self, name: &str, pos: usize) -> Result<Expr, ParseError> {
        self.expect('(')?;
        let first = self.expr()?;
        let out = if let Some(f) = UnaryFn::from_name(name) {
            Expr::unary(f, first)
        } else if name == "min" || name == "max" {
            self.expect(',')?;
            let second = self.expr()?;
            if name == "min" {
                Expr::Min(Box::new(first), Box::new(second))
            } else {
                Expr::Max(Box::new(first), Box::new(second))
            }
        } else {
            return Err(ParseError::UnknownIdentifier {
                name: name.to_string(),
                pos,
            });
        };
        self.expect(')')?;
        Ok(out)
    }
}
