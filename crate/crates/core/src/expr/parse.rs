use std::sync::Arc;

use super::{BinaryOp, Expr, ExprError, UnaryOp};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str) -> Result<Vec<(Tok, usize)>, ExprError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (t, at) = lx.next()?;
            let done = t == Tok::End;
            out.push((t, at));
            if done {
                return Ok(out);
            }
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(c) = self.peek() else {
            return Ok((Tok::End, start));
        };
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => return self.number(start),
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while matches!(
                    self.peek(),
                    Some(b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'_')
                ) {
                    self.pos += 1;
                }
                return Ok((Tok::Ident(self.src[start..self.pos].to_string()), start));
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        self.pos += 1;
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ExprError> {
        let bytes = self.src.as_bytes();
        let digits = |pos: &mut usize| {
            let s = *pos;
            while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
                *pos += 1;
            }
            *pos - s
        };
        let mut pos = self.pos;
        let int_digits = digits(&mut pos);
        let mut frac_digits = 0;
        if bytes.get(pos) == Some(&b'.') {
            pos += 1;
            frac_digits = digits(&mut pos);
        }
        if int_digits + frac_digits == 0 {
            return Err(ExprError::Syntax {
                offset: start,
                message: "malformed number".into(),
            });
        }
        if matches!(bytes.get(pos), Some(b'e' | b'E')) {
            let mut p = pos + 1;
            if matches!(bytes.get(p), Some(b'+' | b'-')) {
                p += 1;
            }
            if digits(&mut p) == 0 {
                return Err(ExprError::Syntax {
                    offset: pos,
                    message: "exponent has no digits".into(),
                });
            }
            pos = p;
        }
        let text = &self.src[start..pos];
        let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })?;
        if !value.is_finite() {
            return Err(ExprError::Syntax {
                offset: start,
                message: format!("number `{text}` overflows"),
            });
        }
        self.pos = pos;
        Ok((Tok::Num(value), start))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    dim: usize,
}

// Binding powers. `^` binds tighter than prefix minus, so `-x^2` is `-(x^2)`.
const BP_ADD: u8 = 10;
const BP_MUL: u8 = 20;
const BP_NEG: u8 = 30;
const BP_POW: u8 = 40;

/// Parses `source` as an expression in the variables `x1..x{dim}`.
///
/// Precedence from loosest to tightest: `+ -`, `* /`, unary `-`, `^`. All
/// binary operators are left-associative, including `^`.
pub fn parse_expr(source: &str, dim: usize) -> Result<Expr, ExprError> {
    if source.trim().is_empty() {
        return Err(ExprError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let toks = Lexer::tokenize(source)?;
    let mut p = Parser { toks, idx: 0, dim };
    let e = p.expr(0)?;
    match p.peek() {
        (Tok::End, _) => Ok(e),
        (t, at) => Err(ExprError::Syntax {
            offset: *at,
            message: format!("unexpected {}", describe(t)),
        }),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::End => "end of input".into(),
    }
}

impl Parser {
    fn peek(&self) -> &(Tok, usize) {
        &self.toks[self.idx]
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.idx].clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ExprError> {
        let (t, at) = self.bump();
        if t == want {
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: at,
                message: format!("expected {}, found {}", describe(&want), describe(&t)),
            })
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.prefix()?;
        loop {
            let (op, bp) = match self.peek().0 {
                Tok::Plus => (BinaryOp::Add, BP_ADD),
                Tok::Minus => (BinaryOp::Sub, BP_ADD),
                Tok::Star => (BinaryOp::Mul, BP_MUL),
                Tok::Slash => (BinaryOp::Div, BP_MUL),
                Tok::Caret => (BinaryOp::Pow, BP_POW),
                _ => break,
            };
            if bp <= min_bp {
                break;
            }
            self.bump();
            let rhs = if op == BinaryOp::Pow {
                // A leading minus is allowed in an exponent: `x1^-2`.
                self.operand(bp)?
            } else {
                self.expr(bp)?
            };
            lhs = Expr::Binary(op, Arc::new(lhs), Arc::new(rhs));
        }
        Ok(lhs)
    }

    fn operand(&mut self, bp: u8) -> Result<Expr, ExprError> {
        if self.peek().0 == Tok::Minus {
            self.bump();
            let inner = self.operand(bp)?;
            return Ok(Expr::Unary(UnaryOp::Neg, Arc::new(inner)));
        }
        self.expr(bp)
    }

    fn prefix(&mut self) -> Result<Expr, ExprError> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Minus => {
                let inner = self.expr(BP_NEG)?;
                Ok(Expr::Unary(UnaryOp::Neg, Arc::new(inner)))
            }
            Tok::LParen => {
                let e = self.expr(0)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => self.ident(name, at),
            other => Err(ExprError::Syntax {
                offset: at,
                message: format!("expected an operand, found {}", describe(&other)),
            }),
        }
    }

    fn ident(&mut self, name: String, at: usize) -> Result<Expr, ExprError> {
        if let Some(index) = variable_index(&name) {
            if index == 0 || index > self.dim {
                return Err(ExprError::VariableOutOfRange {
                    index,
                    dim: self.dim,
                    offset: at,
                });
            }
            return Ok(Expr::Var(index - 1));
        }
        if let Some(op) = UnaryOp::from_name(&name) {
            self.expect(Tok::LParen)?;
            let a = self.expr(0)?;
            self.expect(Tok::RParen)?;
            return Ok(Expr::Unary(op, Arc::new(a)));
        }
        let binop = match name.as_str() {
            "max" => BinaryOp::Max,
            "min" => BinaryOp::Min,
            _ => return Err(ExprError::UnknownIdentifier { name, offset: at }),
        };
        self.expect(Tok::LParen)?;
        let a = self.expr(0)?;
        self.expect(Tok::Comma)?;
        let b = self.expr(0)?;
        self.expect(Tok::RParen)?;
        Ok(Expr::Binary(binop, Arc::new(a), Arc::new(b)))
    }
}

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}
