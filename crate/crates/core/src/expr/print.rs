use std::fmt;

use super::{BinaryOp, Expr, UnaryOp};

const P_ADD: u8 = 10;
const P_MUL: u8 = 20;
const P_NEG: u8 = 30;
const P_POW: u8 = 40;
const P_ATOM: u8 = 50;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => P_NEG,
        Expr::Const(_) | Expr::Var(_) => P_ATOM,
        Expr::Unary(UnaryOp::Neg, _) => P_NEG,
        Expr::Unary(..) => P_ATOM,
        Expr::Binary(op, ..) => match op {
            BinaryOp::Add | BinaryOp::Sub => P_ADD,
            BinaryOp::Mul | BinaryOp::Div => P_MUL,
            BinaryOp::Pow => P_POW,
            BinaryOp::Max | BinaryOp::Min => P_ATOM,
        },
    }
}

fn child(e: &Expr, parens: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if parens {
        write!(f, "(")?;
        write_expr(e, f)?;
        write!(f, ")")
    } else {
        write_expr(e, f)
    }
}

/// Writes `e` with the minimal parentheses needed for the parser to rebuild
/// the same tree.
pub(super) fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Const(c) => write!(f, "{c}"),
        Expr::Var(i) => write!(f, "x{}", i + 1),
        Expr::Unary(UnaryOp::Neg, a) => {
            write!(f, "-")?;
            child(a, prec(a) < P_NEG, f)
        }
        Expr::Unary(op, a) => {
            write!(f, "{}(", op.name())?;
            write_expr(a, f)?;
            write!(f, ")")
        }
        Expr::Binary(op @ (BinaryOp::Max | BinaryOp::Min), a, b) => {
            let name = if *op == BinaryOp::Max { "max" } else { "min" };
            write!(f, "{name}(")?;
            write_expr(a, f)?;
            write!(f, ", ")?;
            write_expr(b, f)?;
            write!(f, ")")
        }
        Expr::Binary(op, a, b) => {
            let p = prec(e);
            let sym = match op {
                BinaryOp::Add => " + ",
                BinaryOp::Sub => " - ",
                BinaryOp::Mul => "*",
                BinaryOp::Div => "/",
                _ => "^",
            };
            child(a, prec(a) < p, f)?;
            write!(f, "{sym}")?;
            child(b, prec(b) <= p, f)
        }
    }
}
