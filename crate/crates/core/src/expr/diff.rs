use super::{BinaryOp, Expr, ExprError, UnaryOp};

pub(super) fn diff(e: &Expr, var: usize) -> Result<Expr, ExprError> {
    if !e.depends_on(var) {
        return Ok(Expr::Const(0.0));
    }
    Ok(match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
        Expr::Unary(op, a) => {
            let a = a.as_ref();
            let da = diff(a, var)?;
            let outer = match op {
                UnaryOp::Neg => return Ok(Expr::neg(da)),
                UnaryOp::Sin => Expr::unary(UnaryOp::Cos, a.clone()),
                UnaryOp::Cos => Expr::neg(Expr::unary(UnaryOp::Sin, a.clone())),
                UnaryOp::Exp => Expr::unary(UnaryOp::Exp, a.clone()),
                UnaryOp::Log => return Ok(Expr::div(da, a.clone())),
                UnaryOp::Sqrt => {
                    let root = Expr::unary(UnaryOp::Sqrt, a.clone());
                    return Ok(Expr::div(da, Expr::mul(Expr::Const(2.0), root)));
                }
                // a.e. derivative; sgn(0) = 1 picks the right-hand branch.
                UnaryOp::Abs => Expr::unary(UnaryOp::Sgn, a.clone()),
                UnaryOp::Step | UnaryOp::Sgn | UnaryOp::Sign => return Ok(Expr::Const(0.0)),
            };
            Expr::mul(outer, da)
        }
        Expr::Binary(op, a, b) => {
            let (a, b) = (a.as_ref(), b.as_ref());
            match op {
                BinaryOp::Add => Expr::add(diff(a, var)?, diff(b, var)?),
                BinaryOp::Sub => Expr::sub(diff(a, var)?, diff(b, var)?),
                BinaryOp::Mul => Expr::add(
                    Expr::mul(diff(a, var)?, b.clone()),
                    Expr::mul(a.clone(), diff(b, var)?),
                ),
                BinaryOp::Div => {
                    let da = diff(a, var)?;
                    let db = diff(b, var)?;
                    Expr::sub(
                        Expr::div(da, b.clone()),
                        Expr::div(Expr::mul(a.clone(), db), Expr::mul(b.clone(), b.clone())),
                    )
                }
                BinaryOp::Pow => {
                    if !b.is_constant() {
                        return Err(ExprError::VariableExponent {
                            node: e.to_string(),
                        });
                    }
                    let c = b.eval(&[])?;
                    let da = diff(a, var)?;
                    let lowered = Expr::pow(a.clone(), Expr::Const(c - 1.0));
                    Expr::mul(Expr::mul(Expr::Const(c), lowered), da)
                }
                // At a tie the second argument's derivative is used.
                BinaryOp::Max | BinaryOp::Min => {
                    let gap = if *op == BinaryOp::Max {
                        Expr::sub(a.clone(), b.clone())
                    } else {
                        Expr::sub(b.clone(), a.clone())
                    };
                    let s = Expr::unary(UnaryOp::Step, gap);
                    let t = Expr::sub(Expr::Const(1.0), s.clone());
                    Expr::add(Expr::mul(s, diff(a, var)?), Expr::mul(t, diff(b, var)?))
                }
            }
        }
    })
}
