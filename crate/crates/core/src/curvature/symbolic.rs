use crate::expr::symbolic::ExprMatrix;
use crate::expr::{Expr, ExprError};
use crate::fields::MetricExprs;

/// `(∇f)^k = g^{ki} ∂_i f` as expressions.
pub fn grad_expr(f: &Expr, inv: &ExprMatrix) -> Result<Vec<Expr>, ExprError> {
    let n = inv.len();
    let df: Vec<Expr> = (0..n).map(|i| f.diff(i)).collect::<Result<_, _>>()?;
    Ok(inv
        .iter()
        .map(|row| {
            Expr::sum(
                row.iter()
                    .zip(&df)
                    .map(|(a, b)| Expr::mul(a.clone(), b.clone())),
            )
        })
        .collect())
}

/// `g^{ij} ∂_i f ∂_j f` as an expression.
pub fn grad_norm_sq_expr(f: &Expr, inv: &ExprMatrix) -> Result<Expr, ExprError> {
    let n = inv.len();
    let df: Vec<Expr> = (0..n).map(|i| f.diff(i)).collect::<Result<_, _>>()?;
    let mut terms = Vec::new();
    for i in 0..n {
        for j in 0..n {
            terms.push(Expr::mul(
                inv[i][j].clone(),
                Expr::mul(df[i].clone(), df[j].clone()),
            ));
        }
    }
    Ok(Expr::sum(terms))
}

/// `div_μ X = ∂_i X^i + X^i (2 ∂_i h / h + ½ ∂_i |g| / |g|)` as an expression.
pub fn divergence_expr(x: &[Expr], g: &MetricExprs, h: &Expr) -> Result<Expr, ExprError> {
    let mut terms = Vec::new();
    for (i, xi) in x.iter().enumerate() {
        terms.push(xi.diff(i)?);
        let log_rho = Expr::add(
            Expr::div(Expr::mul(Expr::Const(2.0), h.diff(i)?), h.clone()),
            Expr::div(Expr::mul(Expr::Const(0.5), g.det.diff(i)?), g.det.clone()),
        );
        terms.push(Expr::mul(xi.clone(), log_rho));
    }
    Ok(Expr::sum(terms))
}
