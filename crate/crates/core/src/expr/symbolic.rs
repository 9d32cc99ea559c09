//! Small symbolic linear-algebra helpers over [`Expr`] matrices.
//!
//! Used to build analytic providers for derived quantities (inverse metric,
//! gradients, weighted Laplacians) so their exact derivatives stay available.

use super::Expr;

/// Square matrix of expressions, row major.
pub type ExprMatrix = Vec<Vec<Expr>>;

fn minor(m: &ExprMatrix, row: usize, col: usize) -> ExprMatrix {
    m.iter()
        .enumerate()
        .filter(|(r, _)| *r != row)
        .map(|(_, line)| {
            line.iter()
                .enumerate()
                .filter(|(c, _)| *c != col)
                .map(|(_, e)| e.clone())
                .collect()
        })
        .collect()
}

/// Determinant by cofactor expansion along the first row. Fine for n ≤ 4.
pub fn det(m: &ExprMatrix) -> Expr {
    match m.len() {
        0 => Expr::Const(1.0),
        1 => m[0][0].clone(),
        2 => Expr::sub(
            Expr::mul(m[0][0].clone(), m[1][1].clone()),
            Expr::mul(m[0][1].clone(), m[1][0].clone()),
        ),
        n => {
            let mut acc = Expr::Const(0.0);
            for c in 0..n {
                if m[0][c].is_zero() {
                    continue;
                }
                let term = Expr::mul(m[0][c].clone(), det(&minor(m, 0, c)));
                acc = if c % 2 == 0 {
                    Expr::add(acc, term)
                } else {
                    Expr::sub(acc, term)
                };
            }
            acc
        }
    }
}

/// Inverse via the adjugate. Returns the inverse and the determinant.
pub fn inverse(m: &ExprMatrix) -> (ExprMatrix, Expr) {
    let n = m.len();
    let d = det(m);
    if n == 1 {
        return (vec![vec![Expr::div(Expr::Const(1.0), d.clone())]], d);
    }
    let mut inv = vec![vec![Expr::Const(0.0); n]; n];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            // (A^{-1})_{ij} = C_{ji} / det
            let cof = det(&minor(m, j, i));
            let cof = if (i + j) % 2 == 0 {
                cof
            } else {
                Expr::neg(cof)
            };
            *slot = Expr::div(cof, d.clone());
        }
    }
    (inv, d)
}

pub fn mat_vec(m: &ExprMatrix, v: &[Expr]) -> Vec<Expr> {
    m.iter()
        .map(|row| {
            Expr::sum(
                row.iter()
                    .zip(v)
                    .map(|(a, b)| Expr::mul(a.clone(), b.clone())),
            )
        })
        .collect()
}

pub fn dot(a: &[Expr], b: &[Expr]) -> Expr {
    Expr::sum(
        a.iter()
            .zip(b)
            .map(|(x, y)| Expr::mul(x.clone(), y.clone())),
    )
}

/// Gradient of a scalar expression as the list of partials.
pub fn gradient(f: &Expr, n: usize) -> Result<Vec<Expr>, super::ExprError> {
    (0..n).map(|i| f.diff(i)).collect()
}
