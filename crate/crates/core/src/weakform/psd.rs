use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::cutoff::smoothstep_expr;
use crate::fields::{Field, Kind};

/// `M_ε = φ Σ_k b_k ⊗ b_k` with `b_k` the rows of `√(M + εI)`.
#[derive(Debug, Clone)]
pub struct PsdDecomposition {
    pub phi: Field,
    pub b: Vec<Field>,
    /// `sup |M_ε − M|`.
    pub deviation_c0: f64,
    /// `sup |M_ε − M| + max_a sup |∂_a(M_ε − M)|`.
    pub deviation_c1: f64,
}

impl PsdDecomposition {
    /// The reconstructed tensor `φ Σ_k b_k ⊗ b_k`.
    pub fn reconstruct(&self) -> Field {
        let grid = self.phi.grid().clone();
        let n = grid.dim();
        Field::from_nodewise(grid, Kind::Tensor2, |p, out| {
            for j in 0..n {
                for k in 0..n {
                    out[j * n + k] = self.phi.at(p)
                        * self
                            .b
                            .iter()
                            .map(|b| b.get(j, p) * b.get(k, p))
                            .sum::<f64>();
                }
            }
        })
    }
}

/// Rows of the symmetric square root of `M + εI`; negative eigenvalues from
/// rounding are clamped to zero.
pub(crate) fn psd_sqrt_rows(m: &DMatrix<f64>, eps: f64) -> Vec<Vec<f64>> {
    let n = m.nrows();
    let sym = 0.5 * (m + m.transpose()) + DMatrix::identity(n, n) * eps;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let s = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    (0..n)
        .map(|k| (0..n).map(|j| s[(k, j)]).collect())
        .collect()
}

/// Decomposes a PSD tensor field into a sum of squares of vector fields
/// times a cutoff equal to 1 on the support of `M`.
pub fn psd_test_decomposition(m: &Field, eps: f64) -> Result<PsdDecomposition> {
    if m.kind() != Kind::Tensor2 {
        return Err(Error::Invalid(
            "PSD decomposition needs a rank-2 tensor field".into(),
        ));
    }
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("ε must be positive, got {eps}")));
    }
    let grid = m.grid().clone();
    let n = grid.dim();
    let mut b: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; grid.len()]; n]; n];
    for p in 0..grid.len() {
        let mat = DMatrix::from_fn(n, n, |j, k| m.t(j, k, p));
        let min_eig = SymmetricEigen::new(0.5 * (&mat + mat.transpose()))
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(Error::Invalid(format!(
                "tensor is not positive semidefinite at {:?} (eigenvalue {min_eig:e})",
                grid.point(p)
            )));
        }
        for (k, row) in psd_sqrt_rows(&mat, eps).into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                b[k][j][p] = v;
            }
        }
    }
    let b = b
        .into_iter()
        .map(|c| Field::from_components(grid.clone(), Kind::Vector, c))
        .collect::<Result<Vec<_>>>()?;

    let phi = match m.support() {
        None => Field::constant(grid.clone(), 1.0),
        Some(sup) => {
            let mut e = Expr::Const(1.0);
            for (a, &(s0, s1)) in sup.iter().enumerate() {
                let h = grid.spacing(a);
                let below = (s0 - grid.lo(a)).max(0.0).min(4.0 * h);
                let above = (grid.hi(a) - s1).max(0.0).min(4.0 * h);
                if below > 0.0 {
                    let t = Expr::div(
                        Expr::sub(Expr::var(a), Expr::Const(s0 - below)),
                        Expr::Const(below),
                    );
                    e = Expr::mul(e, smoothstep_expr(t));
                }
                if above > 0.0 {
                    let t = Expr::div(
                        Expr::sub(Expr::Const(s1 + above), Expr::var(a)),
                        Expr::Const(above),
                    );
                    e = Expr::mul(e, smoothstep_expr(t));
                }
            }
            Field::sample_scalar(grid.clone(), e)?
        }
    };

    let mut out = PsdDecomposition {
        phi,
        b,
        deviation_c0: 0.0,
        deviation_c1: 0.0,
    };
    let rec = out.reconstruct();
    let diff_comps: Vec<Vec<f64>> = (0..n * n)
        .map(|c| {
            rec.comp(c)
                .iter()
                .zip(m.comp(c))
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect();
    let diff = Field::from_components(grid.clone(), Kind::Tensor2, diff_comps)?;
    let c0 = diff.sup_norm(None);
    let c1 = (0..n)
        .map(|a| diff.fd_partial(a).sup_norm(None))
        .fold(0.0, f64::max);
    out.deviation_c0 = c0;
    out.deviation_c1 = c0 + c1;
    Ok(out)
}
