use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::field::{Field, Kind};
use super::grid::ChartGrid;
use super::Mode;
use crate::error::{Error, Result};
use crate::expr::symbolic::{self, ExprMatrix};
use crate::expr::{Expr, UnaryOp};

/// Symbolic description of a metric: components, inverse and determinant.
#[derive(Debug, Clone)]
pub struct MetricExprs {
    pub g: ExprMatrix,
    pub inv: ExprMatrix,
    pub det: Expr,
}

/// Positive definite symmetric 2-tensor on a chart with cached inverse and
/// determinant at every node.
#[derive(Debug, Clone)]
pub struct MetricField {
    g: Field,
    inv: Field,
    det: Vec<f64>,
    exprs: Option<MetricExprs>,
}

impl MetricField {
    /// Samples `g_ij` from expressions. The matrix must be symmetric as given.
    pub fn from_exprs(grid: Arc<ChartGrid>, g: ExprMatrix) -> Result<Self> {
        let n = grid.dim();
        if g.len() != n || g.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid(format!("metric must be {n}×{n}")));
        }
        for i in 0..n {
            for j in 0..i {
                if g[i][j] != g[j][i] {
                    return Err(Error::Invalid(format!(
                        "metric components g_{}{} and g_{}{} differ",
                        i + 1,
                        j + 1,
                        j + 1,
                        i + 1
                    )));
                }
            }
        }
        let flat: Vec<Expr> = g.iter().flatten().cloned().collect();
        let field = Field::sample(grid, Kind::Tensor2, flat)?;
        let (inv, det) = symbolic::inverse(&g);
        let mut m = MetricField::from_field(field)?;
        m.exprs = Some(MetricExprs { g, inv, det });
        Ok(m)
    }

    pub fn diagonal(grid: Arc<ChartGrid>, diag: Vec<Expr>) -> Result<Self> {
        let n = diag.len();
        let mut g = vec![vec![Expr::Const(0.0); n]; n];
        for (i, d) in diag.into_iter().enumerate() {
            g[i][i] = d;
        }
        MetricField::from_exprs(grid, g)
    }

    /// Conformally flat metric `c(x)·δ`.
    pub fn conformal(grid: Arc<ChartGrid>, factor: Expr) -> Result<Self> {
        let n = grid.dim();
        MetricField::diagonal(grid, vec![factor; n])
    }

    pub fn euclidean(grid: Arc<ChartGrid>) -> Result<Self> {
        MetricField::conformal(grid, Expr::Const(1.0))
    }

    /// Wraps sampled components (no analytic providers). Symmetry is enforced
    /// by averaging `T_ij` and `T_ji`; positive definiteness is checked by a
    /// Cholesky factorisation at every node.
    pub fn from_field(g: Field) -> Result<Self> {
        if g.kind() != Kind::Tensor2 {
            return Err(Error::Invalid(
                "metric must be a rank-2 tensor field".into(),
            ));
        }
        let grid = g.grid().clone();
        let n = grid.dim();
        let exprs = g.exprs().map(|e| e.to_vec());
        let mut comps = g.clone().into_components();
        for i in 0..n {
            for j in 0..i {
                for p in 0..grid.len() {
                    let avg = 0.5 * (comps[i * n + j][p] + comps[j * n + i][p]);
                    comps[i * n + j][p] = avg;
                    comps[j * n + i][p] = avg;
                }
            }
        }
        let results: Vec<Option<(Vec<f64>, f64)>> = (0..grid.len())
            .into_par_iter()
            .map(|p| {
                let m = DMatrix::from_fn(n, n, |i, j| comps[i * n + j][p]);
                let ch = m.cholesky()?;
                let det: f64 = ch.l_dirty().diagonal().iter().map(|d| d * d).product();
                let inv = ch.inverse();
                Some((inv.iter().cloned().collect(), det))
            })
            .collect();
        let mut inv = vec![vec![0.0; grid.len()]; n * n];
        let mut det = vec![0.0; grid.len()];
        for (p, r) in results.into_iter().enumerate() {
            let (vals, d) = r.ok_or_else(|| Error::NotPositiveDefinite {
                coords: grid.point(p),
            })?;
            // nalgebra is column major; the inverse is symmetric anyway
            for j in 0..n {
                for i in 0..n {
                    inv[i * n + j][p] = vals[j * n + i];
                }
            }
            det[p] = d;
        }
        let g = Field::from_components(grid.clone(), Kind::Tensor2, comps)?
            .with_exprs(exprs)
            .into_symmetric()?;
        let inv = Field::from_components(grid, Kind::Tensor2, inv)?;
        Ok(MetricField {
            g,
            inv,
            det,
            exprs: None,
        })
    }

    pub fn grid(&self) -> &Arc<ChartGrid> {
        self.g.grid()
    }

    pub fn dim(&self) -> usize {
        self.g.grid().dim()
    }

    pub fn field(&self) -> &Field {
        &self.g
    }

    pub fn inverse_field(&self) -> &Field {
        &self.inv
    }

    pub fn exprs(&self) -> Option<&MetricExprs> {
        self.exprs.as_ref()
    }

    pub fn g(&self, i: usize, j: usize, p: usize) -> f64 {
        self.g.t(i, j, p)
    }

    pub fn ginv(&self, i: usize, j: usize, p: usize) -> f64 {
        self.inv.t(i, j, p)
    }

    pub fn det(&self, p: usize) -> f64 {
        self.det[p]
    }

    pub fn dets(&self) -> &[f64] {
        &self.det
    }

    pub fn sqrt_det(&self, p: usize) -> f64 {
        self.det[p].sqrt()
    }

    /// `∂_k g_ij` for every `k`, as tensor fields.
    pub fn partials(&self, mode: Mode) -> Result<Vec<Field>> {
        if mode == Mode::Analytic && self.exprs.is_none() {
            return Err(Error::MissingAnalytic("metric"));
        }
        (0..self.dim()).map(|k| self.g.partial(k, mode)).collect()
    }

    /// `∂_l ∂_k g_ij` from the expressions, indexed `[k][l]`.
    pub fn second_partials(&self) -> Result<Vec<Vec<Field>>> {
        let ex = self
            .exprs
            .as_ref()
            .ok_or(Error::MissingAnalytic("metric"))?;
        let n = self.dim();
        let flat: Vec<Expr> = ex.g.iter().flatten().cloned().collect();
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let dk: Vec<Expr> = flat
                .iter()
                .map(|e| e.diff(k))
                .collect::<std::result::Result<_, _>>()?;
            let mut row = Vec::with_capacity(n);
            for l in 0..n {
                let dkl: Vec<Expr> = dk
                    .iter()
                    .map(|e| e.diff(l))
                    .collect::<std::result::Result<_, _>>()?;
                row.push(Field::sample(self.grid().clone(), Kind::Tensor2, dkl)?);
            }
            out.push(row);
        }
        Ok(out)
    }

    /// `g(X, Y)` at a node for contravariant component slices.
    pub fn inner(&self, x: &[f64], y: &[f64], p: usize) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.g(i, j, p) * x[i] * y[j];
            }
        }
        s
    }

    /// `g^{ij} a_i b_j` at a node for covariant component slices.
    pub fn inner_dual(&self, a: &[f64], b: &[f64], p: usize) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.ginv(i, j, p) * a[i] * b[j];
            }
        }
        s
    }

    /// Largest deviation `|g^{ik}g_kj − δ_ij|` over all nodes.
    pub fn inverse_defect(&self) -> f64 {
        let n = self.dim();
        (0..self.grid().len())
            .map(|p| {
                let mut worst: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let s: f64 = (0..n).map(|k| self.ginv(i, k, p) * self.g(k, j, p)).sum();
                        let d = if i == j { 1.0 } else { 0.0 };
                        worst = worst.max((s - d).abs());
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }
}

/// Positive weight `h` of the measure `dμ = h²√|g| dx`, with `V = −2 log h`.
#[derive(Debug, Clone)]
pub struct WeightField {
    h: Field,
    v: Vec<f64>,
    v_expr: Option<Expr>,
    constant: bool,
}

impl WeightField {
    pub fn unit(grid: Arc<ChartGrid>) -> Self {
        let h = Field::constant(grid.clone(), 1.0);
        WeightField {
            v: vec![0.0; grid.len()],
            h,
            v_expr: Some(Expr::Const(0.0)),
            constant: true,
        }
    }

    pub fn from_h(grid: Arc<ChartGrid>, h: Expr) -> Result<Self> {
        let constant = h.is_constant();
        let v_expr = Expr::mul(Expr::Const(-2.0), Expr::unary(UnaryOp::Log, h.clone()));
        let field = Field::sample_scalar(grid, h)?;
        WeightField::build(field, Some(v_expr), constant)
    }

    /// Weight given through its potential, `h = exp(−V/2)`.
    pub fn from_v(grid: Arc<ChartGrid>, v: Expr) -> Result<Self> {
        let constant = v.is_constant();
        let h = Expr::unary(UnaryOp::Exp, Expr::mul(Expr::Const(-0.5), v.clone()));
        let field = Field::sample_scalar(grid, h)?;
        WeightField::build(field, Some(v), constant)
    }

    /// Weight from sampled values (no providers).
    pub fn from_field(h: Field) -> Result<Self> {
        let first = h.at(0);
        let constant = h.comp(0).iter().all(|&x| x == first);
        WeightField::build(h, None, constant)
    }

    fn build(h: Field, v_expr: Option<Expr>, constant: bool) -> Result<Self> {
        let grid = h.grid().clone();
        for p in 0..grid.len() {
            let value = h.at(p);
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveWeight {
                    value,
                    coords: grid.point(p),
                });
            }
        }
        let v = h.comp(0).iter().map(|x| -2.0 * x.ln()).collect();
        Ok(WeightField {
            h,
            v,
            v_expr,
            constant,
        })
    }

    pub fn h(&self) -> &Field {
        &self.h
    }

    pub fn h_at(&self, p: usize) -> f64 {
        self.h.at(p)
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn v_expr(&self) -> Option<&Expr> {
        self.v_expr.as_ref()
    }

    pub fn h_expr(&self) -> Option<&Expr> {
        self.h.exprs().map(|e| &e[0])
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// `∂_i h` for every axis.
    pub fn dh(&self, mode: Mode) -> Result<Vec<Field>> {
        if self.constant {
            let grid = self.h.grid().clone();
            return Ok((0..grid.dim())
                .map(|_| Field::constant(grid.clone(), 0.0))
                .collect());
        }
        (0..self.h.grid().dim())
            .map(|i| self.h.partial(i, mode))
            .collect()
    }

    /// `∂_i V = −2 ∂_i h / h` for every axis.
    pub fn dv(&self, mode: Mode) -> Result<Vec<Field>> {
        let dh = self.dh(mode)?;
        Ok(dh
            .into_iter()
            .map(|d| {
                let vals = d
                    .comp(0)
                    .iter()
                    .zip(self.h.comp(0))
                    .map(|(a, h)| -2.0 * a / h)
                    .collect();
                Field::scalar(self.h.grid().clone(), vals).expect("same grid")
            })
            .collect())
    }

    /// Measure density `h²√|g|` at every node.
    pub fn density(&self, g: &MetricField) -> Vec<f64> {
        (0..g.grid().len())
            .map(|p| self.h_at(p).powi(2) * g.sqrt_det(p))
            .collect()
    }

    /// Largest `|exp(−V) − h²|` over the nodes.
    pub fn consistency_defect(&self) -> f64 {
        self.v
            .iter()
            .zip(self.h.comp(0))
            .map(|(v, h)| ((-v).exp() - h * h).abs())
            .fold(0.0, f64::max)
    }
}
