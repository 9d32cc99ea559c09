use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use super::grid::{ChartGrid, IndexBox};
use super::Mode;
use crate::error::{Error, Result};
use crate::expr::Expr;

/// What the components of a [`Field`] represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Scalar,
    /// Contravariant components `X^i`.
    Vector,
    /// Components `T_ij` stored at index `i*n + j`.
    Tensor2,
    /// Any other flat list of components.
    Array(usize),
}

impl Kind {
    pub fn components(self, n: usize) -> usize {
        match self {
            Kind::Scalar => 1,
            Kind::Vector => n,
            Kind::Tensor2 => n * n,
            Kind::Array(k) => k,
        }
    }
}

/// Sampled field on a chart grid, one value array per component.
///
/// Optional expression providers (one per component) enable analytic
/// derivatives. `support` is a coordinate box outside which the field is
/// exactly zero; `valid` restricts where values are meaningful (for example
/// after a convolution).
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<ChartGrid>,
    kind: Kind,
    comps: Vec<Vec<f64>>,
    exprs: Option<Vec<Expr>>,
    support: Option<Vec<(f64, f64)>>,
    valid: Option<IndexBox>,
    symmetric: bool,
}

pub type ScalarField = Field;
pub type VectorField = Field;
pub type Tensor2Field = Field;

impl Field {
    pub fn from_components(grid: Arc<ChartGrid>, kind: Kind, comps: Vec<Vec<f64>>) -> Result<Self> {
        let k = kind.components(grid.dim());
        if comps.len() != k || comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::Invalid(format!(
                "expected {k} components of {} values",
                grid.len()
            )));
        }
        Ok(Field {
            grid,
            kind,
            comps,
            exprs: None,
            support: None,
            valid: None,
            symmetric: false,
        })
    }

    /// Builds a field by filling the components of every node in parallel.
    pub fn from_nodewise<F>(grid: Arc<ChartGrid>, kind: Kind, fill: F) -> Self
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        let k = kind.components(grid.dim());
        let len = grid.len();
        let mut flat = vec![0.0; len * k];
        flat.par_chunks_mut(k.max(1))
            .enumerate()
            .for_each(|(p, out)| fill(p, out));
        let mut comps = vec![vec![0.0; len]; k];
        for p in 0..len {
            for c in 0..k {
                comps[c][p] = flat[p * k + c];
            }
        }
        Field {
            grid,
            kind,
            comps,
            exprs: None,
            support: None,
            valid: None,
            symmetric: false,
        }
    }

    pub fn scalar(grid: Arc<ChartGrid>, values: Vec<f64>) -> Result<Self> {
        Field::from_components(grid, Kind::Scalar, vec![values])
    }

    pub fn zeros(grid: Arc<ChartGrid>, kind: Kind) -> Self {
        let k = kind.components(grid.dim());
        let comps = vec![vec![0.0; grid.len()]; k];
        Field {
            grid,
            kind,
            comps,
            exprs: None,
            support: None,
            valid: None,
            symmetric: false,
        }
    }

    pub fn constant(grid: Arc<ChartGrid>, value: f64) -> Self {
        let mut f = Field::zeros(grid, Kind::Scalar);
        f.comps[0].fill(value);
        f.exprs = Some(vec![Expr::Const(value)]);
        f
    }

    /// Evaluates one expression per component at every node. The expressions
    /// are kept as analytic providers.
    pub fn sample(grid: Arc<ChartGrid>, kind: Kind, exprs: Vec<Expr>) -> Result<Self> {
        let n = grid.dim();
        let k = kind.components(n);
        if exprs.len() != k {
            return Err(Error::Invalid(format!(
                "{} expressions supplied for {k} components",
                exprs.len()
            )));
        }
        if let Some(e) = exprs.iter().find(|e| e.arity() > n) {
            return Err(Error::Invalid(format!(
                "expression `{e}` uses more than {n} variables"
            )));
        }
        let comps = exprs
            .iter()
            .map(|e| sample_expr(&grid, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Field {
            grid,
            kind,
            comps,
            exprs: Some(exprs),
            support: None,
            valid: None,
            symmetric: false,
        })
    }

    pub fn sample_scalar(grid: Arc<ChartGrid>, e: Expr) -> Result<Self> {
        Field::sample(grid, Kind::Scalar, vec![e])
    }

    pub fn grid(&self) -> &Arc<ChartGrid> {
        &self.grid
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn n_components(&self) -> usize {
        self.comps.len()
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut Vec<f64> {
        self.exprs = None;
        &mut self.comps[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.comps
    }

    /// Value of the scalar field (component 0) at a node.
    pub fn at(&self, node: usize) -> f64 {
        self.comps[0][node]
    }

    pub fn get(&self, c: usize, node: usize) -> f64 {
        self.comps[c][node]
    }

    /// Tensor component `T_ij`.
    pub fn t(&self, i: usize, j: usize, node: usize) -> f64 {
        self.comps[i * self.grid.dim() + j][node]
    }

    pub fn exprs(&self) -> Option<&[Expr]> {
        self.exprs.as_deref()
    }

    pub fn has_exprs(&self) -> bool {
        self.exprs.is_some()
    }

    pub fn with_exprs(mut self, exprs: Option<Vec<Expr>>) -> Self {
        self.exprs = exprs;
        self
    }

    pub fn support(&self) -> Option<&[(f64, f64)]> {
        self.support.as_deref()
    }

    pub fn is_compact(&self) -> bool {
        self.support.is_some()
    }

    pub fn with_support(mut self, support: Option<Vec<(f64, f64)>>) -> Self {
        self.support = support;
        self
    }

    pub fn valid(&self) -> Option<&IndexBox> {
        self.valid.as_ref()
    }

    pub fn with_valid(mut self, valid: Option<IndexBox>) -> Self {
        self.valid = valid;
        self
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Marks a tensor field symmetric after checking `T_ij = T_ji` at every node.
    pub fn into_symmetric(mut self) -> Result<Self> {
        if self.kind != Kind::Tensor2 {
            return Err(Error::Invalid(
                "only rank-2 tensors can be symmetric".into(),
            ));
        }
        let n = self.grid.dim();
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (&self.comps[i * n + j], &self.comps[j * n + i]);
                if a.iter().zip(b).any(|(x, y)| x != y) {
                    return Err(Error::Invalid(format!(
                        "tensor is not symmetric in components ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        self.symmetric = true;
        Ok(self)
    }

    /// Euclidean (Frobenius) norm of the components at every node.
    pub fn pointwise_norm(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|p| self.comps.iter().map(|c| c[p] * c[p]).sum::<f64>().sqrt())
            .collect()
    }

    /// Largest absolute component value over the nodes of `region`
    /// (whole grid when `None`).
    pub fn sup_norm(&self, region: Option<&IndexBox>) -> f64 {
        let nodes = match region {
            Some(b) => self.grid.box_nodes(b),
            None => (0..self.grid.len()).collect(),
        };
        let norms = self.pointwise_norm();
        nodes.iter().map(|&p| norms[p]).fold(0.0, f64::max)
    }

    /// Nodewise map of every component; providers are dropped.
    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Field {
        let comps = self
            .comps
            .iter()
            .map(|c| c.par_iter().map(|&v| f(v)).collect())
            .collect();
        Field {
            comps,
            exprs: None,
            ..self.clone()
        }
    }

    /// Multiplies every component by a scalar field.
    pub fn scale_by(&self, s: &Field) -> Field {
        let comps = self
            .comps
            .iter()
            .map(|c| c.iter().zip(&s.comps[0]).map(|(a, b)| a * b).collect())
            .collect();
        let exprs = match (&self.exprs, &s.exprs) {
            (Some(es), Some(ss)) => Some(
                es.iter()
                    .map(|e| Expr::mul(e.clone(), ss[0].clone()))
                    .collect(),
            ),
            _ => None,
        };
        let support = match (&self.support, &s.support) {
            (Some(a), Some(b)) => Some(
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x.0.max(y.0), x.1.min(y.1)))
                    .collect(),
            ),
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(b.clone()),
            (None, None) => None,
        };
        Field {
            grid: self.grid.clone(),
            kind: self.kind,
            comps,
            exprs,
            support,
            valid: self.valid,
            symmetric: self.symmetric,
        }
    }

    /// Second-order finite difference along `axis` for every component:
    /// central in the interior, one-sided three-point at the two faces.
    pub fn fd_partial(&self, axis: usize) -> Field {
        let comps = self
            .comps
            .iter()
            .map(|c| fd_partial_values(&self.grid, c, axis))
            .collect();
        Field {
            grid: self.grid.clone(),
            kind: self.kind,
            comps,
            exprs: None,
            support: self.support.clone(),
            valid: self.valid,
            symmetric: self.symmetric,
        }
    }

    /// `∂_axis` of every component, exact from the providers in analytic mode.
    pub fn partial(&self, axis: usize, mode: Mode) -> Result<Field> {
        match mode {
            Mode::Fd => Ok(self.fd_partial(axis)),
            Mode::Analytic => {
                let exprs = self.exprs.as_ref().ok_or(Error::MissingAnalytic("field"))?;
                let d = exprs
                    .iter()
                    .map(|e| e.diff(axis))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let mut out = Field::sample(self.grid.clone(), self.kind, d)?;
                out.support = self.support.clone();
                out.symmetric = self.symmetric;
                Ok(out)
            }
        }
    }

    /// Partial derivative in analytic mode when providers exist, otherwise by
    /// finite differences.
    pub fn partial_prefer(&self, axis: usize, mode: Mode) -> Result<Field> {
        if mode == Mode::Analytic && self.has_exprs() {
            self.partial(axis, Mode::Analytic)
        } else {
            Ok(self.fd_partial(axis))
        }
    }

    /// Component names used in CSV dumps: `name`, `name_i` or `name_ij`
    /// (one-based indices).
    pub fn component_label(&self, name: &str, c: usize) -> String {
        let n = self.grid.dim();
        match self.kind {
            Kind::Scalar => name.to_string(),
            Kind::Vector => format!("{name}_{}", c + 1),
            Kind::Tensor2 => format!("{name}_{}{}", c / n + 1, c % n + 1),
            Kind::Array(_) => format!("{name}_{}", c + 1),
        }
    }

    /// Writes rows `x1,...,xn,component,value`. The header is written when
    /// `header` is set.
    pub fn write_csv<W: Write>(&self, w: &mut W, name: &str, header: bool) -> std::io::Result<()> {
        let n = self.grid.dim();
        if header {
            write_header(w, n)?;
        }
        let mut x = vec![0.0; n];
        for c in 0..self.comps.len() {
            let label = self.component_label(name, c);
            for p in 0..self.grid.len() {
                self.grid.point_into(p, &mut x);
                for v in &x {
                    write!(w, "{v:e},")?;
                }
                writeln!(w, "{label},{:e}", self.comps[c][p])?;
            }
        }
        Ok(())
    }
}

pub fn write_header<W: Write>(w: &mut W, n: usize) -> std::io::Result<()> {
    for a in 1..=n {
        write!(w, "x{a},")?;
    }
    writeln!(w, "component,value")
}

/// Evaluates an expression at every node, reporting the first failing node.
pub fn sample_expr(grid: &ChartGrid, e: &Expr) -> Result<Vec<f64>> {
    if let Some(c) = e.as_const() {
        return Ok(vec![c; grid.len()]);
    }
    let vals: Vec<std::result::Result<f64, _>> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; grid.dim()],
            |x, p| {
                grid.point_into(p, x);
                e.eval(x)
            },
        )
        .collect();
    let mut out = Vec::with_capacity(vals.len());
    for (p, v) in vals.into_iter().enumerate() {
        match v {
            Ok(v) => out.push(v),
            Err(source) => {
                return Err(Error::Sample {
                    coords: grid.point(p),
                    source,
                })
            }
        }
    }
    Ok(out)
}

pub fn fd_partial_values(grid: &ChartGrid, v: &[f64], axis: usize) -> Vec<f64> {
    let m = grid.nodes(axis);
    let s = grid.stride(axis);
    let h = grid.spacing(axis);
    let inv2h = 1.0 / (2.0 * h);
    (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let i = (p / s) % m;
            if i == 0 {
                (-3.0 * v[p] + 4.0 * v[p + s] - v[p + 2 * s]) * inv2h
            } else if i == m - 1 {
                (3.0 * v[p] - 4.0 * v[p - s] + v[p - 2 * s]) * inv2h
            } else {
                (v[p + s] - v[p - s]) * inv2h
            }
        })
        .collect()
}
