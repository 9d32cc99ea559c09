//! Chart grids, sampled fields, finite differences, quadrature and norms.

pub mod cutoff;
mod field;
mod grid;
mod metric;
pub mod quadrature;

use std::fmt;
use std::str::FromStr;

pub use cutoff::{bump_expr, bump_field, restrict_compact, smoothstep, smoothstep_expr};
pub use field::{
    fd_partial_values, sample_expr, write_header, Field, Kind, ScalarField, Tensor2Field,
    VectorField,
};
pub use grid::{ChartGrid, IndexBox, MAX_DIM};
pub use metric::{MetricExprs, MetricField, WeightField};
pub use quadrature::{integrate_chart, lp_norm, pairwise_sum};

use std::sync::Arc;

use crate::error::Result;
use crate::expr::Expr;

/// How derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Exact derivatives of the expression providers.
    Analytic,
    /// Second-order finite differences of sampled values.
    Fd,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytic" => Ok(Mode::Analytic),
            "fd" => Ok(Mode::Fd),
            other => Err(format!("unknown mode `{other}` (expected analytic or fd)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Analytic => "analytic",
            Mode::Fd => "fd",
        })
    }
}

/// Samples one expression per component; the expressions stay attached.
pub fn sample_field(grid: Arc<ChartGrid>, kind: Kind, exprs: Vec<Expr>) -> Result<Field> {
    Field::sample(grid, kind, exprs)
}

/// Finite-difference partial derivative of every component along `axis`.
pub fn fd_partial(f: &Field, axis: usize) -> Field {
    f.fd_partial(axis)
}
