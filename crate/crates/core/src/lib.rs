//! Chart-local numerical toolkit for Ricci and Bakry–Émery curvature of
//! low-regularity Riemannian metrics.
//!
//! Everything lives on a single coordinate chart sampled by a uniform grid.
//! Quantities can be computed either from exact symbolic derivatives of the
//! defining expressions or from finite differences, so the smooth formulas act
//! as oracles for the weak (integrated-by-parts) forms that only need first
//! derivatives of the metric.

pub mod catalog;
pub mod cli;
pub mod config;
pub mod curvature;
pub mod error;
pub mod expr;
pub mod fields;
pub mod gradapprox;
pub mod heat;
pub mod mollify;
pub mod weakform;

pub use error::{Error, Result};
pub use expr::{parse_expr, Expr};
pub use fields::{ChartGrid, Field, MetricField, Mode, WeightField};
