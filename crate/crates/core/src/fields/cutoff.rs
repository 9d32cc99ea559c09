//! Smooth cutoff profiles built from the quintic smoothstep
//! `S(t) = t³(10 − 15t + 6t²)`, which is C² with `S' ≤ 15/8`.

use std::sync::Arc;

use super::field::Field;
use super::grid::ChartGrid;
use crate::error::{Error, Result};
use crate::expr::Expr;

/// Largest slope of the quintic smoothstep on `[0, 1]`.
pub const SMOOTHSTEP_MAX_SLOPE: f64 = 1.875;

pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

pub fn smoothstep_deriv(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

/// Smoothstep of an expression, clamped through `min`/`max`.
pub fn smoothstep_expr(t: Expr) -> Expr {
    let t = Expr::min(Expr::Const(1.0), Expr::max(Expr::Const(0.0), t));
    let poly = Expr::add(
        Expr::Const(10.0),
        Expr::mul(
            t.clone(),
            Expr::add(Expr::Const(-15.0), Expr::mul(Expr::Const(6.0), t.clone())),
        ),
    );
    Expr::mul(Expr::pow(t, Expr::Const(3.0)), poly)
}

/// `|x − c|²` as an expression.
pub fn squared_distance_expr(center: &[f64]) -> Expr {
    Expr::sum(center.iter().enumerate().map(|(a, &c)| {
        let d = Expr::sub(Expr::var(a), Expr::Const(c));
        Expr::pow(d, Expr::Const(2.0))
    }))
}

/// Test bump `max(0, 1 − |x − c|²/R²)^power`, supported in the closed ball
/// of radius `R`.
pub fn bump_expr(center: &[f64], radius: f64, power: f64) -> Expr {
    let r2 = squared_distance_expr(center);
    let inner = Expr::sub(
        Expr::Const(1.0),
        Expr::div(r2, Expr::Const(radius * radius)),
    );
    Expr::pow(Expr::max(Expr::Const(0.0), inner), Expr::Const(power))
}

/// Bump expression sampled on a grid, flagged with its bounding box as support.
pub fn bump_field(grid: Arc<ChartGrid>, center: &[f64], radius: f64, power: f64) -> Result<Field> {
    let e = bump_expr(center, radius, power);
    let support = center.iter().map(|&c| (c - radius, c + radius)).collect();
    Ok(Field::sample_scalar(grid, e)?.with_support(Some(support)))
}

/// Separable box cutoff: 0 within `m_b − 1` cells of a face, rising through a
/// smoothstep to 1 at `margin` cells.
pub fn box_cutoff_expr(grid: &ChartGrid, margin: usize) -> Expr {
    let mb = grid.margin();
    let mut out = Expr::Const(1.0);
    for a in 0..grid.dim() {
        let h = grid.spacing(a);
        let w = (margin + 1 - mb) as f64 * h;
        let c0 = grid.lo(a) + (mb - 1) as f64 * h;
        let c1 = grid.hi(a) - (mb - 1) as f64 * h;
        let lo = smoothstep_expr(Expr::div(
            Expr::sub(Expr::var(a), Expr::Const(c0)),
            Expr::Const(w),
        ));
        let hi = smoothstep_expr(Expr::div(
            Expr::sub(Expr::Const(c1), Expr::var(a)),
            Expr::Const(w),
        ));
        out = Expr::mul(out, Expr::mul(lo, hi));
    }
    out
}

/// Multiplies `f` by a smooth cutoff that is 1 at least `margin` cells from
/// every face and 0 on the boundary collar. The result carries the
/// compact-support flag.
pub fn restrict_compact(f: &Field, margin: usize) -> Result<Field> {
    let grid = f.grid();
    if margin < grid.margin() {
        return Err(Error::Invalid(format!(
            "margin {margin} is smaller than the grid collar {}",
            grid.margin()
        )));
    }
    for a in 0..grid.dim() {
        if 2 * margin > grid.nodes(a) - 1 {
            return Err(Error::Invalid(format!(
                "margin {margin} exceeds half the grid on axis {}",
                a + 1
            )));
        }
    }
    let cut_expr = box_cutoff_expr(grid, margin);
    let cut = Field::sample_scalar(grid.clone(), cut_expr)?;
    let mb = grid.margin();
    let support: Vec<(f64, f64)> = (0..grid.dim())
        .map(|a| {
            let h = grid.spacing(a);
            (
                grid.lo(a) + (mb - 1) as f64 * h,
                grid.hi(a) - (mb - 1) as f64 * h,
            )
        })
        .collect();
    let support = match f.support() {
        Some(s) => s
            .iter()
            .zip(&support)
            .map(|(x, y)| (x.0.max(y.0), x.1.min(y.1)))
            .collect(),
        None => support,
    };
    Ok(f.scale_by(&cut).with_support(Some(support)))
}
