use rayon::prelude::*;

use super::field::Field;
use super::grid::{ChartGrid, IndexBox};
use crate::error::{Error, Result};

/// Pairwise (cascade) summation with a fixed split, so the result does not
/// depend on thread scheduling.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if v.len() <= BLOCK {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    let (a, b) = v.split_at(mid);
    if v.len() > 1 << 14 {
        let (x, y) = rayon::join(|| pairwise_sum(a), || pairwise_sum(b));
        x + y
    } else {
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Composite trapezoid weight of node `p` on the box `b`.
fn trapezoid_weight(grid: &ChartGrid, b: &IndexBox, p: usize) -> f64 {
    let idx = grid.multi_index(p);
    let mut w = 1.0;
    for a in 0..grid.dim() {
        if b.lo[a] == b.hi[a] {
            return 0.0;
        }
        let h = grid.spacing(a);
        w *= if idx[a] == b.lo[a] || idx[a] == b.hi[a] {
            0.5 * h
        } else {
            h
        };
    }
    w
}

/// Trapezoid integral of nodal values over the index box.
pub fn integrate_values_box(grid: &ChartGrid, values: &[f64], b: &IndexBox) -> f64 {
    let nodes = grid.box_nodes(b);
    let terms: Vec<f64> = nodes
        .par_iter()
        .map(|&p| values[p] * trapezoid_weight(grid, b, p))
        .collect();
    pairwise_sum(&terms)
}

/// Trapezoid integral of nodal values over the whole grid.
pub fn integrate_values(grid: &ChartGrid, values: &[f64]) -> f64 {
    integrate_values_box(grid, values, &grid.full_box())
}

/// Composite trapezoid rule for `∫ f · density dx` over the whole chart
/// (density defaults to 1). Uses component 0 of `f`.
pub fn integrate_chart(f: &Field, density: Option<&Field>) -> f64 {
    let grid = f.grid();
    match density {
        None => integrate_values(grid, f.comp(0)),
        Some(d) => {
            let prod: Vec<f64> = f
                .comp(0)
                .iter()
                .zip(d.comp(0))
                .map(|(a, b)| a * b)
                .collect();
            integrate_values(grid, &prod)
        }
    }
}

/// `(∫_region |f|^p dx)^{1/p}` with `|f|` the Frobenius norm of the components.
/// The region is a coordinate box snapped inward to grid nodes.
pub fn lp_norm(f: &Field, p: f64, region: &[(f64, f64)]) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Invalid(format!(
            "exponent p = {p} must be at least 1"
        )));
    }
    let grid = f.grid();
    let b = grid.snap_box(region)?;
    Ok(lp_norm_box(f, p, &b))
}

pub fn lp_norm_box(f: &Field, p: f64, b: &IndexBox) -> f64 {
    let grid = f.grid();
    let vals: Vec<f64> = f.pointwise_norm().into_iter().map(|v| v.powf(p)).collect();
    integrate_values_box(grid, &vals, b).powf(1.0 / p)
}

/// L^p norm of raw nodal values (absolute value) on a box.
pub fn lp_norm_values(grid: &ChartGrid, values: &[f64], p: f64, b: &IndexBox) -> f64 {
    let vals: Vec<f64> = values.iter().map(|v| v.abs().powf(p)).collect();
    integrate_values_box(grid, &vals, b).powf(1.0 / p)
}
