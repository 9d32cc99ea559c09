//! Constructive approximations on a chart: controlled lattice covers,
//! subordinate partitions of unity, vector fields rebuilt as `Σ h_p ∇f_p`,
//! and nonnegative functions rebuilt from radial bumps.
//!
//! All constructions are Euclidean in the chart coordinates. Pieces are
//! evaluated from closed-form profiles, so values and gradients at any point
//! are exact up to rounding.

mod compv;
mod cover;
mod rotsym;

pub use compv::{
    compv_approximate, compv_sweep, piece_bound, ApproxReport, ApproxRow, CompVApprox,
    CompVOptions, PieceStats, PieceValue,
};
pub use cover::{
    controlled_cover, partition_subordinate, ControlledCover, Partition, PartitionValue,
};
pub use rotsym::{rotsym_approximate, RadialBump, RotSymApprox, RotSymOptions};

use crate::fields::cutoff::{smoothstep, smoothstep_deriv};
use crate::fields::{ChartGrid, IndexBox};

/// Smooth floor on `[0, ∞)`: `H(s) = s + (1 − s)³/2` below 1 and `H(s) = s`
/// above, so `H ≥ max(s, 1/4)`, `|H'| ≤ 1` and `H` is C².
pub fn floor_fn(s: f64) -> f64 {
    let s = s.max(0.0);
    if s >= 1.0 {
        s
    } else {
        s + 0.5 * (1.0 - s).powi(3)
    }
}

pub fn floor_deriv(s: f64) -> f64 {
    let s = s.max(0.0);
    if s >= 1.0 {
        1.0
    } else {
        1.0 - 1.5 * (1.0 - s).powi(2)
    }
}

/// Radial plateau `S((outer − r)/(outer − inner))`: 1 on `r ≤ inner`, 0 on
/// `r ≥ outer`. Returns the value and its derivative in `r`.
pub(crate) fn plateau(r: f64, inner: f64, outer: f64) -> (f64, f64) {
    let w = outer - inner;
    let t = (outer - r) / w;
    (smoothstep(t), -smoothstep_deriv(t) / w)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Grid nodes in the closed ball `B_r(c)`.
pub(crate) fn nodes_in_ball(grid: &ChartGrid, c: &[f64], r: f64) -> Vec<usize> {
    let n = grid.dim();
    let mut b = grid.full_box();
    for a in 0..n {
        let h = grid.spacing(a);
        let lo = ((c[a] - r - grid.lo(a)) / h).ceil().max(0.0);
        let hi = ((c[a] + r - grid.lo(a)) / h)
            .floor()
            .min((grid.nodes(a) - 1) as f64);
        if hi < lo {
            return Vec::new();
        }
        b.lo[a] = lo as usize;
        b.hi[a] = hi as usize;
    }
    let mut x = vec![0.0; n];
    grid.box_nodes(&b)
        .into_iter()
        .filter(|&p| {
            grid.point_into(p, &mut x);
            x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r * r
        })
        .collect()
}

/// Grid nodes inside a coordinate box, or none when the box is empty.
pub(crate) fn region_nodes(grid: &ChartGrid, region: &[(f64, f64)]) -> Vec<usize> {
    if region.iter().any(|(a, b)| a > b) {
        return Vec::new();
    }
    match grid.snap_box(region) {
        Ok(b) => grid.box_nodes(&b),
        Err(_) => Vec::new(),
    }
}

/// Calls `f` with every integer point of the box `[lo, hi]`, axis 0 fastest.
pub(crate) fn odometer(lo: &[i64], hi: &[i64], mut f: impl FnMut(&[i64])) {
    if lo.iter().zip(hi).any(|(a, b)| a > b) {
        return;
    }
    let mut idx = lo.to_vec();
    loop {
        f(&idx);
        let mut a = 0;
        loop {
            if a == idx.len() {
                return;
            }
            if idx[a] < hi[a] {
                idx[a] += 1;
                break;
            }
            idx[a] = lo[a];
            a += 1;
        }
    }
}

pub(crate) fn interior_region(grid: &ChartGrid) -> Vec<(f64, f64)> {
    let b: IndexBox = grid.interior_box();
    grid.box_region(&b)
}
