use rayon::prelude::*;

use super::{floor_deriv, floor_fn, interior_region, norm, odometer, plateau, region_nodes};
use crate::error::{Error, Result};
use crate::fields::{ChartGrid, Field, MAX_DIM};

/// Dense lookup from lattice points to centre indices.
#[derive(Debug, Clone)]
struct LatticeIndex {
    spacing: f64,
    lo: Vec<i64>,
    dims: Vec<usize>,
    table: Vec<usize>,
}

impl LatticeIndex {
    fn new(spacing: f64, lattice: &[Vec<i64>], n: usize) -> Self {
        if lattice.is_empty() {
            return LatticeIndex {
                spacing,
                lo: vec![0; n],
                dims: vec![0; n],
                table: Vec::new(),
            };
        }
        let lo: Vec<i64> = (0..n)
            .map(|a| lattice.iter().map(|z| z[a]).min().unwrap())
            .collect();
        let hi: Vec<i64> = (0..n)
            .map(|a| lattice.iter().map(|z| z[a]).max().unwrap())
            .collect();
        let dims: Vec<usize> = (0..n).map(|a| (hi[a] - lo[a] + 1) as usize).collect();
        let mut table = vec![usize::MAX; dims.iter().product()];
        let mut out = LatticeIndex {
            spacing,
            lo,
            dims,
            table: Vec::new(),
        };
        for (i, z) in lattice.iter().enumerate() {
            table[out.slot(z).unwrap()] = i;
        }
        out.table = table;
        out
    }

    fn slot(&self, z: &[i64]) -> Option<usize> {
        let mut s = 0;
        let mut stride = 1;
        for a in 0..z.len() {
            let k = z[a] - self.lo[a];
            if k < 0 || k as usize >= self.dims[a] {
                return None;
            }
            s += k as usize * stride;
            stride *= self.dims[a];
        }
        Some(s)
    }

    /// Calls `f(i, x − y_i, |x − y_i|)` for every centre with `|x − y_i| < r`.
    fn for_each_within(&self, x: &[f64], r: f64, mut f: impl FnMut(usize, &[f64], f64)) {
        if self.table.is_empty() {
            return;
        }
        let n = x.len();
        let s = self.spacing;
        let lo: Vec<i64> = (0..n).map(|a| ((x[a] - r) / s).ceil() as i64).collect();
        let hi: Vec<i64> = (0..n).map(|a| ((x[a] + r) / s).floor() as i64).collect();
        let mut d = [0.0; MAX_DIM];
        odometer(&lo, &hi, |z| {
            if let Some(slot) = self.slot(z) {
                let i = self.table[slot];
                if i != usize::MAX {
                    for a in 0..n {
                        d[a] = x[a] - z[a] as f64 * s;
                    }
                    let dist = norm(&d[..n]);
                    if dist < r {
                        f(i, &d[..n], dist);
                    }
                }
            }
        });
    }
}

/// Centres `y_i` on the lattice `(δ/2√n)ℤⁿ` within `δ/2` of a box `K`.
#[derive(Debug, Clone)]
pub struct ControlledCover {
    pub delta: f64,
    /// `dist(K, chart interior boundary)/12`.
    pub delta0: f64,
    pub spacing: f64,
    pub region: Vec<(f64, f64)>,
    pub centers: Vec<Vec<f64>>,
    pub lattice: Vec<Vec<i64>>,
    /// Largest number of balls `B_{2δ}(y_i)` containing one grid node.
    pub overlap: usize,
    /// Every grid node of `K` lies in some `B_δ(y_i)`.
    pub covers_region: bool,
    index: LatticeIndex,
}

impl ControlledCover {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.region.len()
    }

    /// `f(i, x − y_i, |x − y_i|)` for every centre closer than `r`.
    pub fn for_each_within(&self, x: &[f64], r: f64, f: impl FnMut(usize, &[f64], f64)) {
        self.index.for_each_within(x, r, f)
    }

    pub fn count_within(&self, x: &[f64], r: f64) -> usize {
        let mut k = 0;
        self.for_each_within(x, r, |_, _, _| k += 1);
        k
    }
}

fn region_is_empty(region: &[(f64, f64)]) -> bool {
    region.iter().any(|(a, b)| a > b)
}

/// Lattice cover of `K` whose doubled balls stay `δ₀`-controlled; `K` is a
/// coordinate box (an empty box yields no centres).
pub fn controlled_cover(
    grid: &ChartGrid,
    region: &[(f64, f64)],
    delta: f64,
) -> Result<ControlledCover> {
    let n = grid.dim();
    if region.len() != n {
        return Err(Error::Invalid(format!(
            "region has {} axes, grid has {n}",
            region.len()
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::Invalid(format!("δ must be positive, got {delta}")));
    }
    let spacing = delta / (2.0 * (n as f64).sqrt());
    let empty = region_is_empty(region);
    let delta0 = if empty {
        f64::INFINITY
    } else {
        let inner = interior_region(grid);
        let d = (0..n)
            .map(|a| (region[a].0 - inner[a].0).min(inner[a].1 - region[a].1))
            .fold(f64::INFINITY, f64::min);
        if d <= 0.0 {
            return Err(Error::Support(format!(
                "region {region:?} reaches the boundary collar"
            )));
        }
        d / 12.0
    };
    if delta >= delta0 {
        return Err(Error::DeltaTooLarge { delta, delta0 });
    }

    let mut lattice = Vec::new();
    let mut centers = Vec::new();
    if !empty {
        let lo: Vec<i64> = region
            .iter()
            .map(|r| ((r.0 - 0.5 * delta) / spacing).ceil() as i64)
            .collect();
        let hi: Vec<i64> = region
            .iter()
            .map(|r| ((r.1 + 0.5 * delta) / spacing).floor() as i64)
            .collect();
        odometer(&lo, &hi, |z| {
            let y: Vec<f64> = z.iter().map(|&k| k as f64 * spacing).collect();
            let dist2: f64 = (0..n)
                .map(|a| {
                    (region[a].0 - y[a])
                        .max(y[a] - region[a].1)
                        .max(0.0)
                        .powi(2)
                })
                .sum();
            if dist2 <= 0.25 * delta * delta {
                lattice.push(z.to_vec());
                centers.push(y);
            }
        });
    }
    let index = LatticeIndex::new(spacing, &lattice, n);
    let mut cover = ControlledCover {
        delta,
        delta0,
        spacing,
        region: region.to_vec(),
        centers,
        lattice,
        overlap: 0,
        covers_region: true,
        index,
    };
    cover.overlap = (0..grid.len())
        .into_par_iter()
        .map(|p| cover.count_within(&grid.point(p), 2.0 * delta))
        .max()
        .unwrap_or(0);
    cover.covers_region = region_nodes(grid, region)
        .into_par_iter()
        .all(|p| cover.count_within(&grid.point(p), delta) > 0);
    Ok(cover)
}

/// `χ_i` and `∇χ_i` at one point.
#[derive(Debug, Clone, Copy)]
pub struct PartitionValue {
    pub index: usize,
    pub value: f64,
    pub grad: [f64; MAX_DIM],
}

/// Partition `χ_i = η_i / H(Σ_j η_j)` with `η_i` a radial plateau equal to 1
/// on `B_δ(y_i)` and supported in `B_{2δ}(y_i)`.
#[derive(Debug, Clone)]
pub struct Partition {
    pub cover: ControlledCover,
}

impl Partition {
    pub fn delta(&self) -> f64 {
        self.cover.delta
    }

    pub fn len(&self) -> usize {
        self.cover.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cover.is_empty()
    }

    /// `η(|d|)` and its gradient for an offset `d = x − y_i`.
    pub fn eta(&self, d: &[f64], r: f64) -> (f64, [f64; MAX_DIM]) {
        let delta = self.delta();
        let (v, dv) = plateau(r, delta, 2.0 * delta);
        let mut g = [0.0; MAX_DIM];
        if r > 0.0 && dv != 0.0 {
            for a in 0..d.len() {
                g[a] = dv * d[a] / r;
            }
        }
        (v, g)
    }

    /// `Σ_j η_j` and its gradient.
    pub fn eta_sum(&self, x: &[f64]) -> (f64, [f64; MAX_DIM]) {
        let n = x.len();
        let mut s = 0.0;
        let mut gs = [0.0; MAX_DIM];
        self.cover
            .for_each_within(x, 2.0 * self.delta(), |_, d, r| {
                let (v, g) = self.eta(d, r);
                s += v;
                for a in 0..n {
                    gs[a] += g[a];
                }
            });
        (s, gs)
    }

    /// `χ_i` from `η_i` and the precomputed `Σ η`.
    pub fn chi_from(&self, d: &[f64], r: f64, sum: f64, grad_sum: &[f64]) -> (f64, [f64; MAX_DIM]) {
        let (e, ge) = self.eta(d, r);
        let hs = floor_fn(sum);
        let dh = floor_deriv(sum);
        let mut g = [0.0; MAX_DIM];
        for a in 0..d.len() {
            g[a] = ge[a] / hs - e * dh * grad_sum[a] / (hs * hs);
        }
        (e / hs, g)
    }

    /// Nonzero members at `x`, ordered by centre index.
    pub fn eval(&self, x: &[f64]) -> Vec<PartitionValue> {
        let (s, gs) = self.eta_sum(x);
        let mut out = Vec::new();
        self.cover
            .for_each_within(x, 2.0 * self.delta(), |i, d, r| {
                let (value, grad) = self.chi_from(d, r, s, &gs);
                if value != 0.0 || grad.iter().any(|g| *g != 0.0) {
                    out.push(PartitionValue {
                        index: i,
                        value,
                        grad,
                    });
                }
            });
        out.sort_by_key(|v| v.index);
        out
    }

    /// `Σ_i χ_i(x)`.
    pub fn sum(&self, x: &[f64]) -> f64 {
        let (s, _) = self.eta_sum(x);
        s / floor_fn(s)
    }

    /// `max_i sup |∇χ_i|` over the grid nodes.
    pub fn max_gradient(&self, grid: &ChartGrid) -> f64 {
        (0..grid.len())
            .into_par_iter()
            .map(|p| {
                let n = grid.dim();
                self.eval(&grid.point(p))
                    .iter()
                    .map(|v| norm(&v.grad[..n]))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Partition of unity subordinate to the lattice cover of `supp φ` (the
/// compact-support box of `φ`; `φ ≡ 0` gives an empty partition).
pub fn partition_subordinate(phi: &Field, delta: f64) -> Result<Partition> {
    let grid = phi.grid();
    let n = grid.dim();
    let region: Vec<(f64, f64)> = match phi.support() {
        Some(s) => s.to_vec(),
        None if phi.components().iter().all(|c| c.iter().all(|v| *v == 0.0)) => vec![(1.0, 0.0); n],
        None => return Err(Error::Support("φ must carry a compact-support box".into())),
    };
    Ok(Partition {
        cover: controlled_cover(grid, &region, delta)?,
    })
}
