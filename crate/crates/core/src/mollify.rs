//! Chart-local mollification and the convergence experiments built on it.

use std::io::Write;

use rayon::prelude::*;

use crate::curvature;
use crate::error::{Error, Result};
use crate::fields::quadrature::{lp_norm_box, lp_norm_values};
use crate::fields::{ChartGrid, Field, IndexBox, Kind, MetricField, Mode, MAX_DIM};

/// Unnormalised radial profile `exp(−1/(1 − r²))` on `r < 1`.
pub fn kernel_profile(r: f64) -> f64 {
    if r < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// Sampled kernel `ρ_ε` on a grid, renormalised to discrete mass 1.
#[derive(Debug, Clone)]
pub struct Mollifier {
    eps: f64,
    radius: [usize; MAX_DIM],
    offsets: Vec<[isize; MAX_DIM]>,
    weights: Vec<f64>,
}

impl Mollifier {
    pub fn new(grid: &ChartGrid, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Invalid(format!("ε must be positive, got {eps}")));
        }
        let n = grid.dim();
        let mut radius = [0usize; MAX_DIM];
        for a in 0..n {
            let h = grid.spacing(a);
            if eps <= h {
                return Err(Error::Resolution(format!(
                    "ε = {eps} does not exceed the spacing {h} on axis {}",
                    a + 1
                )));
            }
            radius[a] = (eps / h).ceil() as usize;
        }
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let mut idx = [0isize; MAX_DIM];
        for a in 0..n {
            idx[a] = -(radius[a] as isize);
        }
        loop {
            let r2: f64 = (0..n)
                .map(|a| (idx[a] as f64 * grid.spacing(a) / eps).powi(2))
                .sum();
            let w = kernel_profile(r2.sqrt());
            if w > 0.0 {
                offsets.push(idx);
                weights.push(w);
            }
            let mut a = 0;
            loop {
                if a == n {
                    let mass: f64 = weights.iter().sum();
                    for w in &mut weights {
                        *w /= mass;
                    }
                    return Ok(Mollifier {
                        eps,
                        radius,
                        offsets,
                        weights,
                    });
                }
                idx[a] += 1;
                if idx[a] <= radius[a] as isize {
                    break;
                }
                idx[a] = -(radius[a] as isize);
                a += 1;
            }
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Stencil radius `⌈ε/h_a⌉` in cells per axis.
    pub fn radius(&self, axis: usize) -> usize {
        self.radius[axis]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn offsets(&self) -> &[[isize; MAX_DIM]] {
        &self.offsets
    }

    /// Shrinks a node box by the stencil radius on every face.
    pub fn shrink(&self, b: &IndexBox, n: usize) -> IndexBox {
        let mut out = *b;
        for a in 0..n {
            out.lo[a] = b.lo[a] + self.radius[a];
            out.hi[a] = b.hi[a].saturating_sub(self.radius[a]);
        }
        out
    }
}

/// Componentwise discrete convolution `ρ_ε ∗ T`. The result is computed on
/// the input's valid region shrunk by the stencil radius and flagged with
/// that region; outside it the input values are kept.
pub fn convolve_field(t: &Field, m: &Mollifier) -> Result<Field> {
    let grid = t.grid().clone();
    let n = grid.dim();
    let source = t.valid().copied().unwrap_or_else(|| grid.full_box());
    let valid = m.shrink(&source, n);
    if valid.is_empty(n) {
        return Err(Error::EpsilonTooLarge {
            eps: m.eps(),
            reason: "the shrunken domain K_ε is empty".into(),
        });
    }
    let flat: Vec<isize> = m
        .offsets()
        .iter()
        .map(|o| (0..n).map(|a| o[a] * grid.stride(a) as isize).sum())
        .collect();
    let nodes = grid.box_nodes(&valid);
    let comps = t
        .components()
        .iter()
        .map(|c| {
            let vals: Vec<f64> = nodes
                .par_iter()
                .map(|&p| {
                    flat.iter()
                        .zip(m.weights())
                        .map(|(&off, &w)| w * c[(p as isize + off) as usize])
                        .sum()
                })
                .collect();
            let mut out = c.clone();
            for (&p, v) in nodes.iter().zip(vals) {
                out[p] = v;
            }
            out
        })
        .collect();
    let mut out = Field::from_components(grid, t.kind(), comps)?.with_valid(Some(valid));
    if t.is_symmetric() {
        out = out.into_symmetric()?;
    }
    Ok(out.with_support(t.support().map(|s| s.to_vec())))
}

/// Geometric halving `max, max/2, ...` with `count` entries.
pub fn default_eps_list(max: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| max / 2f64.powi(i as i32)).collect()
}

/// One row of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub value: f64,
    pub value_w1p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log value` against `log ε`; descriptive only.
    pub slope: Option<f64>,
    /// Values strictly decreasing along the ε-list.
    pub monotone: bool,
    pub warnings: Vec<String>,
}

impl ConvergenceReport {
    fn new(rows: Vec<ConvergenceRow>, warnings: Vec<String>) -> Self {
        let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
        let vals: Vec<f64> = rows.iter().map(|r| r.value).collect();
        let monotone = vals.windows(2).all(|w| w[1] < w[0]);
        ConvergenceReport {
            slope: fit_slope(&eps, &vals),
            monotone,
            rows,
            warnings,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    /// `epsilon,value[,value_w1p]` rows followed by `slope,<fitted>`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let w1p = self.rows.iter().any(|r| r.value_w1p.is_some());
        writeln!(
            w,
            "{}",
            if w1p {
                "epsilon,value,value_w1p"
            } else {
                "epsilon,value"
            }
        )?;
        for r in &self.rows {
            write!(w, "{:e},{:e}", r.epsilon, r.value)?;
            if w1p {
                write!(w, ",{:e}", r.value_w1p.unwrap_or(f64::NAN))?;
            }
            writeln!(w)?;
        }
        match self.slope {
            Some(s) => writeln!(w, "slope,{s:e}"),
            None => writeln!(w, "slope,nan"),
        }
    }
}

/// Least-squares slope in log-log coordinates over the positive values.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

fn check_eps_list(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::Invalid("ε-list is empty".into()));
    }
    if eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid(
            "ε-list must be positive and strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Snaps `k` to nodes and checks it lies `extra` nodes inside `valid`.
fn region_in(
    grid: &ChartGrid,
    k: &[(f64, f64)],
    valid: &IndexBox,
    extra: usize,
    eps: f64,
) -> Result<IndexBox> {
    let b = grid.snap_box(k)?;
    let n = grid.dim();
    if b.is_empty(n) {
        return Err(Error::Invalid("region K contains no grid nodes".into()));
    }
    for a in 0..n {
        if b.lo[a] < valid.lo[a] + extra || b.hi[a] + extra > valid.hi[a] {
            return Err(Error::EpsilonTooLarge {
                eps,
                reason: format!("K leaves the shrunken domain K_ε on axis {}", a + 1),
            });
        }
    }
    Ok(b)
}

fn valid_box(f: &Field) -> IndexBox {
    f.valid().copied().unwrap_or_else(|| f.grid().full_box())
}

/// `ε ‖∂_j (ρ_ε ∗ f)‖_{L^p(K)}`, reported as the maximum over axes `j`.
pub fn friedrichs_decay(
    f: &Field,
    p: f64,
    k: &[(f64, f64)],
    eps: &[f64],
) -> Result<ConvergenceReport> {
    check_eps_list(eps)?;
    if !(p >= 1.0) {
        return Err(Error::Invalid(format!(
            "exponent p = {p} must be at least 1"
        )));
    }
    let grid = f.grid();
    let n = grid.dim();
    let rows = eps
        .par_iter()
        .map(|&e| {
            let m = Mollifier::new(grid, e)?;
            let c = convolve_field(f, &m)?;
            let b = region_in(grid, k, &valid_box(&c), 1, e)?;
            let value = (0..n)
                .map(|a| e * lp_norm_box(&c.fd_partial(a), p, &b))
                .fold(0.0, f64::max);
            Ok(ConvergenceRow {
                epsilon: e,
                value,
                value_w1p: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport::new(rows, Vec::new()))
}

/// Smooth family `ε ↦ a_ε` standing in for `a ∗ ρ_ε`.
pub type SmoothFamily<'a> = &'a (dyn Fn(f64) -> Result<Field> + Sync);

/// Commutator `(a ∗ ρ_ε)(ρ_ε ∗ f) − ρ_ε ∗ (a f)` in `L^{p/2}(K)` and
/// `W^{1,p/2}(K)`. With `a_eps` the first factor is `a_ε`, whose rate
/// `‖a_ε − a‖_{L^p(K)} ≤ C ε` is checked and reported as a warning.
pub fn friedrichs_commutator(
    a: &Field,
    f: &Field,
    p: f64,
    k: &[(f64, f64)],
    eps: &[f64],
    a_eps: Option<SmoothFamily<'_>>,
) -> Result<ConvergenceReport> {
    check_eps_list(eps)?;
    if !(p >= 2.0) {
        return Err(Error::Invalid(format!(
            "exponent p = {p} must be at least 2"
        )));
    }
    if a.kind() != Kind::Scalar || f.kind() != Kind::Scalar {
        return Err(Error::Invalid("commutator needs scalar fields".into()));
    }
    let q = p / 2.0;
    let grid = a.grid();
    let n = grid.dim();
    let af = a.scale_by(f).with_exprs(None);
    let rows = eps
        .par_iter()
        .map(|&e| {
            let m = Mollifier::new(grid, e)?;
            let fe = convolve_field(f, &m)?;
            let afe = convolve_field(&af, &m)?;
            let (ae, rate) = match a_eps {
                Some(fam) => {
                    let ae = fam(e)?;
                    let b = region_in(grid, k, &grid.full_box(), 0, e)?;
                    let diff: Vec<f64> = ae
                        .comp(0)
                        .iter()
                        .zip(a.comp(0))
                        .map(|(x, y)| x - y)
                        .collect();
                    (ae, Some(lp_norm_values(grid, &diff, p, &b)))
                }
                None => (convolve_field(a, &m)?, None),
            };
            let valid = valid_box(&fe)
                .intersect(&valid_box(&afe), n)
                .intersect(&valid_box(&ae), n);
            let b = region_in(grid, k, &valid, 1, e)?;
            let comm: Vec<f64> = (0..grid.len())
                .map(|p| ae.at(p) * fe.at(p) - afe.at(p))
                .collect();
            let comm = Field::scalar(grid.clone(), comm)?;
            let l = lp_norm_box(&comm, q, &b);
            let mut w = l.powf(q);
            for ax in 0..n {
                w += lp_norm_box(&comm.fd_partial(ax), q, &b).powf(q);
            }
            Ok((
                ConvergenceRow {
                    epsilon: e,
                    value: l,
                    value_w1p: Some(w.powf(1.0 / q)),
                },
                rate,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    let dist: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.1.map(|d| (r.0.epsilon, d)))
        .collect();
    let (de, dv): (Vec<f64>, Vec<f64>) = dist.into_iter().unzip();
    if let Some(s) = fit_slope(&de, &dv) {
        if s < 0.9 {
            warnings.push(format!(
                "a_ε violates the assumed rate ‖a_ε − a‖_{{L^p(K)}} ≤ Cε: fitted order {s:.3}"
            ));
        }
    }
    Ok(ConvergenceReport::new(
        rows.into_iter().map(|r| r.0).collect(),
        warnings,
    ))
}

/// `‖Ric[g_ε] − ρ_ε ∗ Ric[g]‖_{L^{p/2}(K)}` with both Ricci tensors in FD mode.
pub fn ricci_mollify_convergence(
    g: &MetricField,
    p: f64,
    k: &[(f64, f64)],
    eps: &[f64],
) -> Result<ConvergenceReport> {
    check_eps_list(eps)?;
    if !(p >= 2.0) {
        return Err(Error::Invalid(format!(
            "exponent p = {p} must be at least 2"
        )));
    }
    let grid = g.grid();
    let n = grid.dim();
    let ric = curvature::ricci(g, Mode::Fd)?;
    let rows = eps
        .par_iter()
        .map(|&e| {
            let m = Mollifier::new(grid, e)?;
            let ge = convolve_field(g.field(), &m)?;
            let valid = valid_box(&ge);
            let ric_e = curvature::ricci(&MetricField::from_field(ge.with_valid(None))?, Mode::Fd)?;
            let ric_m = convolve_field(&ric, &m)?;
            let b = region_in(grid, k, &valid.intersect(&valid_box(&ric_m), n), 2, e)?;
            let diff: Vec<Vec<f64>> = (0..n * n)
                .map(|c| {
                    ric_e
                        .comp(c)
                        .iter()
                        .zip(ric_m.comp(c))
                        .map(|(x, y)| x - y)
                        .collect()
                })
                .collect();
            let diff = Field::from_components(grid.clone(), Kind::Tensor2, diff)?;
            Ok(ConvergenceRow {
                epsilon: e,
                value: lp_norm_box(&diff, p / 2.0, &b),
                value_w1p: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport::new(rows, Vec::new()))
}
