use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use super::cover::{partition_subordinate, Partition};
use super::{nodes_in_ball, norm, plateau};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::quadrature::integrate_values;
use crate::fields::{sample_expr, ChartGrid, Field, Kind, MAX_DIM};

/// Sub-lattice resolution per axis of the ball-average quadrature.
const AVERAGE_POINTS: usize = 8;

#[derive(Debug, Clone, Copy)]
pub struct CompVOptions {
    /// Multiplies `δ(ε) = ε / (8n²(1 + ‖DX‖_∞ + ‖D²X‖_∞))`.
    pub delta_scale: f64,
}

impl Default for CompVOptions {
    fn default() -> Self {
        CompVOptions { delta_scale: 1.0 }
    }
}

/// `C₂(n) = 2 (12n)ⁿ (n² + 1)`.
pub fn piece_bound(n: usize) -> usize {
    2 * (12 * n).pow(n as u32) * (n * n + 1)
}

/// Sup norms of one piece `(h_p, f_p)` over the grid nodes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PieceStats {
    pub sup_h: f64,
    pub grad_h: f64,
    pub sup_f: f64,
    pub grad_f: f64,
}

impl PieceStats {
    fn absorb(&mut self, o: &PieceStats) {
        self.sup_h = self.sup_h.max(o.sup_h);
        self.grad_h = self.grad_h.max(o.grad_h);
        self.sup_f = self.sup_f.max(o.sup_f);
        self.grad_f = self.grad_f.max(o.grad_f);
    }
}

/// Values and gradients of one piece at a point.
#[derive(Debug, Clone, Copy, Default)]
pub struct PieceValue {
    pub h: f64,
    pub grad_h: [f64; MAX_DIM],
    pub f: f64,
    pub grad_f: [f64; MAX_DIM],
}

/// One `ε` of an approximation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxRow {
    pub epsilon: f64,
    pub delta: f64,
    pub centers: usize,
    pub q: usize,
    pub err_w11: f64,
    /// `‖X − X̃‖_{L¹}` and `‖D(X − X̃)‖_{L¹}`, the two parts of `err_w11`.
    pub err_l1: f64,
    pub err_d_l1: f64,
    pub err_linf: f64,
    pub max_sup_h: f64,
    pub max_grad_h: f64,
    pub max_sup_f: f64,
    pub max_grad_f: f64,
    /// Largest nodewise gap between the piece sum and the direct assembly.
    pub identity_error: f64,
    /// Measured constants of the piece bounds.
    pub c_sup_f: f64,
    pub c_grad_h: f64,
    pub c_grad_f: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ApproxReport {
    pub rows: Vec<ApproxRow>,
}

impl ApproxReport {
    /// Ratios `err_w11(ε_k) / err_w11(ε_{k+1})`.
    pub fn w11_ratios(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| w[0].err_w11 / w[1].err_w11)
            .collect()
    }

    /// `max ‖∇h_p‖_∞ · ε` per row.
    pub fn grad_h_scaled(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.max_grad_h * r.epsilon).collect()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "epsilon,q,err_w11,err_linf,max_grad_h,max_sup_f")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{},{:e},{:e},{:e},{:e}",
                r.epsilon, r.q, r.err_w11, r.err_linf, r.max_grad_h, r.max_sup_f
            )?;
        }
        Ok(())
    }
}

/// `X̃ = Σ_ξ χ_ξ ∇α_ξ + Σ_{ξ,k,l} χ_ξ ρ^k_ξ ∇η^{lk}_ξ` for one `ε`.
#[derive(Debug, Clone)]
pub struct CompVApprox {
    pub epsilon: f64,
    pub delta: f64,
    pub partition: Partition,
    /// Ball averages `A_i` over `B_{2δ}(y_i)`.
    pub averages: Vec<Vec<f64>>,
    /// `B_i^{lk} = ∂_k X^l(y_i)`, row-major in `(l, k)`.
    pub linear: Vec<Vec<f64>>,
    /// Residue class of each centre in `(ℤ/12nℤ)ⁿ`, flattened.
    pub classes: Vec<usize>,
    /// Assembled `X̃` on the grid.
    pub xtilde: Field,
    /// `∂_m X̃^l` at component `l·n + m`.
    pub dxtilde: Field,
    /// Sup norms per nonempty piece index.
    pub stats: BTreeMap<usize, PieceStats>,
    pub row: ApproxRow,
}

/// Per-centre profile values at one point.
struct Local {
    psi: f64,
    grad_psi: [f64; MAX_DIM],
}

impl CompVApprox {
    pub fn dim(&self) -> usize {
        self.partition.cover.dim()
    }

    /// Pieces per residue class: `(χ, α)` then `(χρ^k, η^{lk})`.
    pub fn slots(&self) -> usize {
        let n = self.dim();
        1 + n * n
    }

    /// Structural piece count `(12n)ⁿ (n² + 1)`.
    pub fn total_pieces(&self) -> usize {
        let n = self.dim();
        (12 * n).pow(n as u32) * self.slots()
    }

    pub fn q(&self) -> usize {
        self.row.q
    }

    fn local(&self, r: f64, d: &[f64]) -> Local {
        let delta = self.delta;
        let (psi, dpsi) = plateau(r, 2.0 * delta, 3.0 * delta);
        let mut grad_psi = [0.0; MAX_DIM];
        if r > 0.0 && dpsi != 0.0 {
            for a in 0..d.len() {
                grad_psi[a] = dpsi * d[a] / r;
            }
        }
        Local { psi, grad_psi }
    }

    /// Per-centre contributions to every slot at one point, with `Σ η` given.
    fn member_pieces(
        &self,
        i: usize,
        d: &[f64],
        r: f64,
        sum: f64,
        grad_sum: &[f64],
    ) -> Vec<PieceValue> {
        let n = d.len();
        let loc = self.local(r, d);
        let (chi, gchi) = if r < 2.0 * self.delta {
            self.partition.chi_from(d, r, sum, grad_sum)
        } else {
            (0.0, [0.0; MAX_DIM])
        };
        let a = &self.averages[i];
        let b = &self.linear[i];
        let mut out = Vec::with_capacity(1 + n * n);
        let ad: f64 = (0..n).map(|j| a[j] * d[j]).sum();
        let mut alpha = PieceValue {
            h: chi,
            grad_h: gchi,
            f: loc.psi * ad,
            ..Default::default()
        };
        for j in 0..n {
            alpha.grad_f[j] = ad * loc.grad_psi[j] + loc.psi * a[j];
        }
        out.push(alpha);
        for k in 0..n {
            // ρ^k = ψ d_k
            let rho = loc.psi * d[k];
            let mut grho = [0.0; MAX_DIM];
            for j in 0..n {
                grho[j] = d[k] * loc.grad_psi[j] + if j == k { loc.psi } else { 0.0 };
            }
            for l in 0..n {
                let blk = b[l * n + k];
                let mut pv = PieceValue {
                    h: chi * rho,
                    f: loc.psi * blk * d[l],
                    ..Default::default()
                };
                for j in 0..n {
                    pv.grad_h[j] = gchi[j] * rho + chi * grho[j];
                    pv.grad_f[j] =
                        blk * (d[l] * loc.grad_psi[j] + if j == l { loc.psi } else { 0.0 });
                }
                out.push(pv);
            }
        }
        out
    }

    /// Value of piece `p` at `x`, summing every member of its class.
    pub fn piece(&self, p: usize, x: &[f64]) -> PieceValue {
        let n = x.len();
        let slots = self.slots();
        let (class, slot) = (p / slots, p % slots);
        let (s, gs) = self.partition.eta_sum(x);
        // class sums of the factors, then the products
        let mut chi = 0.0;
        let mut gchi = [0.0; MAX_DIM];
        let mut fsum = 0.0;
        let mut gf = [0.0; MAX_DIM];
        let mut rho = 0.0;
        let mut grho = [0.0; MAX_DIM];
        self.partition
            .cover
            .for_each_within(x, 3.0 * self.delta, |i, d, r| {
                if self.classes[i] != class {
                    return;
                }
                let pieces = self.member_pieces(i, d, r, s, &gs);
                let (c, gc) = if r < 2.0 * self.delta {
                    self.partition.chi_from(d, r, s, &gs)
                } else {
                    (0.0, [0.0; MAX_DIM])
                };
                chi += c;
                for a in 0..n {
                    gchi[a] += gc[a];
                }
                fsum += pieces[slot].f;
                for a in 0..n {
                    gf[a] += pieces[slot].grad_f[a];
                }
                if slot > 0 {
                    let k = (slot - 1) / n;
                    let loc = self.local(r, d);
                    rho += loc.psi * d[k];
                    for a in 0..n {
                        grho[a] += d[k] * loc.grad_psi[a] + if a == k { loc.psi } else { 0.0 };
                    }
                }
            });
        let mut out = PieceValue {
            f: fsum,
            grad_f: gf,
            ..Default::default()
        };
        if slot == 0 {
            out.h = chi;
            out.grad_h = gchi;
        } else {
            out.h = chi * rho;
            for a in 0..n {
                out.grad_h[a] = gchi[a] * rho + chi * grho[a];
            }
        }
        out
    }
}

/// Frobenius sup over the grid of a family of sampled expressions.
fn sup_frobenius(grid: &ChartGrid, exprs: &[Expr]) -> Result<f64> {
    let vals = exprs
        .iter()
        .map(|e| sample_expr(grid, e))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..grid.len())
        .map(|p| vals.iter().map(|v| v[p] * v[p]).sum::<f64>().sqrt())
        .fold(0.0, f64::max))
}

fn residue_class(z: &[i64], n: usize) -> usize {
    let m = 12 * n as i64;
    z.iter().rev().fold(0usize, |acc, &k| {
        acc * m as usize + k.rem_euclid(m) as usize
    })
}

/// Average of `X` over `B_r(y)` with a centrally symmetric sub-lattice rule.
fn ball_average(x: &[Expr], y: &[f64], r: f64) -> Result<Vec<f64>> {
    let n = y.len();
    let k = AVERAGE_POINTS as i64;
    let mut acc = vec![0.0; n];
    let mut count = 0usize;
    let mut pt = vec![0.0; n];
    let mut err = None;
    super::odometer(&vec![0; n], &vec![k - 1; n], |idx| {
        let u: Vec<f64> = idx
            .iter()
            .map(|&j| -1.0 + (2 * j + 1) as f64 / k as f64)
            .collect();
        if norm(&u) > 1.0 {
            return;
        }
        for a in 0..n {
            pt[a] = y[a] + r * u[a];
        }
        for (c, e) in x.iter().enumerate() {
            match e.eval(&pt) {
                Ok(v) => acc[c] += v,
                Err(e) => err = Some(e),
            }
        }
        count += 1;
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    Ok(acc.into_iter().map(|v| v / count as f64).collect())
}

/// Rebuilds a compactly supported smooth vector field as a sum of products
/// `h_p ∇f_p`, grouped by residue class so that the piece count is bounded
/// independently of `ε`.
pub fn compv_approximate(x: &Field, eps: f64, opts: CompVOptions) -> Result<CompVApprox> {
    if x.kind() != Kind::Vector {
        return Err(Error::Invalid("X must be a vector field".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("ε must be positive, got {eps}")));
    }
    if !(opts.delta_scale > 0.0) {
        return Err(Error::Invalid(format!(
            "δ scale must be positive, got {}",
            opts.delta_scale
        )));
    }
    let exprs = x.exprs().ok_or(Error::MissingAnalytic("X"))?.to_vec();
    let grid = x.grid().clone();
    let n = grid.dim();

    let dx: Vec<Expr> = (0..n * n)
        .map(|c| exprs[c / n].diff(c % n))
        .collect::<std::result::Result<_, _>>()?;
    let ddx: Vec<Expr> = (0..n * n * n)
        .map(|c| dx[c / n].diff(c % n))
        .collect::<std::result::Result<_, _>>()?;
    let norm_dx = sup_frobenius(&grid, &dx)?;
    let norm_ddx = sup_frobenius(&grid, &ddx)?;
    let delta = opts.delta_scale * eps / (8.0 * (n * n) as f64 * (1.0 + norm_dx + norm_ddx));
    if delta < 2.0 * grid.h_max() {
        return Err(Error::Resolution(format!(
            "δ(ε) = {delta:e} is below two grid cells ({:e})",
            2.0 * grid.h_max()
        )));
    }

    let partition = partition_subordinate(x, delta)?;
    let cover = &partition.cover;
    let averages = cover
        .centers
        .par_iter()
        .map(|y| ball_average(&exprs, y, 2.0 * delta))
        .collect::<Result<Vec<_>>>()?;
    let linear = cover
        .centers
        .par_iter()
        .map(|y| {
            dx.iter()
                .map(|e| e.eval(y).map_err(Error::from))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let classes: Vec<usize> = cover.lattice.iter().map(|z| residue_class(z, n)).collect();

    let mut approx = CompVApprox {
        epsilon: eps,
        delta,
        partition,
        averages,
        linear,
        classes,
        xtilde: Field::zeros(grid.clone(), Kind::Vector),
        dxtilde: Field::zeros(grid.clone(), Kind::Tensor2),
        stats: BTreeMap::new(),
        row: ApproxRow {
            epsilon: eps,
            delta,
            centers: 0,
            q: 0,
            err_w11: 0.0,
            err_l1: 0.0,
            err_d_l1: 0.0,
            err_linf: 0.0,
            max_sup_h: 0.0,
            max_grad_h: 0.0,
            max_sup_f: 0.0,
            max_grad_f: 0.0,
            identity_error: 0.0,
            c_sup_f: 0.0,
            c_grad_h: 0.0,
            c_grad_f: 0.0,
        },
    };
    let sums: Vec<(f64, [f64; MAX_DIM])> = (0..grid.len())
        .into_par_iter()
        .map(|p| approx.partition.eta_sum(&grid.point(p)))
        .collect();
    assemble(&mut approx, &grid, &sums);
    collect_stats(&mut approx, &grid, &sums);

    // errors against the exact field
    let xs = exprs
        .iter()
        .map(|e| sample_expr(&grid, e))
        .collect::<Result<Vec<_>>>()?;
    let dxs = dx
        .iter()
        .map(|e| sample_expr(&grid, e))
        .collect::<Result<Vec<_>>>()?;
    let mut e0 = vec![0.0; grid.len()];
    let mut e1 = vec![0.0; grid.len()];
    for p in 0..grid.len() {
        e0[p] = (0..n)
            .map(|c| (xs[c][p] - approx.xtilde.get(c, p)).powi(2))
            .sum::<f64>()
            .sqrt();
        e1[p] = (0..n * n)
            .map(|c| (dxs[c][p] - approx.dxtilde.get(c, p)).powi(2))
            .sum::<f64>()
            .sqrt();
    }
    let sup_x = (0..grid.len())
        .map(|p| (0..n).map(|c| xs[c][p] * xs[c][p]).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let c1 = sup_x + norm_dx;
    let c2 = c1 + norm_ddx;
    let row = &mut approx.row;
    row.centers = approx.partition.len();
    row.err_linf = e0.iter().copied().fold(0.0, f64::max);
    row.err_l1 = integrate_values(&grid, &e0);
    row.err_d_l1 = integrate_values(&grid, &e1);
    row.err_w11 = row.err_l1 + row.err_d_l1;
    let all = approx
        .stats
        .values()
        .fold(PieceStats::default(), |mut acc, s| {
            acc.absorb(s);
            acc
        });
    row.max_sup_h = all.sup_h;
    row.max_grad_h = all.grad_h;
    row.max_sup_f = all.sup_f;
    row.max_grad_f = all.grad_f;
    row.c_sup_f = if c1 > 0.0 {
        all.sup_f / (c1 * eps)
    } else {
        0.0
    };
    row.c_grad_h = all.grad_h * eps / (1.0 + c2);
    row.c_grad_f = all.grad_f / (1.0 + c1);
    Ok(approx)
}

/// Direct assembly `Σ_i χ_i (A_i + B_i (x − y_i))` with its derivative, and
/// the gap to the piece-wise sum `Σ_p h_p ∇f_p`.
fn assemble(approx: &mut CompVApprox, grid: &Arc<ChartGrid>, sums: &[(f64, [f64; MAX_DIM])]) {
    let n = grid.dim();
    let delta = approx.delta;
    let slots = approx.slots();
    let results: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let x = grid.point(p);
            let mut xt = vec![0.0; n];
            let mut dxt = vec![0.0; n * n];
            let part = &approx.partition;
            let (s, gs) = sums[p];
            // class → accumulated factor sums: χ, ∇χ, then (value, grad) per slot of f and ρ^k
            let mut classes: Vec<(usize, Vec<PieceValue>, Vec<(f64, [f64; MAX_DIM])>)> = Vec::new();
            part.cover.for_each_within(&x, 3.0 * delta, |i, d, r| {
                let pieces = approx.member_pieces(i, d, r, s, &gs);
                if r < 2.0 * delta {
                    let (chi, gchi) = part.chi_from(d, r, s, &gs);
                    let a = &approx.averages[i];
                    let b = &approx.linear[i];
                    for l in 0..n {
                        let v = a[l] + (0..n).map(|k| b[l * n + k] * d[k]).sum::<f64>();
                        xt[l] += chi * v;
                        for m in 0..n {
                            dxt[l * n + m] += gchi[m] * v + chi * b[l * n + m];
                        }
                    }
                }
                let loc = approx.local(r, d);
                let rhos: Vec<(f64, [f64; MAX_DIM])> = (0..n)
                    .map(|k| {
                        let mut g = [0.0; MAX_DIM];
                        for j in 0..n {
                            g[j] = d[k] * loc.grad_psi[j] + if j == k { loc.psi } else { 0.0 };
                        }
                        (loc.psi * d[k], g)
                    })
                    .collect();
                let c = approx.classes[i];
                match classes.iter_mut().find(|e| e.0 == c) {
                    Some(e) => {
                        for (acc, pv) in e.1.iter_mut().zip(&pieces) {
                            acc.f += pv.f;
                            for a in 0..n {
                                acc.grad_f[a] += pv.grad_f[a];
                            }
                        }
                        let head = &mut e.1[0];
                        head.h += pieces[0].h;
                        for a in 0..n {
                            head.grad_h[a] += pieces[0].grad_h[a];
                        }
                        for (acc, r) in e.2.iter_mut().zip(&rhos) {
                            acc.0 += r.0;
                            for a in 0..n {
                                acc.1[a] += r.1[a];
                            }
                        }
                    }
                    None => classes.push((c, pieces, rhos)),
                }
            });
            let mut via_pieces = vec![0.0; n];
            for (_, pieces, rhos) in &classes {
                let chi = pieces[0].h;
                for slot in 0..slots {
                    let h = if slot == 0 {
                        chi
                    } else {
                        chi * rhos[(slot - 1) / n].0
                    };
                    for a in 0..n {
                        via_pieces[a] += h * pieces[slot].grad_f[a];
                    }
                }
            }
            let gap = (0..n)
                .map(|a| (via_pieces[a] - xt[a]).abs())
                .fold(0.0, f64::max);
            (xt, dxt, gap)
        })
        .collect();
    let mut xc = vec![vec![0.0; grid.len()]; n];
    let mut dc = vec![vec![0.0; grid.len()]; n * n];
    let mut gap: f64 = 0.0;
    for (p, (xt, dxt, g)) in results.into_iter().enumerate() {
        for a in 0..n {
            xc[a][p] = xt[a];
        }
        for c in 0..n * n {
            dc[c][p] = dxt[c];
        }
        gap = gap.max(g);
    }
    approx.xtilde =
        Field::from_components(grid.clone(), Kind::Vector, xc).expect("component count");
    approx.dxtilde =
        Field::from_components(grid.clone(), Kind::Tensor2, dc).expect("component count");
    approx.row.identity_error = gap;
}

/// Sup norms per piece; members of a class have disjoint supports, so each
/// class sup is the largest member sup.
fn collect_stats(approx: &mut CompVApprox, grid: &ChartGrid, sums: &[(f64, [f64; MAX_DIM])]) {
    let n = grid.dim();
    let delta = approx.delta;
    let slots = approx.slots();
    let per_center: Vec<Vec<PieceStats>> = (0..approx.partition.len())
        .into_par_iter()
        .map(|i| {
            let y = &approx.partition.cover.centers[i];
            let mut st = vec![PieceStats::default(); slots];
            for p in nodes_in_ball(grid, y, 3.0 * delta) {
                let x = grid.point(p);
                let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                let r = norm(&d);
                if r >= 3.0 * delta {
                    continue;
                }
                let (s, gs) = sums[p];
                for (slot, pv) in approx
                    .member_pieces(i, &d, r, s, &gs)
                    .into_iter()
                    .enumerate()
                {
                    st[slot].absorb(&PieceStats {
                        sup_h: pv.h.abs(),
                        grad_h: norm(&pv.grad_h[..n]),
                        sup_f: pv.f.abs(),
                        grad_f: norm(&pv.grad_f[..n]),
                    });
                }
            }
            st
        })
        .collect();
    let mut stats: BTreeMap<usize, PieceStats> = BTreeMap::new();
    for (i, st) in per_center.into_iter().enumerate() {
        let base = approx.classes[i] * slots;
        for (slot, s) in st.into_iter().enumerate() {
            stats.entry(base + slot).or_default().absorb(&s);
        }
    }
    approx.row.q = stats.len();
    approx.stats = stats;
}

/// `compv_approximate` over a list of `ε`.
pub fn compv_sweep(x: &Field, eps_list: &[f64], opts: CompVOptions) -> Result<ApproxReport> {
    let rows = eps_list
        .iter()
        .map(|&e| compv_approximate(x, e, opts).map(|a| a.row))
        .collect::<Result<Vec<_>>>()?;
    Ok(ApproxReport { rows })
}
