//! Weak (integrated-by-parts) curvature pairings against test volumes
//! `ω = φ h² √|g| dx`.
//!
//! The weak Bakry–Émery Ricci pairing only uses first derivatives of the
//! metric and the weight, so it makes sense for low-regularity metrics. The
//! Bochner right-hand side provides an independent route to the same number
//! for smooth data. A finite test family can falsify a curvature lower bound
//! (one deficit below the quadrature defect) but can never certify it.

mod family;
mod psd;

use std::io::Write;

use rayon::prelude::*;

use crate::curvature::{self, ChristoffelField};
use crate::error::{Error, Result};
use crate::fields::quadrature::integrate_values;
use crate::fields::{ChartGrid, Field, Kind, MetricField, Mode, WeightField};

pub use family::{default_test_family, FamilyLayout, FAMILY_SIZE};
pub use psd::{psd_test_decomposition, PsdDecomposition};

/// Multiplier of `h²` in the quadrature-defect estimate.
pub const DEFECT_FACTOR: f64 = 20.0;

/// A test vector field `X` and a nonnegative, compactly supported test
/// function `φ`. Only the values of `X` on the support of `φ` matter.
#[derive(Debug, Clone)]
pub struct TestPair {
    pub id: String,
    pub x: Field,
    pub phi: Field,
}

impl TestPair {
    pub fn new(id: impl Into<String>, x: Field, phi: Field) -> Result<Self> {
        let id = id.into();
        if x.kind() != Kind::Vector {
            return Err(Error::Invalid(format!(
                "test `{id}`: X must be a vector field"
            )));
        }
        if phi.kind() != Kind::Scalar {
            return Err(Error::Invalid(format!(
                "test `{id}`: φ must be a scalar field"
            )));
        }
        check_test_function(&phi, &id)?;
        Ok(TestPair { id, x, phi })
    }

    /// Gradient test pair `X = ∇f`.
    pub fn gradient(
        id: impl Into<String>,
        f: &Field,
        phi: Field,
        g: &MetricField,
        mode: Mode,
    ) -> Result<Self> {
        let m = if f.has_exprs() && g.exprs().is_some() {
            mode
        } else {
            Mode::Fd
        };
        let x = curvature::grad_scalar(f, g, m)?;
        TestPair::new(id, x, phi)
    }
}

fn check_test_function(phi: &Field, id: &str) -> Result<()> {
    if !phi.is_compact() {
        return Err(Error::Support(format!(
            "test `{id}`: φ carries no compact-support flag"
        )));
    }
    let grid = phi.grid();
    for p in 0..grid.len() {
        let v = phi.at(p);
        if v < -1e-14 {
            return Err(Error::Support(format!(
                "test `{id}`: φ = {v} is negative at {:?}",
                grid.point(p)
            )));
        }
        if v != 0.0 && !grid.is_interior(p) {
            return Err(Error::Support(format!(
                "test `{id}`: φ does not vanish on the boundary collar at {:?}",
                grid.point(p)
            )));
        }
    }
    Ok(())
}

/// Curvature lower bound `Ric_{μ,N} ≥ K g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundSpec {
    pub k: f64,
    pub big_n: f64,
}

impl LowerBoundSpec {
    pub fn new(k: f64, big_n: f64) -> Self {
        LowerBoundSpec { k, big_n }
    }

    /// `1/(N − n)`, zero for `N = ∞` or a constant weight.
    pub fn dimension_coefficient(&self, n: usize, w: &WeightField) -> Result<f64> {
        curvature::check_big_n(self.big_n, n, w)?;
        Ok(if self.big_n.is_infinite() || w.is_constant() {
            0.0
        } else {
            1.0 / (self.big_n - n as f64)
        })
    }
}

/// Value of a pairing with its per-term breakdown and defect estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakPairingReport {
    pub terms: Vec<f64>,
    pub value: f64,
    /// `DEFECT_FACTOR · h² · Σ|terms|`.
    pub defect: f64,
}

impl WeakPairingReport {
    fn from_terms(terms: Vec<f64>, h2: f64) -> Self {
        let value = terms.iter().sum();
        let scale: f64 = terms.iter().map(|t| t.abs()).sum();
        WeakPairingReport {
            terms,
            value,
            defect: DEFECT_FACTOR * h2 * scale,
        }
    }
}

/// Precomputed geometry shared by every pairing on one `(g, w)`.
pub struct WeakForm<'a> {
    g: &'a MetricField,
    w: &'a WeightField,
    mode: Mode,
    gamma: ChristoffelField,
    dg: Vec<Field>,
    dh: Vec<Field>,
    dv: Vec<Field>,
    sqrt_det: Vec<f64>,
    /// `∂_i √|g|` indexed `[i][node]`.
    dsqrt: Vec<Vec<f64>>,
}

/// Per-node data of a test pair: values and first partials.
struct TestData {
    x: Vec<Vec<f64>>,
    /// `∂_a X^i` indexed `[a][i][node]`.
    dx: Vec<Vec<Vec<f64>>>,
    phi: Vec<f64>,
    dphi: Vec<Vec<f64>>,
}

/// Symmetric tensor test object `T^{jk}` with its partials, used where the
/// pairing is evaluated on `X ⊗ X` or on a sum of such products.
pub struct TensorTest<'t> {
    /// `T^{jk}` at component `j*n + k`.
    pub t: &'t Field,
    /// `∂_a T^{jk}` for each axis `a`.
    pub dt: &'t [Field],
}

impl<'a> WeakForm<'a> {
    pub fn new(g: &'a MetricField, w: &'a WeightField, mode: Mode) -> Result<Self> {
        let n = g.dim();
        let gamma = curvature::christoffel(g, mode)?;
        let dg = g.partials(mode)?;
        let wmode = if mode == Mode::Analytic && w.h_expr().is_none() {
            Mode::Fd
        } else {
            mode
        };
        let dh = w.dh(wmode)?;
        let dv = w.dv(wmode)?;
        let len = g.grid().len();
        let sqrt_det: Vec<f64> = (0..len).map(|p| g.sqrt_det(p)).collect();
        let dsqrt = (0..n)
            .map(|i| {
                (0..len)
                    .map(|p| {
                        let mut tr = 0.0;
                        for a in 0..n {
                            for b in 0..n {
                                tr += g.ginv(a, b, p) * dg[i].t(a, b, p);
                            }
                        }
                        0.5 * sqrt_det[p] * tr
                    })
                    .collect()
            })
            .collect();
        Ok(WeakForm {
            g,
            w,
            mode,
            gamma,
            dg,
            dh,
            dv,
            sqrt_det,
            dsqrt,
        })
    }

    pub fn grid(&self) -> &ChartGrid {
        self.g.grid()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn christoffel(&self) -> &ChristoffelField {
        &self.gamma
    }

    fn h2(&self) -> f64 {
        self.grid().h_max().powi(2)
    }

    fn data(&self, t: &TestPair) -> Result<TestData> {
        let n = self.g.dim();
        let mut dx = Vec::with_capacity(n);
        let mut dphi = Vec::with_capacity(n);
        for a in 0..n {
            dx.push(t.x.partial_prefer(a, self.mode)?.into_components());
            dphi.push(
                t.phi
                    .partial_prefer(a, self.mode)?
                    .into_components()
                    .remove(0),
            );
        }
        Ok(TestData {
            x: t.x.components().to_vec(),
            dx,
            phi: t.phi.comp(0).to_vec(),
            dphi,
        })
    }

    /// Five-term weak pairing for `X ⊗ X`, derivatives of products by the
    /// product rule.
    pub fn pairing(&self, t: &TestPair) -> Result<WeakPairingReport> {
        let d = self.data(t)?;
        let tt = |j: usize, k: usize, p: usize| d.x[j][p] * d.x[k][p];
        let dtt = |a: usize, j: usize, k: usize, p: usize| {
            d.dx[a][j][p] * d.x[k][p] + d.x[j][p] * d.dx[a][k][p]
        };
        Ok(self.lhs_terms(&tt, &dtt, &d.phi, &d.dphi))
    }

    /// Five-term weak pairing for a symmetric tensor test object.
    pub fn pairing_tensor(&self, t: &TensorTest<'_>, phi: &Field) -> Result<WeakPairingReport> {
        check_test_function(phi, "tensor")?;
        let n = self.g.dim();
        let dphi: Vec<Vec<f64>> = (0..n)
            .map(|a| {
                Ok(phi
                    .partial_prefer(a, self.mode)?
                    .into_components()
                    .remove(0))
            })
            .collect::<Result<_>>()?;
        let tt = |j: usize, k: usize, p: usize| t.t.get(j * n + k, p);
        let dtt = |a: usize, j: usize, k: usize, p: usize| t.dt[a].get(j * n + k, p);
        Ok(self.lhs_terms(&tt, &dtt, phi.comp(0), &dphi))
    }

    fn lhs_terms(
        &self,
        tt: &(dyn Fn(usize, usize, usize) -> f64 + Sync),
        dtt: &(dyn Fn(usize, usize, usize, usize) -> f64 + Sync),
        phi: &[f64],
        dphi: &[Vec<f64>],
    ) -> WeakPairingReport {
        let n = self.g.dim();
        let grid = self.grid();
        let gam = &self.gamma;
        let per_node: Vec<[f64; 5]> = (0..grid.len())
            .into_par_iter()
            .map(|p| {
                let mut out = [0.0; 5];
                if phi[p] == 0.0 && (0..n).all(|a| dphi[a][p] == 0.0) {
                    return out;
                }
                let h = self.w.h_at(p);
                let s = self.sqrt_det[p];
                let dh = |a: usize| self.dh[a].at(p);
                // ∂_a (T^{jk} φ h² s)
                let dp = |a: usize, j: usize, k: usize| {
                    dtt(a, j, k, p) * phi[p] * h * h * s
                        + tt(j, k, p)
                            * (dphi[a][p] * h * h * s
                                + phi[p] * 2.0 * h * dh(a) * s
                                + phi[p] * h * h * self.dsqrt[a][p])
                };
                // ∂_a (T^{jk} h φ s)
                let dq = |a: usize, j: usize, k: usize| {
                    dtt(a, j, k, p) * h * phi[p] * s
                        + tt(j, k, p)
                            * (dh(a) * phi[p] * s
                                + h * dphi[a][p] * s
                                + h * phi[p] * self.dsqrt[a][p])
                };
                for j in 0..n {
                    for k in 0..n {
                        let tjk = tt(j, k, p);
                        let mut quad = 0.0;
                        let mut conn = 0.0;
                        for sidx in 0..n {
                            for q in 0..n {
                                quad += gam.gamma(sidx, k, j, p) * gam.gamma(q, q, sidx, p)
                                    - gam.gamma(sidx, k, q, p) * gam.gamma(q, j, sidx, p);
                            }
                            conn += dh(sidx) * gam.gamma(sidx, k, j, p);
                        }
                        out[0] += tjk * quad * phi[p] * h * h * s;
                        for q in 0..n {
                            out[1] -= gam.gamma(q, j, k, p) * dp(q, j, k);
                            out[2] += gam.gamma(q, q, k, p) * dp(j, j, k);
                        }
                        out[3] += 2.0 * tjk * (dh(j) * dh(k) + h * conn) * phi[p] * s;
                        out[4] += 2.0 * dh(j) * dq(k, j, k);
                    }
                }
                out
            })
            .collect();
        let terms = (0..5)
            .map(|c| {
                let v: Vec<f64> = per_node.iter().map(|r| r[c]).collect();
                integrate_values(grid, &v)
            })
            .collect();
        WeakPairingReport::from_terms(terms, self.h2())
    }

    /// Four-term right-hand side of the weak Bochner identity:
    /// `−½∫⟨∇|X|²,∇φ⟩dμ + ∫div_μX·div_μ(φX)dμ + ∫⟨dX♭, d(φX♭)⟩dμ − ∫|∇X|²φdμ`.
    pub fn bochner_rhs(&self, t: &TestPair) -> Result<WeakPairingReport> {
        let d = self.data(t)?;
        let n = self.g.dim();
        let g = self.g;
        let grid = self.grid();
        let gam = &self.gamma;
        let per_node: Vec<[f64; 4]> = (0..grid.len())
            .into_par_iter()
            .map(|p| {
                let mut out = [0.0; 4];
                if d.phi[p] == 0.0 && (0..n).all(|a| d.dphi[a][p] == 0.0) {
                    return out;
                }
                let h = self.w.h_at(p);
                let mu = h * h * self.sqrt_det[p];
                let x = |i: usize| d.x[i][p];
                let dx = |a: usize, i: usize| d.dx[a][i][p];
                let phi = d.phi[p];
                let dphi = |a: usize| d.dphi[a][p];
                // ∂_a |X|²
                let dnorm = |a: usize| {
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            s += self.dg[a].t(i, j, p) * x(i) * x(j)
                                + 2.0 * g.g(i, j, p) * x(i) * dx(a, j);
                        }
                    }
                    s
                };
                let mut grad_term = 0.0;
                for a in 0..n {
                    let da = dnorm(a);
                    for b in 0..n {
                        grad_term += g.ginv(a, b, p) * da * dphi(b);
                    }
                }
                out[0] = -0.5 * grad_term * mu;

                let mut div = 0.0;
                let mut x_phi = 0.0;
                for i in 0..n {
                    div += dx(i, i)
                        + x(i) * (2.0 * self.dh[i].at(p) / h + self.dsqrt[i][p] / self.sqrt_det[p]);
                    x_phi += x(i) * dphi(i);
                }
                out[1] = div * (phi * div + x_phi) * mu;

                // X♭ and F_jk = ∂_k X♭_j − ∂_j X♭_k
                let mut xf = [0.0; 4];
                let mut dxf = [[0.0; 4]; 4]; // [k][j] = ∂_k X♭_j
                for j in 0..n {
                    for i in 0..n {
                        xf[j] += g.g(i, j, p) * x(i);
                        for k in 0..n {
                            dxf[k][j] += self.dg[k].t(i, j, p) * x(i) + g.g(i, j, p) * dx(k, i);
                        }
                    }
                }
                let mut ext = 0.0;
                for j in 0..n {
                    for k in j + 1..n {
                        let f_jk = dxf[k][j] - dxf[j][k];
                        for l in 0..n {
                            for m in l + 1..n {
                                let f_lm = dxf[m][l] - dxf[l][m];
                                let g_lm = phi * f_lm + dphi(m) * xf[l] - dphi(l) * xf[m];
                                let c = g.ginv(j, l, p) * g.ginv(k, m, p)
                                    - g.ginv(j, m, p) * g.ginv(k, l, p);
                                ext += c * f_jk * g_lm;
                            }
                        }
                    }
                }
                out[2] = ext * mu;

                let mut nab = [[0.0; 4]; 4]; // [s][i] = ∂_i X^s + Γ^s_iq X^q
                for s in 0..n {
                    for i in 0..n {
                        let mut v = dx(i, s);
                        for q in 0..n {
                            v += gam.gamma(s, i, q, p) * x(q);
                        }
                        nab[s][i] = v;
                    }
                }
                let mut hs = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let gij = g.ginv(i, j, p);
                        if gij == 0.0 {
                            continue;
                        }
                        for s in 0..n {
                            for r in 0..n {
                                hs += nab[s][i] * nab[r][j] * gij * g.g(s, r, p);
                            }
                        }
                    }
                }
                out[3] = -hs * phi * mu;
                out
            })
            .collect();
        let terms = (0..4)
            .map(|c| {
                let v: Vec<f64> = per_node.iter().map(|r| r[c]).collect();
                integrate_values(grid, &v)
            })
            .collect();
        Ok(WeakPairingReport::from_terms(terms, self.h2()))
    }

    /// `|pairing − rhs| / (1 + |rhs|)`.
    pub fn bochner_residual(&self, t: &TestPair) -> Result<f64> {
        let lhs = self.pairing(t)?;
        let rhs = self.bochner_rhs(t)?;
        Ok((lhs.value - rhs.value).abs() / (1.0 + rhs.value.abs()))
    }

    /// `∫ g(X, X) ω` and `∫ ⟨∇V, X⟩² ω`.
    fn bound_integrals(&self, t: &TestPair) -> (f64, f64) {
        let n = self.g.dim();
        let grid = self.grid();
        let (gxx, vx): (Vec<f64>, Vec<f64>) = (0..grid.len())
            .map(|p| {
                let x: Vec<f64> = (0..n).map(|i| t.x.get(i, p)).collect();
                let om = t.phi.at(p) * self.w.h_at(p).powi(2) * self.sqrt_det[p];
                let dvx: f64 = (0..n).map(|i| self.dv[i].at(p) * x[i]).sum();
                (self.g.inner(&x, &x, p) * om, dvx * dvx * om)
            })
            .unzip();
        (integrate_values(grid, &gxx), integrate_values(grid, &vx))
    }

    /// Signed deficit `pairing − (1/(N−n))∫⟨∇V,X⟩²ω − K∫g(X,X)ω`.
    pub fn lower_bound_deficit(
        &self,
        spec: &LowerBoundSpec,
        t: &TestPair,
    ) -> Result<DeficitReport> {
        let coef = spec.dimension_coefficient(self.g.dim(), self.w)?;
        let lhs = self.pairing(t)?;
        let rhs = self.bochner_rhs(t)?;
        let (gxx, vx) = self.bound_integrals(t);
        let deficit = lhs.value - coef * vx - spec.k * gxx;
        let scale: f64 = lhs.terms.iter().map(|v| v.abs()).sum::<f64>()
            + (coef * vx).abs()
            + (spec.k * gxx).abs();
        let defect = DEFECT_FACTOR * self.h2() * scale;
        Ok(DeficitReport {
            id: t.id.clone(),
            lhs,
            rhs,
            gxx,
            deficit,
            defect,
        })
    }

    /// Deficit of a symmetric tensor test object.
    pub fn lower_bound_deficit_tensor(
        &self,
        spec: &LowerBoundSpec,
        t: &TensorTest<'_>,
        phi: &Field,
    ) -> Result<f64> {
        let n = self.g.dim();
        let coef = spec.dimension_coefficient(n, self.w)?;
        let pairing = self.pairing_tensor(t, phi)?;
        let grid = self.grid();
        let (gt, vt): (Vec<f64>, Vec<f64>) = (0..grid.len())
            .map(|p| {
                let om = phi.at(p) * self.w.h_at(p).powi(2) * self.sqrt_det[p];
                let mut a = 0.0;
                let mut b = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        let tjk = t.t.get(j * n + k, p);
                        a += self.g.g(j, k, p) * tjk;
                        b += self.dv[j].at(p) * self.dv[k].at(p) * tjk;
                    }
                }
                (a * om, b * om)
            })
            .unzip();
        Ok(pairing.value
            - coef * integrate_values(grid, &vt)
            - spec.k * integrate_values(grid, &gt))
    }

    /// Weak BE(K,N) deficit for `X = ∇f`:
    /// `pairing + ∫φ|Hess f|²dμ − ∫(K|∇f|² + (1/N)(Δ_μ f)²)φdμ`.
    pub fn be_weak_test(&self, spec: &LowerBoundSpec, f: &Field, phi: &Field) -> Result<BeReport> {
        let n = self.g.dim();
        curvature::check_big_n(spec.big_n, n, self.w)?;
        let inv_n = if spec.big_n.is_infinite() {
            0.0
        } else {
            1.0 / spec.big_n
        };
        let fmode = if self.mode == Mode::Analytic && f.has_exprs() && self.g.exprs().is_some() {
            Mode::Analytic
        } else {
            Mode::Fd
        };
        let t = TestPair::gradient("be", f, phi.clone(), self.g, fmode)?;
        let pairing = self.pairing(&t)?;
        let hess = curvature::hessian_scalar(f, &self.gamma, fmode)?;
        let norm = curvature::grad_norm_sq(f, self.g, fmode)?;
        let lmode = if self.w.h_expr().is_some() || self.w.is_constant() {
            fmode
        } else {
            Mode::Fd
        };
        let lap = curvature::laplacian(f, self.g, Some(self.w), lmode)?;
        let grid = self.grid();
        let g = self.g;
        let rows: Vec<[f64; 3]> = (0..grid.len())
            .map(|p| {
                let om = phi.at(p) * self.w.h_at(p).powi(2) * self.sqrt_det[p];
                if om == 0.0 {
                    return [0.0; 3];
                }
                let mut hs = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        for a in 0..n {
                            for b in 0..n {
                                hs += g.ginv(i, a, p)
                                    * g.ginv(j, b, p)
                                    * hess.t(i, j, p)
                                    * hess.t(a, b, p);
                            }
                        }
                    }
                }
                [
                    hs * om,
                    spec.k * norm.at(p) * om,
                    inv_n * lap.at(p).powi(2) * om,
                ]
            })
            .collect();
        let col = |c: usize| integrate_values(grid, &rows.iter().map(|r| r[c]).collect::<Vec<_>>());
        let (hess_term, k_term, n_term) = (col(0), col(1), col(2));
        let deficit = pairing.value + hess_term - k_term - n_term;
        let scale = pairing.terms.iter().map(|v| v.abs()).sum::<f64>()
            + hess_term.abs()
            + k_term.abs()
            + n_term.abs();
        Ok(BeReport {
            pairing: pairing.value,
            hess_term,
            k_term,
            n_term,
            deficit,
            defect: DEFECT_FACTOR * self.h2() * scale,
        })
    }
}

/// One row of a deficit sweep.
#[derive(Debug, Clone)]
pub struct DeficitReport {
    pub id: String,
    pub lhs: WeakPairingReport,
    pub rhs: WeakPairingReport,
    /// `∫ g(X, X) ω`.
    pub gxx: f64,
    pub deficit: f64,
    pub defect: f64,
}

impl DeficitReport {
    pub fn passes(&self) -> bool {
        self.deficit >= -self.defect
    }

    /// The nine integrals: five pairing terms then four Bochner terms.
    pub fn terms(&self) -> Vec<f64> {
        self.lhs
            .terms
            .iter()
            .chain(&self.rhs.terms)
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeReport {
    pub pairing: f64,
    pub hess_term: f64,
    pub k_term: f64,
    pub n_term: f64,
    pub deficit: f64,
    pub defect: f64,
}

impl BeReport {
    pub fn passes(&self) -> bool {
        self.deficit >= -self.defect
    }
}

/// Result of sweeping a lower bound over a test family.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<DeficitReport>,
}

impl SweepReport {
    pub fn passes(&self) -> bool {
        self.rows.iter().all(DeficitReport::passes)
    }

    /// Row with the most negative `deficit + defect`.
    pub fn worst(&self) -> Option<&DeficitReport> {
        self.rows
            .iter()
            .min_by(|a, b| (a.deficit + a.defect).total_cmp(&(b.deficit + b.defect)))
    }

    /// CSV with header `test_id,term1..term9,value,defect,verdict`; `value`
    /// is the signed deficit.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "test_id")?;
        for i in 1..=9 {
            write!(w, ",term{i}")?;
        }
        writeln!(w, ",value,defect,verdict")?;
        for r in &self.rows {
            write!(w, "{}", r.id)?;
            for t in r.terms() {
                write!(w, ",{t:e}")?;
            }
            let verdict = if r.passes() { "PASS" } else { "FAIL" };
            writeln!(w, ",{:e},{:e},{verdict}", r.deficit, r.defect)?;
        }
        Ok(())
    }
}

/// Evaluates the deficit on every test pair. Rows are sorted by test id.
pub fn deficit_sweep(
    form: &WeakForm<'_>,
    spec: &LowerBoundSpec,
    family: &[TestPair],
) -> Result<SweepReport> {
    let mut rows = family
        .par_iter()
        .map(|t| form.lower_bound_deficit(spec, t))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(SweepReport { rows })
}

pub fn weak_ricci_pairing(
    g: &MetricField,
    w: &WeightField,
    t: &TestPair,
    mode: Mode,
) -> Result<WeakPairingReport> {
    WeakForm::new(g, w, mode)?.pairing(t)
}

pub fn bochner_rhs(
    g: &MetricField,
    w: &WeightField,
    t: &TestPair,
    mode: Mode,
) -> Result<WeakPairingReport> {
    WeakForm::new(g, w, mode)?.bochner_rhs(t)
}

pub fn bochner_residual(g: &MetricField, w: &WeightField, t: &TestPair, mode: Mode) -> Result<f64> {
    WeakForm::new(g, w, mode)?.bochner_residual(t)
}

pub fn lower_bound_deficit(
    g: &MetricField,
    w: &WeightField,
    spec: &LowerBoundSpec,
    t: &TestPair,
    mode: Mode,
) -> Result<DeficitReport> {
    WeakForm::new(g, w, mode)?.lower_bound_deficit(spec, t)
}

pub fn be_weak_test(
    g: &MetricField,
    w: &WeightField,
    spec: &LowerBoundSpec,
    f: &Field,
    phi: &Field,
    mode: Mode,
) -> Result<BeReport> {
    WeakForm::new(g, w, mode)?.be_weak_test(spec, f, phi)
}

/// `∫ e^{−V̂²} h² √|g| dx` over the chart; the check passes when this is at most 1.
pub fn volume_growth_check(w: &WeightField, g: &MetricField, vhat: &Field) -> Result<f64> {
    let grid = g.grid();
    if let Some(p) = (0..grid.len()).find(|&p| vhat.at(p) < 0.0) {
        return Err(Error::Invalid(format!(
            "V̂ = {} is negative at {:?}",
            vhat.at(p),
            grid.point(p)
        )));
    }
    let dens = w.density(g);
    let vals: Vec<f64> = (0..grid.len())
        .map(|p| (-vhat.at(p).powi(2)).exp() * dens[p])
        .collect();
    Ok(integrate_values(grid, &vals))
}

/// Smoothness scale `(1 + ‖X‖_{C²})² (1 + ‖g‖_{C²})³ ‖φ‖_{C¹}` measured on
/// the grid interior, used to normalise Bochner residual tolerances.
pub fn smoothness_scale(g: &MetricField, t: &TestPair, mode: Mode) -> Result<f64> {
    let grid = g.grid();
    let interior = grid.interior_box();
    let n = grid.dim();
    let c_norm = |f: &Field, order: usize, m: Mode| -> Result<f64> {
        let mut total = f.sup_norm(Some(&interior));
        let mut layer = vec![f.clone()];
        for _ in 0..order {
            let mut next = Vec::new();
            let mut sup: f64 = 0.0;
            for fld in &layer {
                for a in 0..n {
                    let d = fld.partial_prefer(a, m)?;
                    sup = sup.max(d.sup_norm(Some(&interior)));
                    next.push(d);
                }
            }
            total += sup;
            layer = next;
        }
        Ok(total)
    };
    let xn = c_norm(&t.x, 2, mode)?;
    let gm = if mode == Mode::Analytic && g.exprs().is_none() {
        Mode::Fd
    } else {
        mode
    };
    let gn = c_norm(g.field(), 2, gm)?;
    let pn = c_norm(&t.phi, 1, mode)?;
    Ok((1.0 + xn).powi(2) * (1.0 + gn).powi(3) * pn)
}

#[cfg(test)]
mod tests;
