//! Pointwise tensor calculus on a chart: Christoffel symbols, Riemann and
//! Ricci tensors, gradients, Hessians, weighted divergence and Laplacian,
//! covariant derivatives of vector fields, `|dX♭|²` and the Bakry–Émery
//! N-Ricci tensor.
//!
//! Every routine takes a [`Mode`]. In analytic mode derivatives come from the
//! expression providers and derived scalar fields keep symbolic providers of
//! their own, so they can be differentiated again exactly.

mod symbolic;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{ChartGrid, Field, Kind, MetricField, Mode, WeightField};

pub use symbolic::{divergence_expr, grad_expr, grad_norm_sq_expr};

/// Christoffel symbols of both kinds sampled on the grid.
///
/// `second` stores `Γ^k_ij` at component `(k*n + i)*n + j`; `first` stores
/// `Γ_{ij,l}` at `(i*n + j)*n + l`.
#[derive(Debug, Clone)]
pub struct ChristoffelField {
    pub second: Field,
    pub first: Field,
    /// `∂_m Γ^k_ij` at component `((m*n + k)*n + i)*n + j`, present in
    /// analytic mode.
    pub derivative: Option<Field>,
    pub mode: Mode,
}

impl ChristoffelField {
    pub fn n(&self) -> usize {
        self.second.grid().dim()
    }

    pub fn grid(&self) -> &Arc<ChartGrid> {
        self.second.grid()
    }

    /// `Γ^k_ij` at node `p`.
    #[inline]
    pub fn gamma(&self, k: usize, i: usize, j: usize, p: usize) -> f64 {
        let n = self.n();
        self.second.get((k * n + i) * n + j, p)
    }

    /// `Γ_{ij,l}` at node `p`.
    #[inline]
    pub fn gamma_first(&self, i: usize, j: usize, l: usize, p: usize) -> f64 {
        let n = self.n();
        self.first.get((i * n + j) * n + l, p)
    }

    /// `∂_m Γ^k_ij` for every node, indexed as documented on `derivative`.
    /// In finite-difference mode this differentiates the sampled Γ field.
    pub fn derivative_field(&self, mode: Mode) -> Result<Field> {
        match mode {
            Mode::Analytic => self
                .derivative
                .clone()
                .ok_or(Error::MissingAnalytic("Christoffel field")),
            Mode::Fd => {
                let n = self.n();
                let parts: Vec<Field> = (0..n).map(|m| self.second.fd_partial(m)).collect();
                let mut comps = Vec::with_capacity(n * n * n * n);
                for part in parts {
                    comps.extend(part.into_components());
                }
                Field::from_components(self.grid().clone(), Kind::Array(n * n * n * n), comps)
            }
        }
    }
}

/// `Γ^k_ij = ½ g^{kl}(∂_j g_li + ∂_i g_jl − ∂_l g_ij)` and the first kind
/// `Γ_{ij,l} = g_lk Γ^k_ij`.
pub fn christoffel(g: &MetricField, mode: Mode) -> Result<ChristoffelField> {
    let n = g.dim();
    let grid = g.grid().clone();
    let dg = g.partials(mode)?;
    let first = Field::from_nodewise(grid.clone(), Kind::Array(n * n * n), |p, out| {
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    out[(i * n + j) * n + l] =
                        0.5 * (dg[j].t(l, i, p) + dg[i].t(j, l, p) - dg[l].t(i, j, p));
                }
            }
        }
    });
    let second = Field::from_nodewise(grid.clone(), Kind::Array(n * n * n), |p, out| {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += g.ginv(k, l, p) * first.get((i * n + j) * n + l, p);
                    }
                    out[(k * n + i) * n + j] = s;
                }
            }
        }
    });
    let derivative = if mode == Mode::Analytic {
        let ddg = g.second_partials()?;
        Some(Field::from_nodewise(
            grid,
            Kind::Array(n * n * n * n),
            |p, out| {
                for m in 0..n {
                    // ∂_m g^{kl} = −g^{ka} ∂_m g_ab g^{bl}
                    let mut dinv = [[0.0; 4]; 4];
                    for k in 0..n {
                        for l in 0..n {
                            let mut s = 0.0;
                            for a in 0..n {
                                for b in 0..n {
                                    s -= g.ginv(k, a, p) * dg[m].t(a, b, p) * g.ginv(b, l, p);
                                }
                            }
                            dinv[k][l] = s;
                        }
                    }
                    for k in 0..n {
                        for i in 0..n {
                            for j in 0..n {
                                let mut s = 0.0;
                                for l in 0..n {
                                    let dfirst = 0.5
                                        * (ddg[m][j].t(l, i, p) + ddg[m][i].t(j, l, p)
                                            - ddg[m][l].t(i, j, p));
                                    s += dinv[k][l] * first.get((i * n + j) * n + l, p)
                                        + g.ginv(k, l, p) * dfirst;
                                }
                                out[((m * n + k) * n + i) * n + j] = s;
                            }
                        }
                    }
                }
            },
        ))
    } else {
        None
    };
    Ok(ChristoffelField {
        second,
        first,
        derivative,
        mode,
    })
}

/// Riemann tensor `R^l_ijk = ∂_iΓ^l_jk − ∂_jΓ^l_ik + Γ^s_kjΓ^l_is − Γ^s_kiΓ^l_js`,
/// stored at component `((l*n + i)*n + j)*n + k`.
pub fn riemann(gamma: &ChristoffelField, mode: Mode) -> Result<Field> {
    let n = gamma.n();
    let dgam = gamma.derivative_field(mode)?;
    let d = |m: usize, l: usize, i: usize, j: usize, p: usize| {
        dgam.get(((m * n + l) * n + i) * n + j, p)
    };
    Ok(Field::from_nodewise(
        gamma.grid().clone(),
        Kind::Array(n * n * n * n),
        |p, out| {
            for l in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let mut r = d(i, l, j, k, p) - d(j, l, i, k, p);
                            for s in 0..n {
                                r += gamma.gamma(s, k, j, p) * gamma.gamma(l, i, s, p)
                                    - gamma.gamma(s, k, i, p) * gamma.gamma(l, j, s, p);
                            }
                            out[((l * n + i) * n + j) * n + k] = r;
                        }
                    }
                }
            }
        },
    ))
}

/// Contraction `R^p_pjk` of a Riemann field.
pub fn ricci_from_riemann(riem: &Field) -> Field {
    let grid = riem.grid().clone();
    let n = grid.dim();
    Field::from_nodewise(grid, Kind::Tensor2, |p, out| {
        for j in 0..n {
            for k in 0..n {
                out[j * n + k] = (0..n)
                    .map(|q| riem.get(((q * n + q) * n + j) * n + k, p))
                    .sum();
            }
        }
    })
}

/// Ricci tensor `Ric_jk = ∂_pΓ^p_jk − ∂_jΓ^p_pk + Γ^s_kjΓ^p_ps − Γ^s_kpΓ^p_js`.
pub fn ricci_from_christoffel(gamma: &ChristoffelField, mode: Mode) -> Result<Field> {
    let n = gamma.n();
    let dgam = gamma.derivative_field(mode)?;
    let d = |m: usize, l: usize, i: usize, j: usize, p: usize| {
        dgam.get(((m * n + l) * n + i) * n + j, p)
    };
    Ok(Field::from_nodewise(
        gamma.grid().clone(),
        Kind::Tensor2,
        |p, out| {
            for j in 0..n {
                for k in 0..n {
                    let mut r = 0.0;
                    for q in 0..n {
                        r += d(q, q, j, k, p) - d(j, q, q, k, p);
                        for s in 0..n {
                            r += gamma.gamma(s, k, j, p) * gamma.gamma(q, q, s, p)
                                - gamma.gamma(s, k, q, p) * gamma.gamma(q, j, s, p);
                        }
                    }
                    out[j * n + k] = r;
                }
            }
        },
    ))
}

/// Ricci tensor of `g`. In finite-difference mode the second derivatives of
/// the metric are finite differences of the sampled Christoffel field.
pub fn ricci(g: &MetricField, mode: Mode) -> Result<Field> {
    let gamma = christoffel(g, mode)?;
    ricci_from_christoffel(&gamma, mode)
}

/// First partials of every component, indexed `[axis]`.
fn partials(f: &Field, mode: Mode) -> Result<Vec<Field>> {
    (0..f.grid().dim())
        .map(|i| f.partial_prefer(i, mode))
        .collect()
}

fn require_analytic(f: &Field, mode: Mode, what: &'static str) -> Result<()> {
    if mode == Mode::Analytic && !f.has_exprs() {
        return Err(Error::MissingAnalytic(what));
    }
    Ok(())
}

/// `(∇f)^k = g^{ki} ∂_i f`.
pub fn grad_scalar(f: &Field, g: &MetricField, mode: Mode) -> Result<Field> {
    require_analytic(f, mode, "scalar field")?;
    let n = g.dim();
    let df = partials(f, mode)?;
    let out = Field::from_nodewise(g.grid().clone(), Kind::Vector, |p, out| {
        for k in 0..n {
            out[k] = (0..n).map(|i| g.ginv(k, i, p) * df[i].at(p)).sum();
        }
    });
    let exprs = match (mode, f.exprs(), g.exprs()) {
        (Mode::Analytic, Some(fe), Some(ge)) => Some(grad_expr(&fe[0], &ge.inv)?),
        _ => None,
    };
    Ok(out
        .with_exprs(exprs)
        .with_support(f.support().map(|s| s.to_vec())))
}

/// `|∇f|² = g^{ij} ∂_i f ∂_j f`.
pub fn grad_norm_sq(f: &Field, g: &MetricField, mode: Mode) -> Result<Field> {
    require_analytic(f, mode, "scalar field")?;
    let n = g.dim();
    let df = partials(f, mode)?;
    let out = Field::from_nodewise(g.grid().clone(), Kind::Scalar, |p, out| {
        let d: Vec<f64> = (0..n).map(|i| df[i].at(p)).collect();
        out[0] = g.inner_dual(&d, &d, p);
    });
    let exprs = match (mode, f.exprs(), g.exprs()) {
        (Mode::Analytic, Some(fe), Some(ge)) => Some(vec![grad_norm_sq_expr(&fe[0], &ge.inv)?]),
        _ => None,
    };
    Ok(out.with_exprs(exprs))
}

/// Second partials `∂_i∂_j f` at component `i*n + j`.
pub fn second_partials(f: &Field, mode: Mode) -> Result<Field> {
    require_analytic(f, mode, "scalar field")?;
    let n = f.grid().dim();
    let first = partials(f, mode)?;
    let mut comps = vec![Vec::new(); n * n];
    for i in 0..n {
        for j in 0..n {
            comps[i * n + j] = if j < i {
                comps[j * n + i].clone()
            } else {
                first[i]
                    .partial_prefer(j, mode)?
                    .into_components()
                    .remove(0)
            };
        }
    }
    Field::from_components(f.grid().clone(), Kind::Tensor2, comps)
}

/// `Hess f_ij = ∂_ij f − Γ^s_ij ∂_s f`.
pub fn hessian_scalar(f: &Field, gamma: &ChristoffelField, mode: Mode) -> Result<Field> {
    let n = gamma.n();
    let dd = second_partials(f, mode)?;
    let df = partials(f, mode)?;
    let out = Field::from_nodewise(gamma.grid().clone(), Kind::Tensor2, |p, out| {
        for i in 0..n {
            for j in 0..n {
                let mut s = dd.t(i, j, p);
                for q in 0..n {
                    s -= gamma.gamma(q, i, j, p) * df[q].at(p);
                }
                out[i * n + j] = s;
            }
        }
    });
    // symmetrise away the rounding difference between Γ^s_ij and Γ^s_ji
    let mut comps = out.into_components();
    for i in 0..n {
        for j in 0..i {
            for p in 0..gamma.grid().len() {
                let avg = 0.5 * (comps[i * n + j][p] + comps[j * n + i][p]);
                comps[i * n + j][p] = avg;
                comps[j * n + i][p] = avg;
            }
        }
    }
    Field::from_components(gamma.grid().clone(), Kind::Tensor2, comps)?.into_symmetric()
}

/// `div_μ X = ∂_i X^i + X^i (2 ∂_i h / h + ½ g^{ab} ∂_i g_ab)`.
pub fn divergence_weighted(
    x: &Field,
    g: &MetricField,
    w: &WeightField,
    mode: Mode,
) -> Result<Field> {
    require_analytic(x, mode, "vector field")?;
    let n = g.dim();
    let dx = partials(x, mode)?;
    let dg = g.partials(mode)?;
    let dh = w.dh(mode)?;
    let out = Field::from_nodewise(g.grid().clone(), Kind::Scalar, |p, out| {
        let h = w.h_at(p);
        let mut s = 0.0;
        for i in 0..n {
            let mut tr = 0.0;
            for a in 0..n {
                for b in 0..n {
                    tr += g.ginv(a, b, p) * dg[i].t(a, b, p);
                }
            }
            s += dx[i].get(i, p) + x.get(i, p) * (2.0 * dh[i].at(p) / h + 0.5 * tr);
        }
        out[0] = s;
    });
    let exprs = match (mode, x.exprs(), g.exprs(), w.h_expr()) {
        (Mode::Analytic, Some(xe), Some(ge), Some(he)) => Some(vec![divergence_expr(xe, ge, he)?]),
        _ => None,
    };
    Ok(out.with_exprs(exprs))
}

/// Weighted Laplacian `Δ_μ f = div_μ ∇f = Δf + 2⟨∇h, ∇f⟩/h`; unweighted when
/// `w` is `None`.
pub fn laplacian(f: &Field, g: &MetricField, w: Option<&WeightField>, mode: Mode) -> Result<Field> {
    let unit;
    let w = match w {
        Some(w) => w,
        None => {
            unit = WeightField::unit(g.grid().clone());
            &unit
        }
    };
    let grad = grad_scalar(f, g, mode)?;
    divergence_weighted(&grad, g, w, mode)
}

/// Covariant derivative `(∇X)^s_i = ∂_i X^s + Γ^s_ip X^p` (component
/// `s*n + i`) and the Hilbert–Schmidt norm
/// `|∇X|² = (∇X)^s_i (∇X)^r_j g^{ij} g_sr` at every node.
pub fn covariant_derivative_vector(
    x: &Field,
    gamma: &ChristoffelField,
    g: &MetricField,
    mode: Mode,
) -> Result<(Field, Vec<f64>)> {
    require_analytic(x, mode, "vector field")?;
    let n = g.dim();
    let dx = partials(x, mode)?;
    let nabla = Field::from_nodewise(g.grid().clone(), Kind::Tensor2, |p, out| {
        for s in 0..n {
            for i in 0..n {
                let mut v = dx[i].get(s, p);
                for q in 0..n {
                    v += gamma.gamma(s, i, q, p) * x.get(q, p);
                }
                out[s * n + i] = v;
            }
        }
    });
    let hs = (0..g.grid().len())
        .map(|p| {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let gij = g.ginv(i, j, p);
                    if gij == 0.0 {
                        continue;
                    }
                    for s in 0..n {
                        for r in 0..n {
                            acc += nabla.t(s, i, p) * nabla.t(r, j, p) * gij * g.g(s, r, p);
                        }
                    }
                }
            }
            acc
        })
        .collect();
    Ok((nabla, hs))
}

/// Components `F_jk = ∂_k X♭_j − ∂_j X♭_k` of `dX♭` (up to the orientation
/// convention), stored at `j*n + k`.
pub fn one_form_exterior_components(x: &Field, g: &MetricField, mode: Mode) -> Result<Field> {
    require_analytic(x, mode, "vector field")?;
    let n = g.dim();
    let dx = partials(x, mode)?;
    let dg = g.partials(mode)?;
    // ∂_k (g_ij X^i)
    let dflat = |j: usize, k: usize, p: usize| -> f64 {
        (0..n)
            .map(|i| dg[k].t(i, j, p) * x.get(i, p) + g.g(i, j, p) * dx[k].get(i, p))
            .sum()
    };
    Ok(Field::from_nodewise(
        g.grid().clone(),
        Kind::Tensor2,
        |p, out| {
            for j in 0..n {
                for k in 0..n {
                    out[j * n + k] = dflat(j, k, p) - dflat(k, j, p);
                }
            }
        },
    ))
}

/// `|dX♭|²` at every node: `Σ_{j<k} Σ_{l<m} (g^{jl}g^{km} − g^{jm}g^{kl}) F_jk F_lm`.
/// For diagonal metrics the second product never contributes.
pub fn one_form_exterior(x: &Field, g: &MetricField, mode: Mode) -> Result<Field> {
    let n = g.dim();
    let f = one_form_exterior_components(x, g, mode)?;
    Ok(Field::from_nodewise(
        g.grid().clone(),
        Kind::Scalar,
        |p, out| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in j + 1..n {
                    for l in 0..n {
                        for m in l + 1..n {
                            let c = g.ginv(j, l, p) * g.ginv(k, m, p)
                                - g.ginv(j, m, p) * g.ginv(k, l, p);
                            acc += c * f.t(j, k, p) * f.t(l, m, p);
                        }
                    }
                }
            }
            out[0] = acc;
        },
    ))
}

/// Hessian of `V = −2 log h`, `∂_jk V − Γ^s_jk ∂_s V`, and `∂V`.
fn hessian_v(w: &WeightField, gamma: &ChristoffelField, mode: Mode) -> Result<(Field, Vec<Field>)> {
    let grid = gamma.grid().clone();
    let vfield = match (mode, w.v_expr()) {
        (Mode::Analytic, Some(e)) => Field::sample_scalar(grid.clone(), e.clone())?,
        (Mode::Analytic, None) => return Err(Error::MissingAnalytic("weight")),
        (Mode::Fd, _) => Field::scalar(grid.clone(), w.v().to_vec())?,
    };
    if w.is_constant() {
        let n = grid.dim();
        let zero = Field::zeros(grid.clone(), Kind::Tensor2);
        let dv = (0..n).map(|_| Field::constant(grid.clone(), 0.0)).collect();
        return Ok((zero, dv));
    }
    let hess = hessian_scalar(&vfield, gamma, mode)?;
    let dv = partials(&vfield, mode)?;
    Ok((hess, dv))
}

/// `Ric_{μ,N} = Ric + Hess V − (1/(N − n)) ∇V ⊗ ∇V` with `1/∞ = 0`.
/// `N = n` is accepted only for constant weights.
pub fn bakry_emery_ricci(
    g: &MetricField,
    w: &WeightField,
    big_n: f64,
    mode: Mode,
) -> Result<Field> {
    let n = g.dim();
    check_big_n(big_n, n, w)?;
    let gamma = christoffel(g, mode)?;
    let ric = ricci_from_christoffel(&gamma, mode)?;
    let (hess, dv) = hessian_v(w, &gamma, mode)?;
    let coef = if big_n.is_infinite() || w.is_constant() {
        0.0
    } else {
        1.0 / (big_n - n as f64)
    };
    Ok(Field::from_nodewise(
        g.grid().clone(),
        Kind::Tensor2,
        |p, out| {
            for j in 0..n {
                for k in 0..n {
                    out[j * n + k] =
                        ric.t(j, k, p) + hess.t(j, k, p) - coef * dv[j].at(p) * dv[k].at(p);
                }
            }
        },
    ))
}

pub(crate) fn check_big_n(big_n: f64, n: usize, w: &WeightField) -> Result<()> {
    if big_n.is_nan() || big_n < n as f64 {
        return Err(Error::Dimension {
            big_n,
            n,
            reason: "N must be at least the dimension",
        });
    }
    if big_n == n as f64 && !w.is_constant() {
        return Err(Error::Dimension {
            big_n,
            n,
            reason: "N = n requires a constant weight",
        });
    }
    Ok(())
}

/// Nodewise weighted Bochner defect for a gradient field,
/// `½Δ_μ|∇f|² − ⟨∇f, ∇Δ_μ f⟩ − |Hess f|² − Ric_{μ,∞}(∇f, ∇f)`,
/// which vanishes for smooth data.
pub fn bochner_pointwise_defect(
    f: &Field,
    g: &MetricField,
    w: &WeightField,
    mode: Mode,
) -> Result<Vec<f64>> {
    let n = g.dim();
    let gamma = christoffel(g, mode)?;
    let grad = grad_scalar(f, g, mode)?;
    let norm = grad_norm_sq(f, g, mode)?;
    let lap_norm = laplacian(&norm, g, Some(w), mode)?;
    let lap_f = laplacian(f, g, Some(w), mode)?;
    let dlap = partials(&lap_f, mode)?;
    let hess = hessian_scalar(f, &gamma, mode)?;
    let ric = bakry_emery_ricci(g, w, f64::INFINITY, mode)?;
    Ok((0..g.grid().len())
        .map(|p| {
            let mut hs = 0.0;
            let mut rxx = 0.0;
            let mut cross = 0.0;
            for i in 0..n {
                cross += grad.get(i, p) * dlap[i].at(p);
                for j in 0..n {
                    rxx += ric.t(i, j, p) * grad.get(i, p) * grad.get(j, p);
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
            0.5 * lap_norm.at(p) - cross - hs - rxx
        })
        .collect())
}

/// Lowers a vector field, `X♭_j = g_ij X^i`.
pub fn flat(x: &Field, g: &MetricField) -> Field {
    let n = g.dim();
    Field::from_nodewise(g.grid().clone(), Kind::Vector, |p, out| {
        for j in 0..n {
            out[j] = (0..n).map(|i| g.g(i, j, p) * x.get(i, p)).sum();
        }
    })
}

/// Raises a covector field, `ω♯^i = g^{ij} ω_j`.
pub fn sharp(omega: &Field, g: &MetricField) -> Field {
    let n = g.dim();
    Field::from_nodewise(g.grid().clone(), Kind::Vector, |p, out| {
        for i in 0..n {
            out[i] = (0..n).map(|j| g.ginv(i, j, p) * omega.get(j, p)).sum();
        }
    })
}

/// Largest value of `|·|` over the nodes of the grid interior that are not
/// flagged in `mask`.
pub fn interior_sup(values: &[f64], grid: &ChartGrid, mask: Option<&[bool]>) -> f64 {
    grid.box_nodes(&grid.interior_box())
        .into_iter()
        .filter(|&p| mask.is_none_or(|m| !m[p]))
        .map(|p| values[p].abs())
        .fold(0.0, f64::max)
}

/// Nodes adjacent (within one cell) to a kink of any metric component, as
/// found from the zero sets of the kink arguments recorded by the parser.
pub fn kink_mask(g: &MetricField) -> Vec<bool> {
    let grid = g.grid();
    let mut mask = vec![false; grid.len()];
    let Some(ex) = g.exprs() else {
        return mask;
    };
    let kinks: Vec<Expr> =
        ex.g.iter()
            .flatten()
            .flat_map(|e| e.kink_arguments())
            .collect();
    if kinks.is_empty() {
        return mask;
    }
    let n = grid.dim();
    for k in kinks {
        let Ok(vals) = crate::fields::sample_expr(grid, &k) else {
            continue;
        };
        for p in 0..grid.len() {
            if vals[p] == 0.0 {
                mask[p] = true;
            }
            for a in 0..n {
                if let Some(q) = grid.neighbor(p, a, 1) {
                    if vals[p].signum() != vals[q].signum() || vals[q] == 0.0 {
                        mask[p] = true;
                        mask[q] = true;
                    }
                }
            }
        }
    }
    // grow by one node so that stencils touching the kink are excluded too
    let mut grown = mask.clone();
    for p in 0..grid.len() {
        if mask[p] {
            for a in 0..n {
                for off in [-1, 1] {
                    if let Some(q) = grid.neighbor(p, a, off) {
                        grown[q] = true;
                    }
                }
            }
        }
    }
    grown
}
