//! Implicit-Euler heat flow for the weighted Laplacian with a zero Dirichlet
//! collar.
//!
//! The stiffness matrix is `S = ½ cellvol Σ_± D±ᵀ A D±` with `A = h²√|g| g^{ij}`
//! and `D±` the forward/backward difference gradients, so it is symmetric and
//! positive semidefinite; the mass matrix is lumped, `M = diag(h²√|g| cellvol)`.

use std::io::Write;

use rayon::prelude::*;

use crate::catalog::Model;
use crate::error::{Error, Result};
use crate::fields::{ChartGrid, Field, IndexBox, MetricField, WeightField};

pub const CG_TOLERANCE: f64 = 1e-10;

/// Assembled discrete weighted Laplacian on one chart.
pub struct HeatOperator {
    grid: std::sync::Arc<ChartGrid>,
    mass: Vec<f64>,
    /// `A = ρ g^{ij}` per node, `n×n` row-major.
    coef: Vec<f64>,
    interior: Vec<bool>,
}

/// State of a flow after some steps.
#[derive(Debug, Clone)]
pub struct HeatState {
    pub u: Field,
    pub t: f64,
    pub dt: f64,
    pub steps: usize,
    /// Largest relative CG residual over the steps.
    pub residual: f64,
}

impl HeatOperator {
    pub fn new(g: &MetricField, w: &WeightField) -> Self {
        let grid = g.grid().clone();
        let n = grid.dim();
        let cv = grid.cell_volume();
        let rho = w.density(g);
        let mass = rho.iter().map(|r| r * cv).collect();
        let mut coef = vec![0.0; grid.len() * n * n];
        for p in 0..grid.len() {
            for i in 0..n {
                for j in 0..n {
                    coef[p * n * n + i * n + j] = rho[p] * g.ginv(i, j, p);
                }
            }
        }
        let interior = (0..grid.len()).map(|p| grid.is_interior(p)).collect();
        HeatOperator {
            grid,
            mass,
            coef,
            interior,
        }
    }

    pub fn grid(&self) -> &ChartGrid {
        &self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `S u`, with `u` taken as zero on the collar.
    pub fn stiffness(&self, u: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let n = grid.dim();
        let h: Vec<f64> = (0..n).map(|a| grid.spacing(a)).collect();
        let half_cv = 0.5 * grid.cell_volume();
        let val = |p: usize| if self.interior[p] { u[p] } else { 0.0 };
        let mut out = vec![0.0; grid.len()];
        for s in [1isize, -1] {
            // flux F^s_a(q) = Σ_b A_ab(q) s (u(q + s e_b) − u(q)) / h_b
            let flux: Vec<[f64; 4]> = (0..grid.len())
                .into_par_iter()
                .map(|q| {
                    let mut d = [0.0; 4];
                    for b in 0..n {
                        match grid.neighbor(q, b, s) {
                            Some(r) => d[b] = s as f64 * (val(r) - val(q)) / h[b],
                            None => return [0.0; 4],
                        }
                    }
                    let mut f = [0.0; 4];
                    for a in 0..n {
                        f[a] = (0..n)
                            .map(|b| self.coef[q * n * n + a * n + b] * d[b])
                            .sum();
                    }
                    f
                })
                .collect();
            let add: Vec<f64> = (0..grid.len())
                .into_par_iter()
                .map(|p| {
                    let mut acc = 0.0;
                    for a in 0..n {
                        acc -= s as f64 * flux[p][a] / h[a];
                        if let Some(q) = grid.neighbor(p, a, -s) {
                            acc += s as f64 * flux[q][a] / h[a];
                        }
                    }
                    acc
                })
                .collect();
            for (o, v) in out.iter_mut().zip(add) {
                *o += half_cv * v;
            }
        }
        out
    }

    /// Discrete Dirichlet energy `½ uᵀ S u`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let su = self.stiffness(u);
        0.5 * (0..u.len())
            .filter(|&p| self.interior[p])
            .map(|p| u[p] * su[p])
            .sum::<f64>()
    }

    /// `∫ u dμ` with the lumped mass.
    pub fn integral(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.mass).map(|(a, b)| a * b).sum()
    }

    fn apply(&self, u: &[f64], dt: f64) -> Vec<f64> {
        let su = self.stiffness(u);
        (0..u.len())
            .map(|p| {
                if self.interior[p] {
                    self.mass[p] * u[p] + dt * su[p]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// One implicit Euler step `(M + Δt S) u⁺ = M u`, collar set to zero.
    pub fn step(&self, u: &[f64], dt: f64) -> Result<(Vec<f64>, f64)> {
        if !(dt > 0.0) {
            return Err(Error::Invalid(format!("Δt must be positive, got {dt}")));
        }
        let b: Vec<f64> = (0..u.len())
            .map(|p| {
                if self.interior[p] {
                    self.mass[p] * u[p]
                } else {
                    0.0
                }
            })
            .collect();
        let mut x: Vec<f64> = (0..u.len())
            .map(|p| if self.interior[p] { u[p] } else { 0.0 })
            .collect();
        let bnorm = norm(&b);
        if bnorm == 0.0 {
            return Ok((vec![0.0; u.len()], 0.0));
        }
        let ax = self.apply(&x, dt);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
        let mut d = r.clone();
        let mut rr = dot(&r, &r);
        let max_iter = 10 * u.len();
        for _ in 0..max_iter {
            if rr.sqrt() <= CG_TOLERANCE * bnorm {
                return Ok((x, rr.sqrt() / bnorm));
            }
            let ad = self.apply(&d, dt);
            let alpha = rr / dot(&d, &ad);
            for p in 0..x.len() {
                x[p] += alpha * d[p];
                r[p] -= alpha * ad[p];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for p in 0..d.len() {
                d[p] = r[p] + beta * d[p];
            }
        }
        if rr.sqrt() <= CG_TOLERANCE * bnorm {
            return Ok((x, rr.sqrt() / bnorm));
        }
        Err(Error::Solver {
            iterations: max_iter,
            residual: rr.sqrt() / bnorm,
        })
    }

    /// `steps` implicit Euler steps of size `T/steps`; `T = 0` returns `u₀`.
    pub fn flow(&self, u0: &Field, t: f64, steps: usize) -> Result<HeatState> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::Invalid(format!("T must be nonnegative, got {t}")));
        }
        if t == 0.0 || steps == 0 {
            return Ok(HeatState {
                u: u0.clone(),
                t: 0.0,
                dt: 0.0,
                steps: 0,
                residual: 0.0,
            });
        }
        let dt = t / steps as f64;
        let mut u = u0.comp(0).to_vec();
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            let (next, res) = self.step(&u, dt)?;
            worst = worst.max(res);
            u = next;
        }
        Ok(HeatState {
            u: Field::scalar(self.grid.clone(), u)?,
            t,
            dt,
            steps,
            residual: worst,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn heat_step(u: &Field, g: &MetricField, w: &WeightField, dt: f64) -> Result<Field> {
    let op = HeatOperator::new(g, w);
    let (next, _) = op.step(u.comp(0), dt)?;
    Field::scalar(g.grid().clone(), next)
}

pub fn heat_flow(
    u0: &Field,
    g: &MetricField,
    w: &WeightField,
    t: f64,
    steps: usize,
) -> Result<HeatState> {
    HeatOperator::new(g, w).flow(u0, t, steps)
}

/// Per-step maximum principle record.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPrincipleReport {
    pub steps: usize,
    /// Largest `max(u_k − max u₀, min u₀ − u_k, 0)` over all steps and nodes.
    pub violation: f64,
    /// Largest relative CG residual.
    pub residual: f64,
    /// `∫u dμ` after each step; non-increasing for `u₀ ≥ 0` under the collar.
    pub masses: Vec<f64>,
}

/// Runs `steps` steps and records bound violations against the initial range
/// (the range is widened to include the zero collar data).
pub fn maximum_principle_check(
    op: &HeatOperator,
    u0: &Field,
    dt: f64,
    steps: usize,
) -> Result<MaxPrincipleReport> {
    let mut u = u0.comp(0).to_vec();
    let hi = u.iter().copied().fold(0.0, f64::max);
    let lo = u.iter().copied().fold(0.0, f64::min);
    let mut violation: f64 = 0.0;
    let mut residual: f64 = 0.0;
    let mut masses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (next, res) = op.step(&u, dt)?;
        residual = residual.max(res);
        for &v in &next {
            violation = violation.max(v - hi).max(lo - v);
        }
        masses.push(op.integral(&next));
        u = next;
    }
    Ok(MaxPrincipleReport {
        steps,
        violation,
        residual,
        masses,
    })
}

/// One row of the gradient-estimate check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRow {
    pub t: f64,
    /// `max (|∇H_t f|² − e^{−2Kt} H_t|∇f|²)` over the deep interior.
    pub violation: f64,
    pub tolerance: f64,
    pub deep_interior: IndexBox,
}

impl GradientRow {
    pub fn passes(&self) -> bool {
        self.violation <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub model: String,
    pub k: f64,
    pub rows: Vec<GradientRow>,
}

impl GradientReport {
    pub fn passes(&self) -> bool {
        self.rows.iter().all(GradientRow::passes)
    }

    /// CSV with header `t,violation,tolerance,verdict`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "t,violation,tolerance,verdict")?;
        for r in &self.rows {
            let v = if r.passes() { "PASS" } else { "FAIL" };
            writeln!(w, "{:e},{:e},{:e},{v}", r.t, r.violation, r.tolerance)?;
        }
        Ok(())
    }
}

/// Boundary-influence margin: nodes at least `6√t` from the collar.
pub fn deep_interior(grid: &ChartGrid, t: f64) -> IndexBox {
    let mut b = grid.interior_box();
    let reach = 6.0 * t.sqrt();
    for a in 0..grid.dim() {
        let k = (reach / grid.spacing(a)).ceil() as usize;
        b.lo[a] += k;
        b.hi[a] = b.hi[a].saturating_sub(k);
    }
    b
}

/// Squared gradient norm `g^{ij} D_i u D_j u` with central differences.
fn grad_sq(g: &MetricField, u: &Field) -> Vec<f64> {
    let n = g.dim();
    let d: Vec<Field> = (0..n).map(|a| u.fd_partial(a)).collect();
    (0..g.grid().len())
        .map(|p| {
            let v: Vec<f64> = d.iter().map(|f| f.at(p)).collect();
            g.inner_dual(&v, &v, p)
        })
        .collect()
}

/// `|∇H_t f|² ≤ e^{−2Kt} H_t(|∇f|²)` on the deep interior, for models whose
/// curvature bound `Ric_{μ,∞} ≥ K g` holds exactly. Each `t` uses `steps`
/// implicit Euler steps.
pub fn bakry_emery_gradient_check(
    f: &Field,
    model: &Model,
    k: f64,
    ts: &[f64],
    steps: usize,
) -> Result<GradientReport> {
    let certified = model.spec.heat_certified && model.spec.k_lower.is_some_and(|kl| k <= kl);
    if !certified {
        return Err(Error::Uncertified(format!("{} with K = {k}", model.name())));
    }
    let g = &model.metric;
    let grid = g.grid();
    let op = HeatOperator::new(g, &model.weight);
    let df2 = Field::scalar(grid.clone(), grad_sq(g, f))?;
    let h2 = grid.h_max().powi(2);
    let rows = ts
        .iter()
        .map(|&t| {
            let deep = deep_interior(grid, t);
            if deep.is_empty(grid.dim()) {
                return Err(Error::Invalid(format!(
                    "t = {t} leaves no deep interior on this chart"
                )));
            }
            let a = op.flow(f, t, steps)?;
            let b = op.flow(&df2, t, steps)?;
            let lhs = grad_sq(g, &a.u);
            let decay = (-2.0 * k * t).exp();
            let violation = grid
                .box_nodes(&deep)
                .into_iter()
                .map(|p| lhs[p] - decay * b.u.at(p))
                .fold(f64::NEG_INFINITY, f64::max);
            let scale = f.sup_norm(None).max(df2.sup_norm(None)).max(1.0);
            Ok(GradientRow {
                t,
                violation,
                tolerance: 5.0 * h2 + a.residual.max(b.residual) * scale,
                deep_interior: deep,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradientReport {
        model: model.name().to_string(),
        k,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::catalog::{self, Model};
    use crate::expr::parse_expr;
    use crate::fields::cutoff::bump_field;

    fn scalar(g: &Arc<ChartGrid>, s: &str) -> Field {
        Field::sample_scalar(g.clone(), parse_expr(s, g.dim()).unwrap()).unwrap()
    }

    #[test]
    fn zero_stays_zero() {
        let m = Model::standard("flat", 21).unwrap();
        let u = Field::constant(m.metric.grid().clone(), 0.0);
        let v = heat_step(&u, &m.metric, &m.weight, 0.01).unwrap();
        assert!(v.comp(0).iter().all(|x| *x == 0.0));
        assert!(heat_step(&u, &m.metric, &m.weight, 0.0).is_err());
    }

    #[test]
    fn stiffness_is_symmetric_and_annihilates_constants_inside() {
        let m = Model::standard("sphere_polar", 15).unwrap();
        let op = HeatOperator::new(&m.metric, &m.weight);
        let grid = m.metric.grid().clone();
        let u = scalar(&grid, "sin(3*x1)*cos(x2)");
        let v = scalar(&grid, "x1*x2^2");
        let su = op.stiffness(u.comp(0));
        let sv = op.stiffness(v.comp(0));
        let mask = |p: usize| grid.is_interior(p);
        let a: f64 = (0..grid.len())
            .filter(|&p| mask(p))
            .map(|p| v.at(p) * su[p])
            .sum();
        let b: f64 = (0..grid.len())
            .filter(|&p| mask(p))
            .map(|p| u.at(p) * sv[p])
            .sum();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        assert!(op.energy(u.comp(0)) > 0.0);
    }

    #[test]
    fn sine_mode_decay_1d() {
        let chart = catalog::Chart {
            lo: vec![0.0],
            hi: vec![1.0],
            m: vec![201],
            margin: 2,
        };
        let m = Model::build(catalog::spec("flat", 1).unwrap(), &chart).unwrap();
        let grid = m.metric.grid().clone();
        // the collar is 1 cell wide in the interior sense; shift the mode onto it
        let lo = grid.axis_coord(0, 1);
        let len = grid.axis_coord(0, 199) - lo;
        let u = scalar(&grid, &format!("sin(3.141592653589793*(x1 - {lo})/{len})"));
        let dt = 1e-4;
        let v = heat_step(&u, &m.metric, &m.weight, dt).unwrap();
        let k2 = (std::f64::consts::PI / len).powi(2);
        let want = 1.0 / (1.0 + dt * k2);
        let mid = 100;
        let got = v.at(mid) / u.at(mid);
        assert!((got - want).abs() / want < 0.05, "{got} vs {want}");
    }

    #[test]
    fn maximum_principle_and_mass() {
        for name in ["flat", "sphere_polar", "gaussian_weight"] {
            let m = Model::standard(name, 41).unwrap();
            let grid = m.metric.grid().clone();
            let c: Vec<f64> = (0..2).map(|a| 0.5 * (grid.lo(a) + grid.hi(a))).collect();
            let r = 0.35 * (grid.hi(0) - grid.lo(0));
            let u = bump_field(grid.clone(), &c, r, 4.0).unwrap();
            let op = HeatOperator::new(&m.metric, &m.weight);
            let rep = maximum_principle_check(&op, &u, 1e-3, 50).unwrap();
            assert!(rep.violation <= 1e-9, "{name}: {}", rep.violation);
            let m0 = op.integral(u.comp(0));
            let mut prev = m0;
            for &mass in &rep.masses {
                assert!(mass <= prev * (1.0 + 1e-9));
                prev = mass;
            }
        }
    }

    #[test]
    fn semigroup_and_zero_time() {
        let m = Model::standard("gaussian_weight", 31).unwrap();
        let grid = m.metric.grid().clone();
        let u = bump_field(grid.clone(), &[0.2, 0.0], 1.5, 4.0).unwrap();
        let op = HeatOperator::new(&m.metric, &m.weight);
        let zero = op.flow(&u, 0.0, 10).unwrap();
        assert_eq!(zero.u.comp(0), u.comp(0));
        let one = op.flow(&u, 0.02, 20).unwrap();
        let half = op.flow(&u, 0.01, 10).unwrap();
        let two = op.flow(&half.u, 0.01, 10).unwrap();
        let diff: f64 = one
            .u
            .comp(0)
            .iter()
            .zip(two.u.comp(0))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
            * grid.cell_volume().sqrt();
        assert!(diff <= 1e-8);
    }

    #[test]
    fn self_adjoint_and_energy_decay() {
        let m = Model::standard("sphere_polar", 31).unwrap();
        let grid = m.metric.grid().clone();
        let u = bump_field(grid.clone(), &[1.4, 1.0], 0.6, 4.0).unwrap();
        let v = bump_field(grid.clone(), &[1.7, 0.9], 0.5, 3.0).unwrap();
        let op = HeatOperator::new(&m.metric, &m.weight);
        let hu = op.flow(&u, 0.01, 5).unwrap().u;
        let hv = op.flow(&v, 0.01, 5).unwrap().u;
        let a: f64 = (0..grid.len())
            .map(|p| hu.at(p) * v.at(p) * op.mass()[p])
            .sum();
        let b: f64 = (0..grid.len())
            .map(|p| u.at(p) * hv.at(p) * op.mass()[p])
            .sum();
        assert!((a - b).abs() <= 1e-8);

        let mut w = u.comp(0).to_vec();
        let mut e = op.energy(&w);
        for _ in 0..10 {
            w = op.step(&w, 0.002).unwrap().0;
            let e2 = op.energy(&w);
            assert!(e2 <= e * (1.0 + 1e-10));
            e = e2;
        }
    }

    #[test]
    fn gradient_estimate_certified_models() {
        let flat = {
            let s = catalog::spec("flat", 2).unwrap();
            let chart = catalog::Chart {
                lo: vec![-2.0, -2.0],
                hi: vec![2.0, 2.0],
                m: vec![81, 81],
                margin: 2,
            };
            Model::build(s, &chart).unwrap()
        };
        let gauss = Model::standard("gaussian_weight", 81).unwrap();
        for (m, k) in [(&flat, 0.0), (&gauss, 1.0)] {
            let f = bump_field(m.metric.grid().clone(), &[0.2, -0.1], 1.0, 4.0).unwrap();
            let r = bakry_emery_gradient_check(&f, m, k, &[0.005, 0.01], 50).unwrap();
            assert!(r.passes(), "{}: {:?}", m.name(), r.rows);
        }
        let sphere = Model::standard("sphere_polar", 21).unwrap();
        let f = Field::constant(sphere.metric.grid().clone(), 0.0);
        assert!(matches!(
            bakry_emery_gradient_check(&f, &sphere, 1.0, &[0.01], 5),
            Err(Error::Uncertified(_))
        ));
        let f = bump_field(gauss.metric.grid().clone(), &[0.0, 0.0], 1.0, 4.0).unwrap();
        assert!(bakry_emery_gradient_check(&f, &gauss, 1.5, &[0.01], 5).is_err());
    }
}
