use super::{interior_region, nodes_in_ball, norm, plateau, region_nodes};
use crate::error::{Error, Result};
use crate::fields::{Field, Kind};

/// `χ(x) = amplitude · S((outer − |x − c|)/(outer − inner))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialBump {
    pub center: Vec<f64>,
    pub inner: f64,
    pub outer: f64,
    pub amplitude: f64,
    pub round: usize,
}

impl RadialBump {
    pub fn radial(&self, r: f64) -> f64 {
        self.amplitude * plateau(r, self.inner, self.outer).0
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.radial(norm(&d))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RotSymOptions {
    pub max_rounds: usize,
    /// Smallest ball radius, in grid cells.
    pub min_radius_cells: f64,
}

impl Default for RotSymOptions {
    fn default() -> Self {
        RotSymOptions {
            max_rounds: 400,
            min_radius_cells: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RotSymApprox {
    pub bumps: Vec<RadialBump>,
    pub rounds: usize,
    /// Round count guaranteed by the contraction `1 − 1/(2ĉ)`.
    pub predicted_rounds: usize,
    /// Largest measured ball overlap `ĉ` over all rounds.
    pub c_hat: usize,
    /// Largest structural family count of the lattice covers.
    pub families: usize,
    /// `sup_K φ_j` at the start of each round.
    pub history: Vec<f64>,
    /// Ball radius of each round.
    pub radii: Vec<f64>,
    /// `Σ χ_p` on the grid.
    pub sum: Field,
    /// `‖φ − Σχ_p‖_{C⁰(K)}`.
    pub residual_sup: f64,
    /// `min (φ − Σχ_p)` over every node.
    pub min_gap: f64,
    pub converged: bool,
}

/// Lattice of centres covering `K` by balls `B_{ρ/2}`, with family sizes
/// `t_a` such that equal residues mod `t` give disjoint `B_ρ`.
struct Lattice {
    lo: Vec<f64>,
    steps: Vec<usize>,
    spacing: Vec<f64>,
    families: usize,
}

impl Lattice {
    fn new(region: &[(f64, f64)], rho: f64) -> Self {
        let n = region.len();
        let s_max = rho / (n as f64).sqrt();
        let mut steps = Vec::with_capacity(n);
        let mut spacing = Vec::with_capacity(n);
        let mut families = 1;
        for &(a, b) in region {
            let len = b - a;
            let k = if len > 0.0 {
                (len / s_max).ceil() as usize
            } else {
                0
            };
            let s = if k > 0 { len / k as f64 } else { 0.0 };
            families *= if s > 0.0 {
                (2.0 * rho / s).floor() as usize + 1
            } else {
                1
            };
            steps.push(k);
            spacing.push(s);
        }
        Lattice {
            lo: region.iter().map(|r| r.0).collect(),
            steps,
            spacing,
            families,
        }
    }

    fn centers(&self) -> Vec<Vec<f64>> {
        let n = self.lo.len();
        let lo = vec![0i64; n];
        let hi: Vec<i64> = self.steps.iter().map(|&k| k as i64).collect();
        let mut out = Vec::new();
        super::odometer(&lo, &hi, |z| {
            out.push(
                (0..n)
                    .map(|a| self.lo[a] + z[a] as f64 * self.spacing[a])
                    .collect(),
            );
        });
        out
    }

    /// Index of the nearest centre, in `centers()` order.
    fn nearest(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for a in 0..x.len() {
            let k = if self.spacing[a] > 0.0 {
                ((x[a] - self.lo[a]) / self.spacing[a])
                    .round()
                    .clamp(0.0, self.steps[a] as f64) as usize
            } else {
                0
            };
            idx += k * stride;
            stride *= self.steps[a] + 1;
        }
        idx
    }
}

/// Approximates `φ ≥ 0` from below by radial bumps centred in `K` (the
/// support box of `φ`, else the chart interior) with radii at most `R(x)`.
/// Each round covers `K` by a lattice, sets `θ_k = min φ_j` on each ball and
/// subtracts `Σ θ_k/ĉ η_k`; the ball radius halves until every node of `K`
/// sees a ball over which `φ_j` drops by at most `sup φ_j / 2`.
pub fn rotsym_approximate(
    phi: &Field,
    radius: &dyn Fn(&[f64]) -> f64,
    eps: f64,
    opts: RotSymOptions,
) -> Result<RotSymApprox> {
    if phi.kind() != Kind::Scalar {
        return Err(Error::Invalid("φ must be a scalar field".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("ε must be positive, got {eps}")));
    }
    let grid = phi.grid().clone();
    let values = phi.comp(0);
    if let Some(p) = (0..grid.len()).find(|&p| values[p] < 0.0) {
        return Err(Error::Invalid(format!(
            "φ is negative ({:e}) at {:?}",
            values[p],
            grid.point(p)
        )));
    }
    let region: Vec<(f64, f64)> = match phi.support() {
        Some(s) => {
            let inner = interior_region(&grid);
            s.iter()
                .zip(&inner)
                .map(|(a, b)| (a.0.max(b.0), a.1.min(b.1)))
                .collect()
        }
        None => interior_region(&grid),
    };
    let k_nodes = region_nodes(&grid, &region);
    let mut r_min = f64::INFINITY;
    for &p in &k_nodes {
        let x = grid.point(p);
        let r = radius(&x);
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Invalid(format!("admissible radius is {r} at {x:?}")));
        }
        r_min = r_min.min(r);
    }
    let diam = norm(
        &region
            .iter()
            .map(|r| (r.1 - r.0).max(0.0))
            .collect::<Vec<_>>(),
    );
    let floor = opts.min_radius_cells * grid.h_max();

    let mut residual = values.to_vec();
    let mut sum = vec![0.0; grid.len()];
    let mut bumps = Vec::new();
    let mut history = Vec::new();
    let mut radii = Vec::new();
    let mut c_hat = 1;
    let mut families = 1;
    let sup_k = |res: &[f64]| k_nodes.iter().map(|&p| res[p]).fold(0.0, f64::max);
    let sup0 = sup_k(&residual);
    let mut converged = false;
    let mut rounds = 0;
    let mut rho_top = r_min.min(diam.max(floor));

    loop {
        let sup = sup_k(&residual);
        history.push(sup);
        if sup <= eps {
            converged = true;
            break;
        }
        if rounds == opts.max_rounds {
            break;
        }
        // largest dyadic radius passing the oscillation test
        let mut rho = rho_top;
        let (lattice, centers, outer, theta) = loop {
            let lattice = Lattice::new(&region, rho);
            let centers = lattice.centers();
            let outer: Vec<f64> = centers.iter().map(|c| rho.min(radius(c))).collect();
            let theta: Vec<f64> = centers
                .iter()
                .zip(&outer)
                .map(|(c, &r)| {
                    nodes_in_ball(&grid, c, r)
                        .into_iter()
                        .map(|p| residual[p])
                        .fold(f64::INFINITY, f64::min)
                })
                .map(|t| if t.is_finite() { t } else { 0.0 })
                .collect();
            let ok = k_nodes.iter().all(|&p| {
                let x = grid.point(p);
                let k = lattice.nearest(&x);
                let d: Vec<f64> = x.iter().zip(&centers[k]).map(|(a, b)| a - b).collect();
                norm(&d) <= 0.5 * outer[k] && residual[p] - theta[k] <= 0.5 * sup
            });
            if ok || 0.5 * rho < floor {
                break (lattice, centers, outer, theta);
            }
            rho *= 0.5;
        };
        rho_top = rho;
        families = families.max(lattice.families);

        // overlap ĉ of the open balls at grid nodes
        let mut count = vec![0usize; grid.len()];
        let mut members = Vec::with_capacity(centers.len());
        for (c, &r) in centers.iter().zip(&outer) {
            let nodes: Vec<(usize, f64)> = nodes_in_ball(&grid, c, r)
                .into_iter()
                .filter_map(|p| {
                    let x = grid.point(p);
                    let d: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
                    let dist = norm(&d);
                    (dist < r).then_some((p, dist))
                })
                .collect();
            for &(p, _) in &nodes {
                count[p] += 1;
            }
            members.push(nodes);
        }
        let c_round = count.iter().copied().max().unwrap_or(1).max(1);
        c_hat = c_hat.max(c_round);

        for (k, nodes) in members.into_iter().enumerate() {
            if theta[k] <= 0.0 || nodes.is_empty() {
                continue;
            }
            let bump = RadialBump {
                center: centers[k].clone(),
                inner: 0.5 * outer[k],
                outer: outer[k],
                amplitude: theta[k] / c_round as f64,
                round: rounds,
            };
            for (p, dist) in nodes {
                let v = bump.radial(dist);
                sum[p] += v;
                residual[p] -= v;
            }
            bumps.push(bump);
        }
        radii.push(rho);
        rounds += 1;
    }

    let residual_sup = sup_k(&residual);
    let min_gap = (0..grid.len())
        .map(|p| values[p] - sum[p])
        .fold(f64::INFINITY, f64::min);
    let contraction = 1.0 - 1.0 / (2.0 * c_hat as f64);
    let predicted_rounds = if sup0 <= eps {
        0
    } else {
        ((eps.ln() - sup0.ln()) / contraction.ln()).ceil() as usize
    };
    Ok(RotSymApprox {
        bumps,
        rounds,
        predicted_rounds,
        c_hat,
        families,
        history,
        radii,
        sum: Field::scalar(grid, sum)?,
        residual_sup,
        min_gap,
        converged,
    })
}
