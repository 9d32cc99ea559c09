//! Named metric/weight models with their known curvature facts.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr};
use crate::fields::{ChartGrid, Field, Kind, MetricField, WeightField};

pub const NAMES: [&str; 7] = [
    "flat",
    "sphere_polar",
    "hyperbolic_halfplane",
    "polar_flat",
    "gaussian_weight",
    "lip_cone",
    "c11_bump",
];

/// Box, resolution and collar of a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub m: Vec<usize>,
    pub margin: usize,
}

impl Chart {
    pub fn grid(&self) -> Result<Arc<ChartGrid>> {
        Ok(Arc::new(ChartGrid::new(
            self.lo.clone(),
            self.hi.clone(),
            self.m.clone(),
            self.margin,
        )?))
    }
}

/// Sources and facts of a catalog model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: &'static str,
    pub dim: usize,
    /// Diagonal metric entries.
    pub metric: Vec<String>,
    /// Potential `V`; `None` means `h ≡ 1`.
    pub potential: Option<String>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// `κ` with `Ric_{μ,∞} = κ g` almost everywhere.
    pub ricci_factor: String,
    /// Largest `K` with `Ric_{μ,∞} ≥ K g` in the distributional sense.
    pub k_lower: Option<f64>,
    /// Smallest `N` for which `BE(k_lower, N)` holds.
    pub be_dim: Option<f64>,
    /// Cleared for the heat-flow gradient estimate.
    pub heat_certified: bool,
    pub regularity: &'static str,
    /// Curvature carried by a kink, not captured by `ricci_factor`.
    pub singular_note: Option<&'static str>,
}

impl ModelSpec {
    pub fn default_chart(&self, m: usize) -> Chart {
        Chart {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            m: vec![m; self.dim],
            margin: 2,
        }
    }

    /// Every expression source of the model.
    pub fn sources(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.metric.iter().map(String::as_str).collect();
        out.extend(self.potential.as_deref());
        out.push(&self.ricci_factor);
        out
    }
}

/// Looks up a model; `dim` applies to `flat` and `gaussian_weight` only.
pub fn spec(name: &str, dim: usize) -> Result<ModelSpec> {
    let two = |metric: [&str; 2], lo: [f64; 2], hi: [f64; 2]| {
        (
            metric.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            lo.to_vec(),
            hi.to_vec(),
        )
    };
    if !(1..=crate::fields::MAX_DIM).contains(&dim) {
        return Err(Error::Invalid(format!("dimension {dim} is not supported")));
    }
    let ones = vec!["1".to_string(); dim];
    let s = match name {
        "flat" => ModelSpec {
            name: "flat",
            dim,
            metric: ones,
            potential: None,
            lo: vec![-1.0; dim],
            hi: vec![1.0; dim],
            ricci_factor: "0".into(),
            k_lower: Some(0.0),
            be_dim: Some(dim as f64),
            heat_certified: true,
            regularity: "smooth",
            singular_note: None,
        },
        "gaussian_weight" => ModelSpec {
            name: "gaussian_weight",
            dim,
            metric: ones,
            potential: Some(format!(
                "({})/2",
                (1..=dim)
                    .map(|i| format!("x{i}^2"))
                    .collect::<Vec<_>>()
                    .join(" + ")
            )),
            lo: vec![-3.0; dim],
            hi: vec![3.0; dim],
            ricci_factor: "1".into(),
            k_lower: Some(1.0),
            be_dim: Some(f64::INFINITY),
            heat_certified: true,
            regularity: "smooth",
            singular_note: None,
        },
        "sphere_polar" => {
            let (metric, lo, hi) = two(["1", "sin(x1)^2"], [0.3, 0.0], [PI - 0.3, 2.0]);
            ModelSpec {
                name: "sphere_polar",
                dim: 2,
                metric,
                potential: None,
                lo,
                hi,
                ricci_factor: "1".into(),
                k_lower: Some(1.0),
                be_dim: Some(2.0),
                heat_certified: false,
                regularity: "smooth",
                singular_note: None,
            }
        }
        "hyperbolic_halfplane" => {
            let (metric, lo, hi) = two(["x2^-2", "x2^-2"], [-1.0, 1.0], [1.0, 3.0]);
            ModelSpec {
                name: "hyperbolic_halfplane",
                dim: 2,
                metric,
                potential: None,
                lo,
                hi,
                ricci_factor: "-1".into(),
                k_lower: Some(-1.0),
                be_dim: Some(2.0),
                heat_certified: false,
                regularity: "smooth",
                singular_note: None,
            }
        }
        "polar_flat" => {
            let (metric, lo, hi) = two(["1", "x1^2"], [0.5, 0.0], [2.0, 2.0]);
            ModelSpec {
                name: "polar_flat",
                dim: 2,
                metric,
                potential: None,
                lo,
                hi,
                ricci_factor: "0".into(),
                k_lower: Some(0.0),
                be_dim: Some(2.0),
                heat_certified: false,
                regularity: "smooth",
                singular_note: None,
            }
        }
        "lip_cone" => {
            let (metric, lo, hi) = two(["1 + abs(x1)", "1 + abs(x1)"], [-1.0, -1.0], [1.0, 1.0]);
            ModelSpec {
                name: "lip_cone",
                dim: 2,
                metric,
                potential: None,
                lo,
                hi,
                ricci_factor: "0.5/(1 + abs(x1))^3".into(),
                k_lower: None,
                be_dim: None,
                heat_certified: false,
                regularity: "C^{0,1}",
                singular_note: Some("Ric has the singular part −δ(x1)·δ_ij on the line x1 = 0"),
            }
        }
        "c11_bump" => {
            let (metric, lo, hi) = two(["1", "1 + max(0, x1)^2"], [-1.0, -1.0], [1.0, 1.0]);
            ModelSpec {
                name: "c11_bump",
                dim: 2,
                metric,
                potential: None,
                lo,
                hi,
                ricci_factor: "-step(x1)/(1 + x1^2)^2".into(),
                k_lower: Some(-1.0),
                be_dim: Some(2.0),
                heat_certified: false,
                regularity: "C^{1,1}",
                singular_note: None,
            }
        }
        other => {
            return Err(Error::Invalid(format!(
                "unknown catalog model `{other}` (known: {})",
                NAMES.join(", ")
            )))
        }
    };
    if s.dim != dim && !matches!(name, "flat" | "gaussian_weight") {
        return Err(Error::Invalid(format!("model `{name}` is two-dimensional")));
    }
    Ok(s)
}

/// A model sampled on a chart.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub metric: MetricField,
    pub weight: WeightField,
}

impl Model {
    pub fn build(spec: ModelSpec, chart: &Chart) -> Result<Self> {
        let grid = chart.grid()?;
        let n = spec.dim;
        if grid.dim() != n {
            return Err(Error::Invalid(format!(
                "chart has dimension {}, model `{}` needs {n}",
                grid.dim(),
                spec.name
            )));
        }
        let diag = spec
            .metric
            .iter()
            .map(|s| parse_expr(s, n))
            .collect::<Result<Vec<_>, _>>()?;
        let metric = MetricField::diagonal(grid.clone(), diag)?;
        let weight = match &spec.potential {
            Some(v) => WeightField::from_v(grid, parse_expr(v, n)?)?,
            None => WeightField::unit(grid),
        };
        Ok(Model {
            spec,
            metric,
            weight,
        })
    }

    /// Model on its default chart with `m` nodes per axis.
    pub fn standard(name: &str, m: usize) -> Result<Self> {
        let s = spec(name, 2)?;
        let chart = s.default_chart(m);
        Model::build(s, &chart)
    }

    pub fn name(&self) -> &str {
        self.spec.name
    }

    /// `Ric_{μ,∞} = κ g` sampled on the grid (absolutely continuous part).
    pub fn exact_ricci(&self) -> Result<Field> {
        let n = self.spec.dim;
        let kappa = parse_expr(&self.spec.ricci_factor, n)?;
        let g = self
            .metric
            .exprs()
            .expect("catalog metrics carry expressions");
        let comps: Vec<Expr> = (0..n * n)
            .map(|c| Expr::mul(kappa.clone(), g.g[c / n][c % n].clone()))
            .collect();
        Field::sample(self.metric.grid().clone(), Kind::Tensor2, comps)?.into_symmetric()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature;
    use crate::fields::Mode;

    #[test]
    fn every_name_builds() {
        for name in NAMES {
            let m = Model::standard(name, 21).unwrap();
            assert_eq!(m.name(), name);
            for s in m.spec.sources() {
                parse_expr(s, 2).unwrap();
            }
        }
        assert!(spec("torus", 2).is_err());
        assert!(spec("sphere_polar", 3).is_err());
        assert_eq!(spec("flat", 3).unwrap().metric.len(), 3);
    }

    #[test]
    fn exact_ricci_matches_analytic_curvature() {
        for name in [
            "flat",
            "sphere_polar",
            "hyperbolic_halfplane",
            "polar_flat",
            "gaussian_weight",
        ] {
            let m = Model::standard(name, 21).unwrap();
            let ric =
                curvature::bakry_emery_ricci(&m.metric, &m.weight, f64::INFINITY, Mode::Analytic)
                    .unwrap();
            let exact = m.exact_ricci().unwrap();
            for p in 0..m.metric.grid().len() {
                for c in 0..4 {
                    assert!((ric.get(c, p) - exact.get(c, p)).abs() < 1e-10, "{name}");
                }
            }
        }
    }

    #[test]
    fn low_regularity_models_away_from_kink() {
        for name in ["lip_cone", "c11_bump"] {
            let m = Model::standard(name, 40).unwrap();
            let ric = curvature::ricci(&m.metric, Mode::Analytic).unwrap();
            let exact = m.exact_ricci().unwrap();
            let grid = m.metric.grid();
            for p in 0..grid.len() {
                if grid.point(p)[0].abs() < 0.1 {
                    continue;
                }
                for c in 0..4 {
                    assert!(
                        (ric.get(c, p) - exact.get(c, p)).abs() < 1e-10,
                        "{name} at {:?}",
                        grid.point(p)
                    );
                }
            }
        }
    }
}
