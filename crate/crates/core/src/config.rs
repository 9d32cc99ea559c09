//! Experiment configuration: TOML tables validated into sampled fields.
//!
//! The grammar is documented in `docs/config-format.md`. Every validation
//! failure is reported as [`Error::Config`] with the dotted path of the
//! offending key.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::catalog::{self, Chart, Model, ModelSpec};
use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr};
use crate::fields::{ChartGrid, MetricField, Mode, WeightField};

fn cfg_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses an expression source in `dim` variables, tagging errors with `path`.
pub fn parse_at(path: &str, source: &str, dim: usize) -> Result<Expr> {
    parse_expr(source, dim).map_err(|e| cfg_err(path, e.to_string()))
}

/// Nodes per axis: one count for every axis or one per axis.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub dim: Option<usize>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub m: Option<Resolution>,
    pub margin: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub catalog: Option<String>,
    pub components: Option<Vec<Vec<String>>>,
    pub diagonal: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub h: Option<String>,
    pub v: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvatureConfig {
    pub big_n: f64,
    /// Oracle tolerance; defaults to `1e-10` analytic and `5h²` fd.
    pub tolerance: Option<f64>,
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        CurvatureConfig {
            big_n: f64::INFINITY,
            tolerance: None,
        }
    }
}

/// Test function `φ = bump(center, radius, power)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default = "default_power")]
    pub power: f64,
}

fn default_power() -> f64 {
    8.0
}

/// Extra test pair: `X` given componentwise or as `∇f`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub id: String,
    pub x: Option<Vec<String>>,
    pub f: Option<String>,
    pub phi: BumpConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeakVerifyConfig {
    pub k: f64,
    pub big_n: f64,
    /// `default` (seeded 20-member family) or `none`.
    pub family: String,
    pub tests: Vec<TestConfig>,
}

impl Default for WeakVerifyConfig {
    fn default() -> Self {
        WeakVerifyConfig {
            k: 0.0,
            big_n: f64::INFINITY,
            family: "default".into(),
            tests: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MollifyConfig {
    /// `ricci`, `friedrichs` or `commutator`.
    pub target: String,
    pub p: f64,
    pub eps: Vec<f64>,
    /// Box `K`; defaults to the middle half of the chart.
    pub region: Option<Vec<[f64; 2]>>,
    pub f: Option<String>,
    pub a: Option<String>,
}

impl Default for MollifyConfig {
    fn default() -> Self {
        MollifyConfig {
            target: "ricci".into(),
            p: 4.0,
            eps: vec![0.2, 0.1, 0.05, 0.025],
            region: None,
            f: None,
            a: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompVConfig {
    pub field: Vec<String>,
    /// Box containing the support of the field.
    pub support: Vec<[f64; 2]>,
    pub eps: Vec<f64>,
    #[serde(default = "one")]
    pub delta_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotSymConfig {
    pub phi: String,
    pub support: Vec<[f64; 2]>,
    /// Admissible radius `R(x)` as an expression.
    pub radius: String,
    pub eps: f64,
    pub max_rounds: Option<usize>,
    pub min_radius_cells: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradApproxConfig {
    pub compv: Option<CompVConfig>,
    pub rotsym: Option<RotSymConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatConfig {
    /// Curvature bound for the gradient estimate; defaults to the catalog value.
    pub k: Option<f64>,
    pub t: Vec<f64>,
    pub steps: usize,
    /// Function for the gradient estimate; defaults to a centred bump.
    pub f: Option<String>,
    /// Initial datum for the maximum principle; defaults to a centred bump.
    pub u0: Option<String>,
    pub max_principle_steps: usize,
    pub dt: Option<f64>,
}

impl Default for HeatConfig {
    fn default() -> Self {
        HeatConfig {
            k: None,
            t: vec![0.005, 0.01],
            steps: 50,
            f: None,
            u0: None,
            max_principle_steps: 200,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeConfig {
    pub vhat: String,
}

/// Top-level experiment configuration.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub chart: ChartConfig,
    pub metric: MetricConfig,
    pub weight: Option<WeightConfig>,
    #[serde(default)]
    pub curvature: CurvatureConfig,
    #[serde(default)]
    pub weak_verify: WeakVerifyConfig,
    #[serde(default)]
    pub mollify: MollifyConfig,
    #[serde(default)]
    pub gradapprox: GradApproxConfig,
    #[serde(default)]
    pub heat: HeatConfig,
    pub volume: Option<VolumeConfig>,
}

fn default_mode() -> String {
    "analytic".into()
}

/// Sampled geometry of a validated configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Arc<ChartGrid>,
    pub metric: MetricField,
    pub weight: WeightField,
    pub mode: Mode,
    /// Catalog facts, present when the model is used unmodified.
    pub spec: Option<ModelSpec>,
}

impl Setup {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// The catalog model, when the configuration names one without overrides.
    pub fn model(&self) -> Option<Model> {
        self.spec.clone().map(|spec| Model {
            spec,
            metric: self.metric.clone(),
            weight: self.weight.clone(),
        })
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| cfg_err("<document>", e.to_string().trim()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            cfg_err(
                if path == "." {
                    "<document>".into()
                } else {
                    path
                },
                e.into_inner().message().trim(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn mode(&self) -> Result<Mode> {
        self.mode.parse().map_err(|m: String| cfg_err("mode", m))
    }

    fn catalog_spec(&self) -> Result<Option<ModelSpec>> {
        match &self.metric.catalog {
            Some(name) => {
                let dim = self.chart.dim.unwrap_or(2);
                catalog::spec(name, dim)
                    .map(Some)
                    .map_err(|e| cfg_err("metric.catalog", e.to_string()))
            }
            None => Ok(None),
        }
    }

    /// Chart dimension.
    pub fn dim(&self) -> Result<usize> {
        if let Some(s) = self.catalog_spec()? {
            return Ok(s.dim);
        }
        self.chart
            .dim
            .or_else(|| self.chart.lo.as_ref().map(Vec::len))
            .ok_or_else(|| {
                cfg_err(
                    "chart.dim",
                    "required when the metric is not a catalog model",
                )
            })
    }

    pub fn chart(&self) -> Result<Chart> {
        let spec = self.catalog_spec()?;
        let n = self.dim()?;
        if n == 0 || n > crate::fields::MAX_DIM {
            return Err(cfg_err(
                "chart.dim",
                format!("dimension {n} is not supported"),
            ));
        }
        let pick = |key: &str,
                    given: &Option<Vec<f64>>,
                    fallback: Option<&Vec<f64>>|
         -> Result<Vec<f64>> {
            let v = given.clone().or_else(|| fallback.cloned()).ok_or_else(|| {
                cfg_err(
                    format!("chart.{key}"),
                    "required when the metric is not a catalog model",
                )
            })?;
            if v.len() != n {
                return Err(cfg_err(
                    format!("chart.{key}"),
                    format!("expected {n} entries, got {}", v.len()),
                ));
            }
            Ok(v)
        };
        let lo = pick("lo", &self.chart.lo, spec.as_ref().map(|s| &s.lo))?;
        let hi = pick("hi", &self.chart.hi, spec.as_ref().map(|s| &s.hi))?;
        let m = match &self.chart.m {
            None => vec![101; n],
            Some(Resolution::Uniform(k)) => vec![*k; n],
            Some(Resolution::PerAxis(v)) if v.len() == n => v.clone(),
            Some(Resolution::PerAxis(v)) => {
                return Err(cfg_err(
                    "chart.m",
                    format!("expected {n} entries, got {}", v.len()),
                ));
            }
        };
        Ok(Chart {
            lo,
            hi,
            m,
            margin: self.chart.margin.unwrap_or(2),
        })
    }

    /// Checks every expression source against the chart dimension and the
    /// exactly-one rules, without sampling anything.
    pub fn validate(&self) -> Result<()> {
        self.mode()?;
        let given = [
            self.metric.catalog.is_some(),
            self.metric.components.is_some(),
            self.metric.diagonal.is_some(),
        ];
        if given.iter().filter(|b| **b).count() != 1 {
            return Err(cfg_err(
                "metric",
                "give exactly one of catalog, components, diagonal",
            ));
        }
        let n = self.dim()?;
        if let Some(rows) = &self.metric.components {
            if rows.len() != n {
                return Err(cfg_err(
                    "metric.components",
                    format!("expected {n} rows, got {}", rows.len()),
                ));
            }
            for (i, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(cfg_err(
                        format!("metric.components[{i}]"),
                        format!("expected {n} entries, got {}", row.len()),
                    ));
                }
                for (j, s) in row.iter().enumerate() {
                    parse_at(&format!("metric.components[{i}][{j}]"), s, n)?;
                }
            }
        }
        if let Some(d) = &self.metric.diagonal {
            if d.len() != n {
                return Err(cfg_err(
                    "metric.diagonal",
                    format!("expected {n} entries, got {}", d.len()),
                ));
            }
            for (i, s) in d.iter().enumerate() {
                parse_at(&format!("metric.diagonal[{i}]"), s, n)?;
            }
        }
        if let Some(w) = &self.weight {
            match (&w.h, &w.v) {
                (Some(_), Some(_)) => return Err(cfg_err("weight", "give at most one of h, v")),
                (Some(h), None) => drop(parse_at("weight.h", h, n)?),
                (None, Some(v)) => drop(parse_at("weight.v", v, n)?),
                (None, None) => {}
            }
        }
        self.chart()?;

        let wv = &self.weak_verify;
        if !matches!(wv.family.as_str(), "default" | "none") {
            return Err(cfg_err(
                "weak_verify.family",
                format!("unknown family `{}` (default, none)", wv.family),
            ));
        }
        for (i, t) in wv.tests.iter().enumerate() {
            let base = format!("weak_verify.tests[{i}]");
            match (&t.x, &t.f) {
                (Some(x), None) => {
                    if x.len() != n {
                        return Err(cfg_err(
                            format!("{base}.x"),
                            format!("expected {n} entries, got {}", x.len()),
                        ));
                    }
                    for (a, s) in x.iter().enumerate() {
                        parse_at(&format!("{base}.x[{a}]"), s, n)?;
                    }
                }
                (None, Some(f)) => drop(parse_at(&format!("{base}.f"), f, n)?),
                _ => return Err(cfg_err(&base, "give exactly one of x, f")),
            }
            check_bump(&format!("{base}.phi"), &t.phi, n)?;
        }

        let mo = &self.mollify;
        match mo.target.as_str() {
            "ricci" => {}
            "friedrichs" => {
                let f =
                    mo.f.as_ref()
                        .ok_or_else(|| cfg_err("mollify.f", "required for target friedrichs"))?;
                parse_at("mollify.f", f, n)?;
            }
            "commutator" => {
                for (key, v) in [("a", &mo.a), ("f", &mo.f)] {
                    let path = format!("mollify.{key}");
                    let s = v
                        .as_ref()
                        .ok_or_else(|| cfg_err(&path, "required for target commutator"))?;
                    parse_at(&path, s, n)?;
                }
            }
            other => {
                return Err(cfg_err(
                    "mollify.target",
                    format!("unknown target `{other}` (ricci, friedrichs, commutator)"),
                ))
            }
        }
        if mo.eps.is_empty() || mo.eps.iter().any(|e| !(*e > 0.0)) {
            return Err(cfg_err("mollify.eps", "needs positive entries"));
        }
        if let Some(r) = &mo.region {
            check_box("mollify.region", r, n)?;
        }

        if let Some(c) = &self.gradapprox.compv {
            if c.field.len() != n {
                return Err(cfg_err(
                    "gradapprox.compv.field",
                    format!("expected {n} entries, got {}", c.field.len()),
                ));
            }
            for (a, s) in c.field.iter().enumerate() {
                parse_at(&format!("gradapprox.compv.field[{a}]"), s, n)?;
            }
            check_box("gradapprox.compv.support", &c.support, n)?;
            if c.eps.is_empty() || c.eps.iter().any(|e| !(*e > 0.0)) {
                return Err(cfg_err("gradapprox.compv.eps", "needs positive entries"));
            }
            if !(c.delta_scale > 0.0) {
                return Err(cfg_err("gradapprox.compv.delta_scale", "must be positive"));
            }
        }
        if let Some(r) = &self.gradapprox.rotsym {
            parse_at("gradapprox.rotsym.phi", &r.phi, n)?;
            parse_at("gradapprox.rotsym.radius", &r.radius, n)?;
            check_box("gradapprox.rotsym.support", &r.support, n)?;
            if !(r.eps > 0.0) {
                return Err(cfg_err("gradapprox.rotsym.eps", "must be positive"));
            }
        }

        let h = &self.heat;
        for (key, v) in [("f", &h.f), ("u0", &h.u0)] {
            if let Some(s) = v {
                parse_at(&format!("heat.{key}"), s, n)?;
            }
        }
        if h.t.iter().any(|t| !(*t > 0.0)) {
            return Err(cfg_err("heat.t", "needs positive entries"));
        }
        if h.steps == 0 {
            return Err(cfg_err("heat.steps", "must be positive"));
        }
        if let Some(dt) = h.dt {
            if !(dt > 0.0) {
                return Err(cfg_err("heat.dt", "must be positive"));
            }
        }
        if let Some(v) = &self.volume {
            parse_at("volume.vhat", &v.vhat, n)?;
        }
        Ok(())
    }

    /// Samples the metric and weight on the chart.
    pub fn setup(&self) -> Result<Setup> {
        let n = self.dim()?;
        let chart = self.chart()?;
        let grid = chart.grid().map_err(|e| cfg_err("chart", e.to_string()))?;
        let mode = self.mode()?;
        let spec = self.catalog_spec()?;
        let metric = if let Some(s) = &spec {
            let diag = s
                .metric
                .iter()
                .map(|e| parse_expr(e, n))
                .collect::<Result<Vec<_>, _>>()?;
            MetricField::diagonal(grid.clone(), diag)
        } else if let Some(d) = &self.metric.diagonal {
            let diag = d
                .iter()
                .enumerate()
                .map(|(i, s)| parse_at(&format!("metric.diagonal[{i}]"), s, n))
                .collect::<Result<Vec<_>>>()?;
            MetricField::diagonal(grid.clone(), diag)
        } else {
            let rows = self.metric.components.as_ref().expect("validated");
            let g = rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(j, s)| parse_at(&format!("metric.components[{i}][{j}]"), s, n))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            MetricField::from_exprs(grid.clone(), g)
        }
        .map_err(|e| cfg_err("metric", e.to_string()))?;
        let (weight, facts) = match (&self.weight, &spec) {
            (Some(WeightConfig { h: Some(h), .. }), _) => (
                WeightField::from_h(grid.clone(), parse_at("weight.h", h, n)?),
                None,
            ),
            (Some(WeightConfig { v: Some(v), .. }), _) => (
                WeightField::from_v(grid.clone(), parse_at("weight.v", v, n)?),
                None,
            ),
            (_, Some(s)) => match &s.potential {
                Some(v) => (
                    WeightField::from_v(grid.clone(), parse_expr(v, n)?),
                    spec.clone(),
                ),
                None => (Ok(WeightField::unit(grid.clone())), spec.clone()),
            },
            (_, None) => (Ok(WeightField::unit(grid.clone())), None),
        };
        let weight = weight.map_err(|e| cfg_err("weight", e.to_string()))?;
        Ok(Setup {
            grid,
            metric,
            weight,
            mode,
            spec: facts,
        })
    }
}

fn check_box(path: &str, b: &[[f64; 2]], n: usize) -> Result<()> {
    if b.len() != n {
        return Err(cfg_err(
            path,
            format!("expected {n} intervals, got {}", b.len()),
        ));
    }
    for (a, [lo, hi]) in b.iter().enumerate() {
        if !(lo < hi) {
            return Err(cfg_err(
                format!("{path}[{a}]"),
                format!("empty interval [{lo}, {hi}]"),
            ));
        }
    }
    Ok(())
}

fn check_bump(path: &str, b: &BumpConfig, n: usize) -> Result<()> {
    if b.center.len() != n {
        return Err(cfg_err(
            format!("{path}.center"),
            format!("expected {n} entries, got {}", b.center.len()),
        ));
    }
    if !(b.radius > 0.0) {
        return Err(cfg_err(format!("{path}.radius"), "must be positive"));
    }
    if !(b.power >= 3.0) {
        return Err(cfg_err(format!("{path}.power"), "must be at least 3"));
    }
    Ok(())
}

/// Converts a config box to `(lo, hi)` pairs.
pub fn box_pairs(b: &[[f64; 2]]) -> Vec<(f64, f64)> {
    b.iter().map(|[a, c]| (*a, *c)).collect()
}
