//! Orchestration of the verification pipelines behind the `lowreg` binary.
//!
//! Each command reads an [`ExperimentConfig`], writes CSV files into the
//! output directory and returns verdict lines. Exit status: 0 for PASS, 1 for
//! a FAIL verdict, 2 for any error.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{box_pairs, parse_at, ExperimentConfig, Setup};
use crate::curvature::{self, interior_sup, kink_mask};
use crate::error::{Error, Result};
use crate::fields::cutoff::bump_field;
use crate::fields::{write_header, Field, Kind, Mode};
use crate::gradapprox::{
    compv_sweep, piece_bound, rotsym_approximate, CompVOptions, RotSymOptions,
};
use crate::heat::{
    bakry_emery_gradient_check, maximum_principle_check, HeatOperator, CG_TOLERANCE,
};
use crate::mollify::{friedrichs_commutator, friedrichs_decay, ricci_mollify_convergence};
use crate::weakform::{
    default_test_family, deficit_sweep, smoothness_scale, volume_growth_check, LowerBoundSpec,
    TestPair, WeakForm, DEFECT_FACTOR,
};

/// Subcommands of the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Curvature,
    WeakVerify,
    MollifyConverge,
    Gradapprox,
    HeatCheck,
    VolumeCheck,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Curvature => "curvature",
            Command::WeakVerify => "weak-verify",
            Command::MollifyConverge => "mollify-converge",
            Command::Gradapprox => "gradapprox",
            Command::HeatCheck => "heat-check",
            Command::VolumeCheck => "volume-check",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    fn and(self, other: Verdict) -> Verdict {
        Verdict::from_bool(self == Verdict::Pass && other == Verdict::Pass)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

/// Result of one command: overall verdict, printable lines, written files.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub verdict: Verdict,
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
        }
    }
}

/// Exit status for a command result.
pub fn exit_code(r: &Result<Outcome>) -> i32 {
    match r {
        Ok(o) => o.exit_code(),
        Err(_) => 2,
    }
}

struct Run<'a> {
    out: &'a Path,
    files: Vec<PathBuf>,
    lines: Vec<String>,
    verdict: Verdict,
}

impl<'a> Run<'a> {
    fn csv(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<()> {
        let path = self.out.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn verdict(&mut self, cmd: &str, ok: bool, detail: String) {
        let v = Verdict::from_bool(ok);
        self.verdict = self.verdict.and(v);
        self.lines.push(format!("{v} {cmd}: {detail}"));
    }

    fn note(&mut self, cmd: &str, detail: String) {
        self.lines.push(format!("NOTE {cmd}: {detail}"));
    }
}

/// Runs one command, writing its CSVs into `out` (created if missing).
pub fn run_command(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let setup = cfg.setup()?;
    let mut run = Run {
        out,
        files: Vec::new(),
        lines: Vec::new(),
        verdict: Verdict::Pass,
    };
    match cmd {
        Command::Curvature => curvature_cmd(cfg, &setup, &mut run)?,
        Command::WeakVerify => weak_verify_cmd(cfg, &setup, &mut run)?,
        Command::MollifyConverge => mollify_cmd(cfg, &setup, &mut run)?,
        Command::Gradapprox => gradapprox_cmd(cfg, &setup, &mut run)?,
        Command::HeatCheck => heat_cmd(cfg, &setup, &mut run)?,
        Command::VolumeCheck => volume_cmd(cfg, &setup, &mut run)?,
    }
    Ok(Outcome {
        verdict: run.verdict,
        lines: run.lines,
        files: run.files,
    })
}

fn fmt_n(big_n: f64) -> String {
    if big_n.is_infinite() {
        "inf".into()
    } else {
        format!("{big_n}")
    }
}

fn curvature_cmd(cfg: &ExperimentConfig, s: &Setup, run: &mut Run<'_>) -> Result<()> {
    let big_n = cfg.curvature.big_n;
    let gamma = curvature::christoffel(&s.metric, s.mode)?;
    let ric = curvature::ricci(&s.metric, s.mode)?;
    let ric_n = curvature::bakry_emery_ricci(&s.metric, &s.weight, big_n, s.mode)?;
    let n = s.dim();
    let grid = s.grid.clone();
    run.csv("christoffel.csv", |w| {
        write_header(w, n)?;
        let mut x = vec![0.0; n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for p in 0..grid.len() {
                        grid.point_into(p, &mut x);
                        for v in &x {
                            write!(w, "{v:e},")?;
                        }
                        writeln!(
                            w,
                            "Gamma^{}_{}{},{:e}",
                            k + 1,
                            i + 1,
                            j + 1,
                            gamma.gamma(k, i, j, p)
                        )?;
                    }
                }
            }
        }
        Ok(())
    })?;
    run.csv("ricci.csv", |w| ric.write_csv(w, "Ric", true))?;
    run.csv("ricci_be.csv", |w| ric_n.write_csv(w, "RicN", true))?;

    let oracle = s
        .model()
        .filter(|_| big_n.is_infinite() || s.weight.is_constant());
    match oracle {
        Some(model) => {
            let exact = model.exact_ricci()?;
            let diff: Vec<f64> = (0..grid.len())
                .map(|p| {
                    (0..n * n)
                        .map(|c| (ric_n.get(c, p) - exact.get(c, p)).abs())
                        .fold(0.0, f64::max)
                })
                .collect();
            let mask = kink_mask(&s.metric);
            let dev = interior_sup(&diff, &grid, Some(&mask));
            let bound = cfg.curvature.tolerance.unwrap_or(match s.mode {
                Mode::Analytic => 1e-10,
                Mode::Fd => 5.0 * grid.h_max().powi(2),
            });
            run.verdict(
                "curvature",
                dev <= bound,
                format!(
                    "sup|Ric_(mu,N) - kappa g| = {dev:.4e} vs bound {bound:.4e} ({}, {} mode, N = {})",
                    model.name(),
                    s.mode,
                    fmt_n(big_n)
                ),
            );
        }
        None => {
            let sup = interior_sup(&ric_n.pointwise_norm(), &grid, None);
            run.verdict(
                "curvature",
                true,
                format!("no exact oracle; deficit n/a, bound n/a; sup|Ric_(mu,N)| = {sup:.4e}"),
            );
        }
    }
    Ok(())
}

fn weak_verify_cmd(cfg: &ExperimentConfig, s: &Setup, run: &mut Run<'_>) -> Result<()> {
    let wv = &cfg.weak_verify;
    let n = s.dim();
    let mut family = if wv.family == "default" {
        default_test_family(&s.metric, cfg.seed, s.mode)?
    } else {
        Vec::new()
    };
    for (i, t) in wv.tests.iter().enumerate() {
        let base = format!("weak_verify.tests[{i}]");
        let phi = bump_field(s.grid.clone(), &t.phi.center, t.phi.radius, t.phi.power)
            .map_err(|e| config_context(&format!("{base}.phi"), e))?;
        let pair = if let Some(x) = &t.x {
            let exprs = x
                .iter()
                .enumerate()
                .map(|(a, src)| parse_at(&format!("{base}.x[{a}]"), src, n))
                .collect::<Result<Vec<_>>>()?;
            TestPair::new(
                t.id.clone(),
                Field::sample(s.grid.clone(), Kind::Vector, exprs)?,
                phi,
            )
        } else {
            let f = parse_at(&format!("{base}.f"), t.f.as_deref().unwrap_or_default(), n)?;
            let f = Field::sample_scalar(s.grid.clone(), f)?;
            TestPair::gradient(t.id.clone(), &f, phi, &s.metric, s.mode)
        }
        .map_err(|e| config_context(&base, e))?;
        family.push(pair);
    }
    if family.is_empty() {
        return Err(Error::Config {
            path: "weak_verify".into(),
            message: "no test pairs (family = none and no tests)".into(),
        });
    }
    let form = WeakForm::new(&s.metric, &s.weight, s.mode)?;
    let spec = LowerBoundSpec::new(wv.k, wv.big_n);
    let sweep = deficit_sweep(&form, &spec, &family)?;
    run.csv("deficits.csv", |w| sweep.write_csv(w))?;

    let h2 = s.grid.h_max().powi(2);
    let mut bochner = Vec::with_capacity(family.len());
    for t in &family {
        let r = form.bochner_residual(t)?;
        let bound = DEFECT_FACTOR * h2 * smoothness_scale(&s.metric, t, s.mode)?;
        bochner.push((t.id.clone(), r, bound));
    }
    bochner.sort_by(|a, b| a.0.cmp(&b.0));
    run.csv("bochner.csv", |w| {
        writeln!(w, "test_id,residual,bound,verdict")?;
        for (id, r, b) in &bochner {
            writeln!(w, "{id},{r:e},{b:e},{}", Verdict::from_bool(r <= b))?;
        }
        Ok(())
    })?;

    let head = format!(
        "K = {}, N = {}, {} tests",
        wv.k,
        fmt_n(wv.big_n),
        sweep.rows.len()
    );
    let worst = sweep.worst().expect("family is nonempty");
    let failing = sweep.rows.iter().filter(|r| !r.passes()).count();
    let detail = if failing == 0 {
        format!(
            "{head}; tightest test `{}` deficit {:.4e} >= -defect {:.4e}",
            worst.id, worst.deficit, -worst.defect
        )
    } else {
        format!(
            "{head}; {failing} failing, witness `{}` deficit {:.4e} < -defect {:.4e}",
            worst.id, worst.deficit, -worst.defect
        )
    };
    run.verdict("weak-verify", failing == 0, detail);
    run.note(
        "weak-verify",
        "a finite family can refute a lower bound but never certify it for every test field".into(),
    );

    let (id, r, b) = bochner
        .iter()
        .max_by(|a, b| (a.1 / a.2).total_cmp(&(b.1 / b.2)))
        .expect("family is nonempty");
    run.verdict(
        "weak-verify bochner",
        bochner.iter().all(|(_, r, b)| r <= b),
        format!("largest relative residual at `{id}`: {r:.4e} vs bound {b:.4e}"),
    );
    Ok(())
}

fn config_context(path: &str, e: Error) -> Error {
    Error::Config {
        path: path.into(),
        message: e.to_string(),
    }
}

fn mollify_cmd(cfg: &ExperimentConfig, s: &Setup, run: &mut Run<'_>) -> Result<()> {
    let mo = &cfg.mollify;
    let n = s.dim();
    let region: Vec<(f64, f64)> = match &mo.region {
        Some(r) => box_pairs(r),
        None => (0..n)
            .map(|a| {
                let (lo, hi) = (s.grid.lo(a), s.grid.hi(a));
                let q = 0.25 * (hi - lo);
                (lo + q, hi - q)
            })
            .collect(),
    };
    let scalar = |key: &str| -> Result<Field> {
        let path = format!("mollify.{key}");
        let src = match key {
            "a" => mo.a.as_deref(),
            _ => mo.f.as_deref(),
        }
        .unwrap_or_default();
        Field::sample_scalar(s.grid.clone(), parse_at(&path, src, n)?)
    };
    let report = match mo.target.as_str() {
        "ricci" => ricci_mollify_convergence(&s.metric, mo.p, &region, &mo.eps)?,
        "friedrichs" => friedrichs_decay(&scalar("f")?, mo.p, &region, &mo.eps)?,
        _ => friedrichs_commutator(&scalar("a")?, &scalar("f")?, mo.p, &region, &mo.eps, None)?,
    };
    run.csv("mollify.csv", |w| report.write_csv(w))?;
    for warning in &report.warnings {
        run.note("mollify-converge", warning.clone());
    }
    let vals = report.values();
    let (first, last) = (vals[0], vals[vals.len() - 1]);
    let slope = report
        .slope
        .map_or("nan".to_string(), |v| format!("{v:.3}"));
    run.verdict(
        "mollify-converge",
        report.monotone,
        format!(
            "{} error {last:.4e} at eps = {} vs {first:.4e} at eps = {}; {}; fitted slope {slope}",
            mo.target,
            mo.eps[mo.eps.len() - 1],
            mo.eps[0],
            if report.monotone {
                "strictly decreasing"
            } else {
                "not strictly decreasing"
            }
        ),
    );
    Ok(())
}

/// Checks that a sampled field vanishes at every node outside `support`.
fn check_support(f: &Field, support: &[(f64, f64)], path: &str) -> Result<()> {
    let grid = f.grid();
    let mut x = vec![0.0; grid.dim()];
    for p in 0..grid.len() {
        grid.point_into(p, &mut x);
        let inside = x
            .iter()
            .zip(support)
            .all(|(v, (a, b))| *v >= *a && *v <= *b);
        if !inside {
            if let Some(c) = (0..f.n_components()).find(|&c| f.get(c, p) != 0.0) {
                return Err(Error::Config {
                    path: path.into(),
                    message: format!(
                        "field is {:.4e} at {x:?}, outside the support box",
                        f.get(c, p)
                    ),
                });
            }
        }
    }
    Ok(())
}

fn gradapprox_cmd(cfg: &ExperimentConfig, s: &Setup, run: &mut Run<'_>) -> Result<()> {
    let n = s.dim();
    let ga = &cfg.gradapprox;
    if ga.compv.is_none() && ga.rotsym.is_none() {
        return Err(Error::Config {
            path: "gradapprox".into(),
            message: "configure gradapprox.compv and/or gradapprox.rotsym".into(),
        });
    }
    if let Some(c) = &ga.compv {
        let exprs = c
            .field
            .iter()
            .enumerate()
            .map(|(a, src)| parse_at(&format!("gradapprox.compv.field[{a}]"), src, n))
            .collect::<Result<Vec<_>>>()?;
        let support = box_pairs(&c.support);
        let x =
            Field::sample(s.grid.clone(), Kind::Vector, exprs)?.with_support(Some(support.clone()));
        check_support(&x, &support, "gradapprox.compv.support")?;
        let report = compv_sweep(
            &x,
            &c.eps,
            CompVOptions {
                delta_scale: c.delta_scale,
            },
        )?;
        run.csv("gradapprox.csv", |w| report.write_csv(w))?;
        let bound = piece_bound(n);
        let q_max = report.rows.iter().map(|r| r.q).max().unwrap_or(0);
        let errs: Vec<f64> = report.rows.iter().map(|r| r.err_w11).collect();
        let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
        let ratios: Vec<String> = report
            .w11_ratios()
            .iter()
            .map(|r| format!("{r:.3}"))
            .collect();
        let scaled: Vec<String> = report
            .grad_h_scaled()
            .iter()
            .map(|r| format!("{r:.3}"))
            .collect();
        run.verdict(
            "gradapprox compv",
            q_max <= bound && decreasing,
            format!(
                "W11 error {:.4e} at eps = {}; q = {q_max} vs bound {bound}; halving ratios [{}]; max|grad h|*eps [{}]",
                errs[errs.len() - 1],
                c.eps[c.eps.len() - 1],
                ratios.join(", "),
                scaled.join(", ")
            ),
        );
    }
    if let Some(r) = &ga.rotsym {
        let phi = parse_at("gradapprox.rotsym.phi", &r.phi, n)?;
        let radius = parse_at("gradapprox.rotsym.radius", &r.radius, n)?;
        let support = box_pairs(&r.support);
        let phi = Field::sample_scalar(s.grid.clone(), phi)?.with_support(Some(support.clone()));
        check_support(&phi, &support, "gradapprox.rotsym.support")?;
        let mut opts = RotSymOptions::default();
        if let Some(m) = r.max_rounds {
            opts.max_rounds = m;
        }
        if let Some(c) = r.min_radius_cells {
            opts.min_radius_cells = c;
        }
        let rfn = |x: &[f64]| radius.eval(x).unwrap_or(f64::NAN);
        let approx = rotsym_approximate(&phi, &rfn, r.eps, opts)?;
        run.csv("rotsym.csv", |w| {
            writeln!(w, "round,radius,sup_residual")?;
            for (k, rho) in approx.radii.iter().enumerate() {
                writeln!(w, "{k},{rho:e},{:e}", approx.history[k])?;
            }
            Ok(())
        })?;
        run.csv("rotsym_bumps.csv", |w| {
            for a in 1..=n {
                write!(w, "c{a},")?;
            }
            writeln!(w, "inner,outer,amplitude,round")?;
            for b in &approx.bumps {
                for c in &b.center {
                    write!(w, "{c:e},")?;
                }
                writeln!(
                    w,
                    "{:e},{:e},{:e},{}",
                    b.inner, b.outer, b.amplitude, b.round
                )?;
            }
            Ok(())
        })?;
        let ok = approx.converged && approx.min_gap >= -1e-12 && approx.residual_sup <= r.eps;
        run.verdict(
            "gradapprox rotsym",
            ok,
            format!(
                "sup(phi - sum chi) = {:.4e} vs eps {:.4e}; min gap {:.4e} >= 0; {} bumps in {} rounds (predicted {})",
                approx.residual_sup,
                r.eps,
                approx.min_gap,
                approx.bumps.len(),
                approx.rounds,
                approx.predicted_rounds
            ),
        );
    }
    Ok(())
}

/// Centred bump covering `fraction` of the smallest half-width.
fn centred_bump(s: &Setup, fraction: f64) -> Result<Field> {
    let n = s.dim();
    let c: Vec<f64> = (0..n)
        .map(|a| 0.5 * (s.grid.lo(a) + s.grid.hi(a)))
        .collect();
    let half = (0..n)
        .map(|a| 0.5 * (s.grid.hi(a) - s.grid.lo(a)))
        .fold(f64::INFINITY, f64::min);
    bump_field(s.grid.clone(), &c, fraction * half, 4.0)
}

fn heat_cmd(cfg: &ExperimentConfig, s: &Setup, run: &mut Run<'_>) -> Result<()> {
    let h = &cfg.heat;
    let n = s.dim();
    let op = HeatOperator::new(&s.metric, &s.weight);
    let u0 = match &h.u0 {
        Some(src) => Field::sample_scalar(s.grid.clone(), parse_at("heat.u0", src, n)?)?,
        None => centred_bump(s, 0.7)?,
    };
    let dt = h.dt.unwrap_or(1e-3);
    let rep = maximum_principle_check(&op, &u0, dt, h.max_principle_steps)?;
    run.csv("heat_mass.csv", |w| {
        writeln!(w, "step,mass")?;
        for (k, m) in rep.masses.iter().enumerate() {
            writeln!(w, "{},{m:e}", k + 1)?;
        }
        Ok(())
    })?;
    let sup_u0 = u0.comp(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bound = 10.0 * rep.residual.max(CG_TOLERANCE) * sup_u0.max(f64::MIN_POSITIVE);
    run.verdict(
        "heat-check max-principle",
        rep.violation <= bound,
        format!(
            "violation {:.4e} vs solver bound {bound:.4e} over {} steps (dt = {dt})",
            rep.violation, rep.steps
        ),
    );

    let Some(model) = s.model().filter(|m| m.spec.heat_certified) else {
        run.note(
            "heat-check",
            "gradient estimate skipped: the model carries no certified curvature bound for the heat flow".into(),
        );
        return Ok(());
    };
    let k = h.k.or(model.spec.k_lower).unwrap_or(0.0);
    let f = match &h.f {
        Some(src) => Field::sample_scalar(s.grid.clone(), parse_at("heat.f", src, n)?)?,
        None => centred_bump(s, 0.5)?,
    };
    let grad = bakry_emery_gradient_check(&f, &model, k, &h.t, h.steps)?;
    run.csv("heat_gradient.csv", |w| grad.write_csv(w))?;
    let worst = grad
        .rows
        .iter()
        .max_by(|a, b| (a.violation - a.tolerance).total_cmp(&(b.violation - b.tolerance)))
        .expect("t-list is nonempty");
    run.verdict(
        "heat-check gradient",
        grad.passes(),
        format!(
            "{} with K = {k}: worst violation {:.4e} vs tolerance {:.4e} at t = {}",
            model.name(),
            worst.violation,
            worst.tolerance,
            worst.t
        ),
    );
    Ok(())
}

fn volume_cmd(cfg: &ExperimentConfig, s: &Setup, run: &mut Run<'_>) -> Result<()> {
    let v = cfg.volume.as_ref().ok_or_else(|| Error::Config {
        path: "volume".into(),
        message: "volume-check needs a [volume] table with vhat".into(),
    })?;
    let vhat = Field::sample_scalar(s.grid.clone(), parse_at("volume.vhat", &v.vhat, s.dim())?)?;
    let value = volume_growth_check(&s.weight, &s.metric, &vhat)?;
    let ok = value <= 1.0;
    run.csv("volume.csv", |w| {
        writeln!(w, "quantity,value,bound,verdict")?;
        writeln!(
            w,
            "volume_integral,{value:e},1e0,{}",
            Verdict::from_bool(ok)
        )
    })?;
    run.verdict(
        "volume-check",
        ok,
        format!("integral of exp(-vhat^2) h^2 sqrt|g| = {value:.4e} vs bound 1"),
    );
    Ok(())
}
