//! Invariants checked across randomised inputs and catalog oracles.

use std::sync::Arc;

use lowreg::catalog::Model;
use lowreg::fields::{bump_field, ChartGrid, Field, Kind, MetricField, Mode, WeightField};
use lowreg::gradapprox::partition_subordinate;
use lowreg::heat::{maximum_principle_check, HeatOperator};
use lowreg::mollify::{convolve_field, Mollifier};
use lowreg::parse_expr;
use lowreg::weakform::{weak_ricci_pairing, LowerBoundSpec, TestPair, WeakForm};
use proptest::prelude::*;

fn sphere(m: usize) -> Model {
    Model::standard("sphere_polar", m).unwrap()
}

fn vector(grid: &Arc<ChartGrid>, src: [&str; 2]) -> Field {
    let e = src.iter().map(|s| parse_expr(s, 2).unwrap()).collect();
    Field::sample(grid.clone(), Kind::Vector, e).unwrap()
}

fn centre_bump(grid: &Arc<ChartGrid>, frac: f64) -> Field {
    let c: Vec<f64> = (0..2).map(|a| 0.5 * (grid.lo(a) + grid.hi(a))).collect();
    let half = (0..2)
        .map(|a| 0.5 * (grid.hi(a) - grid.lo(a)))
        .fold(f64::INFINITY, f64::min);
    bump_field(grid.clone(), &c, frac * half, 8.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pairing_is_quadratic_in_x(lambda in -4.0f64..4.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let m = sphere(41);
        let grid = m.metric.grid().clone();
        let x = vector(&grid, ["cos(x2)", "x1"]);
        let x = Field::from_components(
            grid.clone(),
            Kind::Vector,
            x.components().iter().enumerate().map(|(i, c)| c.iter().map(|v| v + if i == 0 { a } else { b }).collect()).collect(),
        ).unwrap();
        let scaled = Field::from_components(
            grid.clone(),
            Kind::Vector,
            x.components().iter().map(|c| c.iter().map(|v| lambda * v).collect()).collect(),
        ).unwrap();
        let phi = centre_bump(&grid, 0.9);
        let base = weak_ricci_pairing(&m.metric, &m.weight, &TestPair::new("x", x, phi.clone()).unwrap(), Mode::Fd).unwrap();
        let sc = weak_ricci_pairing(&m.metric, &m.weight, &TestPair::new("lx", scaled, phi).unwrap(), Mode::Fd).unwrap();
        let want = lambda * lambda * base.value;
        prop_assert!((sc.value - want).abs() <= 1e-10 * (1.0 + want.abs()), "{} vs {}", sc.value, want);
    }

    #[test]
    fn deficit_is_affine_in_k(k1 in -2.0f64..2.0, k2 in -2.0f64..2.0) {
        let m = sphere(41);
        let grid = m.metric.grid().clone();
        let t = TestPair::new("t", vector(&grid, ["1", "x1"]), centre_bump(&grid, 0.8)).unwrap();
        let form = WeakForm::new(&m.metric, &m.weight, Mode::Analytic).unwrap();
        let d1 = form.lower_bound_deficit(&LowerBoundSpec::new(k1, f64::INFINITY), &t).unwrap();
        let d2 = form.lower_bound_deficit(&LowerBoundSpec::new(k2, f64::INFINITY), &t).unwrap();
        let want = (k1 - k2) * d1.gxx;
        prop_assert!((d2.deficit - d1.deficit - want).abs() <= 1e-10 * (1.0 + d1.gxx));
    }

    #[test]
    fn heat_flow_respects_maximum_principle(cx in -0.3f64..0.3, cy in -0.3f64..0.3, r in 0.2f64..0.5, amp in 0.1f64..5.0) {
        let m = Model::standard("gaussian_weight", 31).unwrap();
        let grid = m.metric.grid().clone();
        let u = bump_field(grid.clone(), &[cx, cy], r * 3.0, 4.0).unwrap().map(|v| amp * v);
        let op = HeatOperator::new(&m.metric, &m.weight);
        let rep = maximum_principle_check(&op, &u, 2e-3, 20).unwrap();
        prop_assert!(rep.violation <= 1e-9 * amp);
        for w in rep.masses.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9));
        }
    }

    #[test]
    fn mollifier_preserves_affine_fields(c in -3.0f64..3.0, a in -2.0f64..2.0, eps in 0.05f64..0.2) {
        let grid = Arc::new(ChartGrid::cube(2, -1.0, 1.0, 61, 2).unwrap());
        let f = Field::sample_scalar(grid.clone(), parse_expr(&format!("{c} + {a}*x1 - x2"), 2).unwrap()).unwrap();
        let mol = Mollifier::new(&grid, eps).unwrap();
        let g = convolve_field(&f, &mol).unwrap();
        let valid = *g.valid().unwrap();
        for p in grid.box_nodes(&valid) {
            prop_assert!((g.at(p) - f.at(p)).abs() <= 1e-12 * (1.0 + f.at(p).abs()));
        }
    }

    #[test]
    fn partition_sums_to_one_on_support(delta in 0.03f64..0.06, r in 0.15f64..0.3) {
        let grid = Arc::new(ChartGrid::cube(2, -1.0, 1.0, 81, 2).unwrap());
        let phi = bump_field(grid.clone(), &[0.0, 0.0], r, 4.0).unwrap();
        let part = partition_subordinate(&phi, delta).unwrap();
        for p in 0..grid.len() {
            let x = grid.point(p);
            if x.iter().all(|v| v.abs() <= r) {
                prop_assert!((part.sum(&x) - 1.0).abs() <= 1e-12);
            }
            let s = part.sum(&x);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        }
    }
}

/// Once the deficit falls below the defect estimate, every finer grid
/// confirms the violation.
#[test]
fn falsifier_is_sound_under_refinement() {
    let mut falsified = Vec::new();
    for m in [41, 81, 161, 321] {
        let model = sphere(m);
        let grid = model.metric.grid().clone();
        let t = TestPair::new(
            "coord_e2",
            vector(&grid, ["0", "1"]),
            centre_bump(&grid, 0.9),
        )
        .unwrap();
        let form = WeakForm::new(&model.metric, &model.weight, Mode::Fd).unwrap();
        let d = form
            .lower_bound_deficit(&LowerBoundSpec::new(1.1, f64::INFINITY), &t)
            .unwrap();
        assert!(
            d.deficit <= -0.09 * d.gxx,
            "m = {m}: {} vs {}",
            d.deficit,
            d.gxx
        );
        falsified.push(!d.passes());
        let ok = form
            .lower_bound_deficit(&LowerBoundSpec::new(1.0, f64::INFINITY), &t)
            .unwrap();
        assert!(ok.passes(), "m = {m}: {}", ok.deficit);
    }
    let first = falsified
        .iter()
        .position(|f| *f)
        .expect("some grid falsifies K = 1.1");
    assert!(falsified[first..].iter().all(|f| *f), "{falsified:?}");
}

/// Simpson's rule on `[a, b]` with `k` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, k: usize) -> f64 {
    let h = (b - a) / k as f64;
    let mut s = f(a) + f(b);
    for i in 1..k {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// The Lipschitz cone `g = (1 + |x1|)δ` has `Ric = ½(1+|x1|)⁻² δ − δ(x1) δ`.
/// The weak pairing with `X = ∂₂` sees the line mass through first
/// derivatives only.
#[test]
fn lip_cone_pairing_captures_singular_curvature() {
    let r = 0.6;
    let phi = |x: f64, y: f64| (1.0 - (x * x + y * y) / (r * r)).max(0.0).powi(8);
    let ac = simpson(
        |x| simpson(|y| 0.5 * phi(x, y) / (1.0 + x.abs()), -r, r, 2000),
        -r,
        0.0,
        2000,
    ) * 2.0;
    let line = simpson(|y| phi(0.0, y), -r, r, 4000);
    let exact = ac - line;
    let mut errs = Vec::new();
    for m in [81, 161] {
        let model = Model::standard("lip_cone", m).unwrap();
        let grid = model.metric.grid().clone();
        let phi = bump_field(grid.clone(), &[0.0, 0.0], r, 8.0).unwrap();
        let t = TestPair::new("e2", vector(&grid, ["0", "1"]), phi).unwrap();
        let v = weak_ricci_pairing(&model.metric, &model.weight, &t, Mode::Fd)
            .unwrap()
            .value;
        errs.push((v - exact).abs());
        assert!(
            (v - exact).abs() <= 0.02 * exact.abs(),
            "m = {m}: {v} vs {exact}"
        );
    }
    assert!(exact < 0.0);
    assert!(errs[1] <= errs[0], "{errs:?}");
}

/// Weighted pairing with an explicit weight matches the smooth Bakry–Émery
/// Ricci tensor integrated against the test volume.
#[test]
fn gaussian_pairing_equals_integrated_tensor() {
    let grid = Arc::new(ChartGrid::cube(2, -2.0, 2.0, 81, 2).unwrap());
    let g = MetricField::euclidean(grid.clone()).unwrap();
    let w = WeightField::from_v(grid.clone(), parse_expr("(x1^2 + x2^2)/2", 2).unwrap()).unwrap();
    let x = vector(&grid, ["x2", "1 - x1"]);
    let phi = bump_field(grid.clone(), &[0.1, 0.0], 1.5, 8.0).unwrap();
    let t = TestPair::new("t", x, phi).unwrap();
    let form = WeakForm::new(&g, &w, Mode::Analytic).unwrap();
    let d = form
        .lower_bound_deficit(&LowerBoundSpec::new(1.0, f64::INFINITY), &t)
        .unwrap();
    assert!(d.deficit.abs() <= 1e-10 * (1.0 + d.gxx), "{}", d.deficit);
}
