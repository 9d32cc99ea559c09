use std::f64::consts::PI;
use std::sync::Arc;

use super::*;
use crate::expr::{parse_expr, Expr};
use crate::fields::cutoff::bump_field;
use crate::fields::quadrature::integrate_values;

fn e(s: &str, n: usize) -> Expr {
    parse_expr(s, n).unwrap()
}

fn grid2(lo: [f64; 2], hi: [f64; 2], m: usize) -> Arc<ChartGrid> {
    Arc::new(ChartGrid::new(lo.to_vec(), hi.to_vec(), vec![m, m], 2).unwrap())
}

fn sphere(m: usize) -> MetricField {
    let g = grid2([0.3, 0.0], [PI - 0.3, 2.0], m);
    MetricField::diagonal(g, vec![Expr::Const(1.0), e("sin(x1)^2", 2)]).unwrap()
}

fn flat(m: usize) -> MetricField {
    MetricField::euclidean(grid2([-3.0, -3.0], [3.0, 3.0], m)).unwrap()
}

fn gaussian(grid: &Arc<ChartGrid>) -> WeightField {
    WeightField::from_v(grid.clone(), e("(x1^2 + x2^2)/2", 2)).unwrap()
}

fn vector(g: &MetricField, comps: [&str; 2]) -> Field {
    Field::sample(
        g.grid().clone(),
        Kind::Vector,
        comps.iter().map(|s| e(s, 2)).collect(),
    )
    .unwrap()
}

fn sphere_bump(g: &MetricField) -> Field {
    bump_field(g.grid().clone(), &[PI / 2.0, 1.0], 0.8, 8.0).unwrap()
}

fn flat_bump(g: &MetricField) -> Field {
    bump_field(g.grid().clone(), &[0.2, -0.1], 2.0, 8.0).unwrap()
}

fn integral(g: &MetricField, f: impl Fn(usize) -> f64) -> f64 {
    let grid = g.grid();
    integrate_values(grid, &(0..grid.len()).map(f).collect::<Vec<_>>())
}

#[test]
fn test_pair_validation() {
    let g = flat(21);
    let x = vector(&g, ["1", "0"]);
    let unflagged = Field::sample_scalar(g.grid().clone(), e("1", 2)).unwrap();
    assert!(matches!(
        TestPair::new("a", x.clone(), unflagged),
        Err(Error::Support(_))
    ));
    let wide = bump_field(g.grid().clone(), &[0.0, 0.0], 5.0, 8.0).unwrap();
    assert!(matches!(
        TestPair::new("b", x.clone(), wide),
        Err(Error::Support(_))
    ));
    assert!(TestPair::new("c", x, flat_bump(&g)).is_ok());
}

#[test]
fn flat_pairing_vanishes() {
    let g = flat(41);
    let w = WeightField::unit(g.grid().clone());
    let t = TestPair::new("rot", vector(&g, ["x2", "-x1"]), flat_bump(&g)).unwrap();
    for mode in [Mode::Analytic, Mode::Fd] {
        let r = weak_ricci_pairing(&g, &w, &t, mode).unwrap();
        assert_eq!(r.terms.len(), 5);
        assert!(r.value.abs() < 1e-14, "{r:?}");
        // the right side cancels only after summation by parts
        assert!(bochner_residual(&g, &w, &t, mode).unwrap() < 1e-6);
    }
    let t = TestPair::new("e1", vector(&g, ["0.3", "-2"]), flat_bump(&g)).unwrap();
    assert!(bochner_residual(&g, &w, &t, Mode::Fd).unwrap() < 1e-12);
}

#[test]
fn report_value_is_sum_of_terms() {
    let g = sphere(41);
    let w = WeightField::from_h(g.grid().clone(), e("exp(0.1*x2)", 2)).unwrap();
    let t = TestPair::new("t", vector(&g, ["cos(x2)", "x1"]), sphere_bump(&g)).unwrap();
    let form = WeakForm::new(&g, &w, Mode::Analytic).unwrap();
    for r in [form.pairing(&t).unwrap(), form.bochner_rhs(&t).unwrap()] {
        let s: f64 = r.terms.iter().sum();
        assert!((s - r.value).abs() <= 1e-12 * (1.0 + s.abs()));
    }
}

#[test]
fn flat_rhs_constant_field_vanishes() {
    let g = flat(31);
    let w = WeightField::unit(g.grid().clone());
    let t = TestPair::new("e1", vector(&g, ["1", "0"]), flat_bump(&g)).unwrap();
    let r = bochner_rhs(&g, &w, &t, Mode::Fd).unwrap();
    assert_eq!(r.terms.len(), 4);
    for v in r.terms {
        assert!(v.abs() < 1e-14);
    }
}

#[test]
fn flat_rotation_rhs_terms() {
    // −½∫⟨∇|x|², ∇φ⟩ = 2∫φ and |∇X|² = 2 in the plane
    let g = flat(121);
    let w = WeightField::unit(g.grid().clone());
    let phi = flat_bump(&g);
    let int_phi = integral(&g, |p| phi.at(p));
    let t = TestPair::new("rot", vector(&g, ["x2", "-x1"]), phi).unwrap();
    let r = bochner_rhs(&g, &w, &t, Mode::Analytic).unwrap();
    assert!((r.terms[0] - 2.0 * int_phi).abs() < 1e-8);
    assert!(r.terms[1].abs() < 1e-12);
    assert!(r.terms[2].abs() < 1e-8);
    assert!((r.terms[3] + 2.0 * int_phi).abs() < 1e-12);
    assert!(r.value.abs() < 1e-8);
}

#[test]
fn sphere_pairing_matches_smooth_ricci() {
    let g = sphere(101);
    let w = WeightField::unit(g.grid().clone());
    let phi = sphere_bump(&g);
    // Ric = g on the unit sphere, so Ric(∂₂, ∂₂) = sin²x1
    let oracle = integral(&g, |p| {
        let s = g.grid().point(p)[0].sin();
        s * s * phi.at(p) * s
    });
    let l1 = integral(&g, |p| phi.at(p).abs());
    let t = TestPair::new("e2", vector(&g, ["0", "1"]), phi).unwrap();
    let h2 = g.grid().h_max().powi(2);
    for mode in [Mode::Analytic, Mode::Fd] {
        let r = weak_ricci_pairing(&g, &w, &t, mode).unwrap();
        assert!(
            (r.value - oracle).abs() <= 20.0 * h2 * l1,
            "{mode}: {} vs {oracle}",
            r.value
        );
    }
}

#[test]
fn smooth_case_consistency_with_weight() {
    let g = sphere(81);
    let w = WeightField::from_v(g.grid().clone(), e("0.3*x2^2 + 0.2*cos(x1)", 2)).unwrap();
    let phi = sphere_bump(&g);
    let t = TestPair::new("t", vector(&g, ["sin(x2)", "1 + x1"]), phi.clone()).unwrap();
    let ric = curvature::bakry_emery_ricci(&g, &w, f64::INFINITY, Mode::Analytic).unwrap();
    let dens = w.density(&g);
    let oracle = integral(&g, |p| {
        let x = [t.x.get(0, p), t.x.get(1, p)];
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                s += ric.t(i, j, p) * x[i] * x[j];
            }
        }
        s * phi.at(p) * dens[p]
    });
    let r = weak_ricci_pairing(&g, &w, &t, Mode::Analytic).unwrap();
    let scale: f64 = r.terms.iter().map(|v| v.abs()).sum();
    assert!((r.value - oracle).abs() <= 10.0 * g.grid().h_max().powi(2) * scale);
    assert!((r.value - oracle).abs() < 1e-8, "{} vs {oracle}", r.value);
}

#[test]
fn bochner_identity_analytic() {
    let g = sphere(81);
    let w = WeightField::from_h(g.grid().clone(), e("exp(0.2*x2 - 0.1*x1^2)", 2)).unwrap();
    let t = TestPair::new("t", vector(&g, ["cos(x2)", "x1*x2"]), sphere_bump(&g)).unwrap();
    assert!(bochner_residual(&g, &w, &t, Mode::Analytic).unwrap() < 1e-8);
}

#[test]
fn bochner_residual_refines_on_sphere() {
    let res = |m: usize| {
        let g = sphere(m);
        let w = WeightField::unit(g.grid().clone());
        let t = TestPair::new("t", vector(&g, ["cos(x2)", "x1"]), sphere_bump(&g)).unwrap();
        let r = bochner_residual(&g, &w, &t, Mode::Fd).unwrap();
        let scale = smoothness_scale(&g, &t, Mode::Fd).unwrap();
        assert!(r <= DEFECT_FACTOR * g.grid().h_max().powi(2) * scale);
        r
    };
    let (coarse, fine) = (res(101), res(201));
    assert!(coarse / fine >= 3.0, "{coarse} / {fine}");
}

#[test]
fn gaussian_residual_bound() {
    let g = flat(81);
    let w = gaussian(g.grid());
    let t = TestPair::new("t", vector(&g, ["sin(x2)", "x1"]), flat_bump(&g)).unwrap();
    let r = bochner_residual(&g, &w, &t, Mode::Fd).unwrap();
    let scale = smoothness_scale(&g, &t, Mode::Fd).unwrap();
    assert!(r <= 20.0 * g.grid().h_max().powi(2) * scale);
}

#[test]
fn sphere_lower_bound_and_falsification() {
    let g = sphere(81);
    let w = WeightField::unit(g.grid().clone());
    let form = WeakForm::new(&g, &w, Mode::Analytic).unwrap();
    let family = default_test_family(&g, 7, Mode::Analytic).unwrap();
    assert_eq!(family.len(), FAMILY_SIZE);
    let sweep = deficit_sweep(&form, &LowerBoundSpec::new(1.0, f64::INFINITY), &family).unwrap();
    assert!(sweep.passes(), "{:?}", sweep.worst());

    let t = TestPair::new("e2", vector(&g, ["0", "1"]), sphere_bump(&g)).unwrap();
    let r = form
        .lower_bound_deficit(&LowerBoundSpec::new(1.1, f64::INFINITY), &t)
        .unwrap();
    assert!(r.deficit <= -0.09 * r.gxx);
    assert!(r.deficit < -r.defect, "{r:?}");
    assert!(!r.passes());
}

#[test]
fn gaussian_deficit_vanishes() {
    let g = flat(81);
    let w = gaussian(g.grid());
    let form = WeakForm::new(&g, &w, Mode::Analytic).unwrap();
    let spec = LowerBoundSpec::new(1.0, f64::INFINITY);
    for t in default_test_family(&g, 3, Mode::Analytic).unwrap() {
        let r = form.lower_bound_deficit(&spec, &t).unwrap();
        assert!(r.deficit.abs() < 1e-10, "{}: {}", t.id, r.deficit);
    }
}

#[test]
fn dimension_bound_checks() {
    let g = flat(21);
    let w = gaussian(g.grid());
    let unit = WeightField::unit(g.grid().clone());
    let t = TestPair::new("e1", vector(&g, ["1", "0"]), flat_bump(&g)).unwrap();
    assert!(lower_bound_deficit(&g, &w, &LowerBoundSpec::new(0.0, 2.0), &t, Mode::Fd).is_err());
    assert!(lower_bound_deficit(&g, &w, &LowerBoundSpec::new(0.0, 1.5), &t, Mode::Fd).is_err());
    assert!(lower_bound_deficit(&g, &unit, &LowerBoundSpec::new(0.0, 2.0), &t, Mode::Fd).is_ok());
    // finite N with a non-constant weight subtracts ∫⟨∇V, X⟩² ω / (N − n)
    let a = lower_bound_deficit(
        &g,
        &w,
        &LowerBoundSpec::new(0.0, f64::INFINITY),
        &t,
        Mode::Analytic,
    )
    .unwrap();
    let b =
        lower_bound_deficit(&g, &w, &LowerBoundSpec::new(0.0, 4.0), &t, Mode::Analytic).unwrap();
    let phi = &t.phi;
    let dens = w.density(&g);
    let vx = integral(&g, |p| g.grid().point(p)[0].powi(2) * phi.at(p) * dens[p]);
    assert!((a.deficit - b.deficit - 0.5 * vx).abs() < 1e-10);
}

#[test]
fn scaling_is_quadratic() {
    let g = sphere(41);
    let w = WeightField::from_h(g.grid().clone(), e("1 + 0.1*x2", 2)).unwrap();
    let x = vector(&g, ["cos(x2)", "x1"]);
    let t = TestPair::new("t", x.clone(), sphere_bump(&g)).unwrap();
    let t3 = TestPair::new("t3", x.map(|v| -3.0 * v), sphere_bump(&g)).unwrap();
    let a = weak_ricci_pairing(&g, &w, &t, Mode::Fd).unwrap().value;
    let b = weak_ricci_pairing(&g, &w, &t3, Mode::Fd).unwrap().value;
    assert!((b - 9.0 * a).abs() <= 1e-10 * (1.0 + b.abs()));
}

#[test]
fn psd_identity() {
    let g = flat(21);
    let m = Field::sample(
        g.grid().clone(),
        Kind::Tensor2,
        ["1", "0", "0", "1"].iter().map(|s| e(s, 2)).collect(),
    )
    .unwrap()
    .with_support(Some(vec![(-1.0, 1.0), (-1.0, 1.0)]));
    let eps = 0.01;
    let d = psd_test_decomposition(&m, eps).unwrap();
    let p = g.grid().flat_index(&[10, 10]);
    assert!((d.phi.at(p) - 1.0).abs() < 1e-15);
    let r = (1.0 + eps).sqrt();
    assert!((d.b[0].get(0, p) - r).abs() < 1e-14 && d.b[0].get(1, p).abs() < 1e-14);
    assert!((d.b[1].get(1, p) - r).abs() < 1e-14 && d.b[1].get(0, p).abs() < 1e-14);
    let rec = d.reconstruct();
    let supp = g.grid().snap_box(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
    for q in g.grid().box_nodes(&supp) {
        for c in 0..4 {
            assert!((rec.get(c, q) - m.get(c, q)).abs() <= 2.0 * eps);
        }
    }
}

#[test]
fn psd_diagonal_and_coupled() {
    let g = flat(11);
    let eps = 1e-3;
    let tensor = |c: [&str; 4]| {
        Field::sample(
            g.grid().clone(),
            Kind::Tensor2,
            c.iter().map(|s| e(s, 2)).collect(),
        )
        .unwrap()
    };
    let d = psd_test_decomposition(&tensor(["4", "0", "0", "9"]), eps).unwrap();
    assert!((d.b[0].get(0, 0) - (4.0 + eps).sqrt()).abs() < 1e-14);
    assert!((d.b[1].get(1, 0) - (9.0 + eps).sqrt()).abs() < 1e-14);
    assert!(d.b[0].get(1, 0).abs() < 1e-14);

    let m = tensor(["2", "1", "1", "2"]);
    let d = psd_test_decomposition(&m, eps).unwrap();
    // √M in the eigenbasis (1, ±1)/√2
    let (a, b) = ((3.0 + eps).sqrt(), (1.0 + eps).sqrt());
    assert!((d.b[0].get(0, 0) - 0.5 * (a + b)).abs() < 1e-12);
    assert!((d.b[0].get(1, 0) - 0.5 * (a - b)).abs() < 1e-12);
    let rec = d.reconstruct();
    for c in 0..4 {
        let want = m.get(c, 0) + if c == 0 || c == 3 { eps } else { 0.0 };
        assert!((rec.get(c, 0) - want).abs() < 1e-10);
    }
    assert!((d.deviation_c0 - eps * 2f64.sqrt()).abs() < 1e-12);

    assert!(psd_test_decomposition(&tensor(["1", "2", "2", "1"]), eps).is_err());
    assert!(psd_test_decomposition(&m, 0.0).is_err());
}

#[test]
fn psd_sufficiency() {
    let g = sphere(41);
    let w = WeightField::from_h(g.grid().clone(), e("1 + 0.1*x1", 2)).unwrap();
    let form = WeakForm::new(&g, &w, Mode::Fd).unwrap();
    let spec = LowerBoundSpec::new(0.5, f64::INFINITY);
    let m = Field::sample(
        g.grid().clone(),
        Kind::Tensor2,
        ["1 + x1^2", "x2*x1", "x2*x1", "1 + x2^2"]
            .iter()
            .map(|s| e(s, 2))
            .collect(),
    )
    .unwrap();
    let d = psd_test_decomposition(&m, 0.05).unwrap();
    let phi = sphere_bump(&g);
    let n = 2;
    let deficit = |t: &Field| {
        let dt: Vec<Field> = (0..n).map(|a| t.fd_partial(a)).collect();
        form.lower_bound_deficit_tensor(&spec, &TensorTest { t, dt: &dt }, &phi)
            .unwrap()
    };
    let parts: f64 =
        d.b.iter()
            .map(|b| {
                let t = Field::from_nodewise(g.grid().clone(), Kind::Tensor2, |p, out| {
                    for j in 0..n {
                        for k in 0..n {
                            out[j * n + k] = d.phi.at(p) * b.get(j, p) * b.get(k, p);
                        }
                    }
                });
                deficit(&t)
            })
            .sum();
    let whole = deficit(&d.reconstruct());
    assert!(
        (parts - whole).abs() < 1e-10 * (1.0 + whole.abs()),
        "{parts} vs {whole}"
    );
}

#[test]
fn tensor_pairing_matches_vector_pairing_analytically() {
    let g = sphere(61);
    let w = WeightField::unit(g.grid().clone());
    let form = WeakForm::new(&g, &w, Mode::Analytic).unwrap();
    let x = vector(&g, ["cos(x2)", "x1"]);
    let phi = sphere_bump(&g);
    let xx = Field::sample(
        g.grid().clone(),
        Kind::Tensor2,
        ["cos(x2)^2", "cos(x2)*x1", "cos(x2)*x1", "x1^2"]
            .iter()
            .map(|s| e(s, 2))
            .collect(),
    )
    .unwrap();
    let dt: Vec<Field> = (0..2)
        .map(|a| xx.partial(a, Mode::Analytic).unwrap())
        .collect();
    let a = form
        .pairing_tensor(&TensorTest { t: &xx, dt: &dt }, &phi)
        .unwrap()
        .value;
    let b = form
        .pairing(&TestPair::new("x", x, phi).unwrap())
        .unwrap()
        .value;
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn be_flat_trace_inequality() {
    let g = flat(81);
    let w = WeightField::unit(g.grid().clone());
    let f = bump_field(g.grid().clone(), &[0.3, 0.0], 1.5, 4.0).unwrap();
    let phi = flat_bump(&g);
    let r = be_weak_test(
        &g,
        &w,
        &LowerBoundSpec::new(0.0, 2.0),
        &f,
        &phi,
        Mode::Analytic,
    )
    .unwrap();
    assert!(r.pairing.abs() < 1e-14);
    assert!(r.passes(), "{r:?}");
    assert!(r.deficit > 0.0);
}

#[test]
fn be_gaussian() {
    let g = flat(81);
    let w = gaussian(g.grid());
    let f = bump_field(g.grid().clone(), &[0.3, 0.0], 1.5, 4.0).unwrap();
    let r = be_weak_test(
        &g,
        &w,
        &LowerBoundSpec::new(1.0, f64::INFINITY),
        &f,
        &flat_bump(&g),
        Mode::Analytic,
    )
    .unwrap();
    assert!(r.passes(), "{r:?}");
}

#[test]
fn be_sphere_equality_case() {
    let g = sphere(101);
    let w = WeightField::unit(g.grid().clone());
    let f = Field::sample_scalar(g.grid().clone(), e("cos(x1)", 2)).unwrap();
    let phi = sphere_bump(&g);
    for mode in [Mode::Analytic, Mode::Fd] {
        let r = be_weak_test(&g, &w, &LowerBoundSpec::new(1.0, 2.0), &f, &phi, mode).unwrap();
        assert!(r.passes(), "{mode}: {r:?}");
        assert!(r.deficit.abs() <= r.defect, "{mode}: {r:?}");
    }
    let r = be_weak_test(
        &g,
        &w,
        &LowerBoundSpec::new(1.0, 2.0),
        &f,
        &phi,
        Mode::Analytic,
    )
    .unwrap();
    assert!(r.deficit.abs() < 1e-8);
}

#[test]
fn volume_growth_examples() {
    let unit = Arc::new(ChartGrid::cube(2, 0.0, 1.0, 11, 2).unwrap());
    let g = MetricField::euclidean(unit.clone()).unwrap();
    let w = WeightField::unit(unit.clone());
    let one = Field::constant(unit.clone(), 1.0);
    assert!((volume_growth_check(&w, &g, &one).unwrap() - (-1.0f64).exp()).abs() < 1e-14);

    let two = Arc::new(ChartGrid::new(vec![0.0, 0.0], vec![2.0, 1.0], vec![11, 11], 2).unwrap());
    let g2 = MetricField::euclidean(two.clone()).unwrap();
    let zero = Field::constant(two.clone(), 0.0);
    let v = volume_growth_check(&WeightField::unit(two), &g2, &zero).unwrap();
    assert!((v - 2.0).abs() < 1e-14 && v > 1.0);

    let g3 = flat(201);
    let r = Field::sample_scalar(g3.grid().clone(), e("sqrt(x1^2 + x2^2)", 2)).unwrap();
    let v = volume_growth_check(&WeightField::unit(g3.grid().clone()), &g3, &r).unwrap();
    assert!((v - PI).abs() < 1e-3 && v <= 1.0 + PI);

    let neg = Field::constant(unit.clone(), -1.0);
    assert!(volume_growth_check(&w, &g, &neg).is_err());
}

#[test]
fn family_is_deterministic() {
    let g = sphere(41);
    let a = default_test_family(&g, 11, Mode::Analytic).unwrap();
    let b = default_test_family(&g, 11, Mode::Analytic).unwrap();
    let c = default_test_family(&g, 12, Mode::Analytic).unwrap();
    assert_eq!(a.len(), FAMILY_SIZE);
    let ids: Vec<_> = a.iter().map(|t| t.id.clone()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), ids.len());
    for (s, t) in a.iter().zip(&b) {
        assert_eq!(s.id, t.id);
        assert_eq!(s.x.components(), t.x.components());
    }
    assert!(a
        .iter()
        .zip(&c)
        .any(|(s, t)| s.x.components() != t.x.components()));
}

#[test]
fn sweep_csv_layout() {
    let g = sphere(31);
    let w = WeightField::unit(g.grid().clone());
    let form = WeakForm::new(&g, &w, Mode::Analytic).unwrap();
    let family = default_test_family(&g, 1, Mode::Analytic).unwrap();
    let sweep = deficit_sweep(&form, &LowerBoundSpec::new(1.0, f64::INFINITY), &family).unwrap();
    let mut buf = Vec::new();
    sweep.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "test_id,term1,term2,term3,term4,term5,term6,term7,term8,term9,value,defect,verdict"
    );
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), FAMILY_SIZE);
    assert!(rows.iter().all(|r| r.split(',').count() == 13));
    let ids: Vec<_> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}
