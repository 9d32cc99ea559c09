use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TestPair;
use crate::error::{Error, Result};
use crate::expr::{Expr, UnaryOp};
use crate::fields::cutoff::bump_field;
use crate::fields::{Field, Kind, MetricField, Mode};

pub const FAMILY_SIZE: usize = 20;

const BUMP_POWER: f64 = 8.0;

/// Placement of the test bumps inside the grid interior.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyLayout {
    pub center: Vec<f64>,
    pub radius: f64,
    pub off_center: Vec<f64>,
    pub off_radius: f64,
}

impl FamilyLayout {
    /// Largest centred ball (scaled by 0.9) inside the interior box, plus a
    /// smaller ball shifted towards the upper corner.
    pub fn for_metric(g: &MetricField) -> Result<Self> {
        let grid = g.grid();
        let region = grid.box_region(&grid.interior_box());
        let center: Vec<f64> = region.iter().map(|(a, b)| 0.5 * (a + b)).collect();
        let half = region
            .iter()
            .map(|(a, b)| 0.5 * (b - a))
            .fold(f64::INFINITY, f64::min);
        if half <= 2.0 * grid.h_max() {
            return Err(Error::Resolution(
                "grid interior too small for test bumps".into(),
            ));
        }
        let radius = 0.9 * half;
        let off_center = center.iter().map(|c| c + 0.25 * half).collect();
        Ok(FamilyLayout {
            center,
            radius,
            off_center,
            off_radius: 0.7 * radius,
        })
    }
}

fn shifted(a: usize, c: &[f64]) -> Expr {
    Expr::sub(Expr::var(a), Expr::Const(c[a]))
}

fn vector_pair(id: String, g: &MetricField, x: Vec<Expr>, phi: &Field) -> Result<TestPair> {
    let x = Field::sample(g.grid().clone(), Kind::Vector, x)?;
    TestPair::new(id, x, phi.clone())
}

/// Deterministic 20-member test family: coordinate fields (centred and
/// off-centre), rotations, gradients, rows of square roots of random PSD
/// matrices and random affine fields. All fields carry expressions.
pub fn default_test_family(g: &MetricField, seed: u64, mode: Mode) -> Result<Vec<TestPair>> {
    let grid = g.grid().clone();
    let n = grid.dim();
    let lay = FamilyLayout::for_metric(g)?;
    let phi = bump_field(grid.clone(), &lay.center, lay.radius, BUMP_POWER)?;
    let phi_off = bump_field(grid.clone(), &lay.off_center, lay.off_radius, BUMP_POWER)?;
    let c = &lay.center;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(FAMILY_SIZE);

    let unit = |i: usize| -> Vec<Expr> {
        (0..n)
            .map(|a| Expr::Const(if a == i { 1.0 } else { 0.0 }))
            .collect()
    };
    for i in 0..n {
        out.push(vector_pair(format!("coord_e{}", i + 1), g, unit(i), &phi)?);
        out.push(vector_pair(
            format!("coord_e{}_off", i + 1),
            g,
            unit(i),
            &phi_off,
        )?);
    }
    if n >= 2 {
        let rot = |c: &[f64]| -> Vec<Expr> {
            (0..n)
                .map(|a| match a {
                    0 => Expr::neg(shifted(1, c)),
                    1 => shifted(0, c),
                    _ => Expr::Const(0.0),
                })
                .collect()
        };
        out.push(vector_pair("rot_12".into(), g, rot(c), &phi)?);
        out.push(vector_pair(
            "rot_12_off".into(),
            g,
            rot(&lay.off_center),
            &phi_off,
        )?);
    }

    let last = n - 1;
    let potentials = [
        (
            "grad_quadratic",
            Expr::mul(
                Expr::Const(0.5),
                Expr::sum((0..n).map(|a| Expr::pow(shifted(a, c), Expr::Const(2.0)))),
            ),
        ),
        (
            "grad_wave",
            Expr::mul(
                Expr::unary(UnaryOp::Sin, shifted(0, c)),
                Expr::unary(UnaryOp::Cos, shifted(last, c)),
            ),
        ),
        (
            "grad_exp",
            Expr::unary(UnaryOp::Exp, Expr::mul(Expr::Const(0.5), shifted(0, c))),
        ),
    ];
    for (id, f) in potentials {
        let f = Field::sample_scalar(grid.clone(), f)?;
        let m = if g.exprs().is_some() { mode } else { Mode::Fd };
        out.push(TestPair::gradient(id, &f, phi.clone(), g, m)?);
    }

    'psd: for s in 0..2 {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let rows = super::psd::psd_sqrt_rows(&(&a * a.transpose()), 0.0);
        for (k, b) in rows.into_iter().enumerate() {
            if out.len() == FAMILY_SIZE {
                break 'psd;
            }
            let x = b.into_iter().map(Expr::Const).collect();
            out.push(vector_pair(format!("psd{s}_b{}", k + 1), g, x, &phi)?);
        }
    }

    let mut i = 0;
    while out.len() < FAMILY_SIZE {
        let (center, bump) = if i % 2 == 0 {
            (c, &phi)
        } else {
            (&lay.off_center, &phi_off)
        };
        let x: Vec<Expr> = (0..n)
            .map(|_| {
                let base = Expr::Const(rng.gen_range(-1.0..1.0));
                let lin = (0..n)
                    .map(|q| Expr::mul(Expr::Const(rng.gen_range(-1.0..1.0)), shifted(q, center)));
                Expr::add(base, Expr::sum(lin))
            })
            .collect();
        out.push(vector_pair(format!("affine{:02}", i + 1), g, x, bump)?);
        i += 1;
    }
    Ok(out)
}
