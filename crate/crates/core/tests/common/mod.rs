//! Shared oracles for the expression language, used by the grammar tests and
//! the acceptance suite.

use lowreg::catalog::{self, NAMES};
use lowreg::expr::parse_expr;

/// `(source, dimension, point, value)`; `None` marks a parse error.
pub fn grammar_cases() -> Vec<(&'static str, usize, Vec<f64>, Option<f64>)> {
    let e = std::f64::consts::E;
    vec![
        ("1+2*3", 1, vec![0.0], Some(7.0)),
        ("(1+2)*3", 1, vec![0.0], Some(9.0)),
        ("2^3^2", 1, vec![0.0], Some(64.0)),
        ("2^(3^2)", 1, vec![0.0], Some(512.0)),
        ("-2^2", 1, vec![0.0], Some(-4.0)),
        ("(-2)^2", 1, vec![0.0], Some(4.0)),
        ("-x1", 1, vec![3.0], Some(-3.0)),
        ("--x1", 1, vec![3.0], Some(3.0)),
        ("x1 - -x1", 1, vec![3.0], Some(6.0)),
        ("10-4-3", 1, vec![0.0], Some(3.0)),
        ("100/10/5", 1, vec![0.0], Some(2.0)),
        ("8/2*4", 1, vec![0.0], Some(16.0)),
        ("2*x1*x2", 2, vec![2.0, 3.0], Some(12.0)),
        ("x1*x2", 2, vec![2.0, 3.0], Some(6.0)),
        ("x1/x2", 2, vec![3.0, 2.0], Some(1.5)),
        ("x2-x1", 2, vec![3.0, 2.0], Some(-1.0)),
        ("x1^2", 1, vec![3.0], Some(9.0)),
        ("x1^-2", 1, vec![2.0], Some(0.25)),
        ("x1^0.5", 1, vec![4.0], Some(2.0)),
        ("x1^0", 1, vec![5.0], Some(1.0)),
        ("sin(0)", 1, vec![0.0], Some(0.0)),
        ("cos(0)", 1, vec![0.0], Some(1.0)),
        ("exp(1)", 1, vec![0.0], Some(e)),
        ("log(exp(2))", 1, vec![0.0], Some(2.0)),
        ("sqrt(16)", 1, vec![0.0], Some(4.0)),
        ("abs(-3)", 1, vec![0.0], Some(3.0)),
        ("abs(x1)", 1, vec![-2.5], Some(2.5)),
        ("max(0,x1)^2", 2, vec![-1.0, 0.0], Some(0.0)),
        ("max(0,x1)^2", 2, vec![2.0, 0.0], Some(4.0)),
        ("min(x1,x2)", 2, vec![1.0, -1.0], Some(-1.0)),
        ("max(x1,x2)", 2, vec![1.0, -1.0], Some(1.0)),
        ("max(1,2,)", 1, vec![0.0], None),
        ("min(1)", 1, vec![0.0], None),
        ("step(x1)", 1, vec![1.0], Some(1.0)),
        ("step(x1)", 1, vec![0.0], Some(0.0)),
        ("step(x1)", 1, vec![-1.0], Some(0.0)),
        ("sgn(x1)", 1, vec![0.0], Some(1.0)),
        ("sgn(x1)", 1, vec![-0.1], Some(-1.0)),
        ("sign(x1)", 1, vec![0.0], Some(0.0)),
        ("sign(x1)", 1, vec![-4.0], Some(-1.0)),
        ("sin(x1)^2 + cos(x1)^2", 1, vec![0.7], Some(1.0)),
        ("1 + abs(x1)", 2, vec![-0.5, 0.0], Some(1.5)),
        ("x2^-2", 2, vec![0.0, 2.0], Some(0.25)),
        ("1 + max(0, x1)^2", 2, vec![0.5, 0.0], Some(1.25)),
        ("(x1^2 + x2^2)/2", 2, vec![1.0, 1.0], Some(1.0)),
        ("0.5/(1 + abs(x1))^3", 2, vec![1.0, 0.0], Some(0.0625)),
        ("-step(x1)/(1 + x1^2)^2", 2, vec![1.0, 0.0], Some(-0.25)),
        ("1.5e2", 1, vec![0.0], Some(150.0)),
        ("2.5E-1", 1, vec![0.0], Some(0.25)),
        (".5", 1, vec![0.0], Some(0.5)),
        ("5.", 1, vec![0.0], Some(5.0)),
        ("  x1  +  1 ", 1, vec![1.0], Some(2.0)),
        ("x1+x2+x3+x4", 4, vec![1.0, 2.0, 3.0, 4.0], Some(10.0)),
        (
            "x9",
            9,
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 7.0],
            Some(7.0),
        ),
        ("((((x1))))", 1, vec![2.0], Some(2.0)),
        ("sin(cos(exp(0)))", 1, vec![0.0], Some(1f64.cos().sin())),
        ("exp(-x1^2/2)", 1, vec![0.0], Some(1.0)),
        ("2*-3", 1, vec![0.0], Some(-6.0)),
        ("2^-1^2", 1, vec![0.0], Some(0.25)),
        ("-(x1+1)", 1, vec![1.0], Some(-2.0)),
        ("x1*(x1+1)", 1, vec![2.0], Some(6.0)),
        ("max(min(x1,1),-1)", 1, vec![5.0], Some(1.0)),
        ("max(min(x1,1),-1)", 1, vec![-5.0], Some(-1.0)),
        ("sqrt(x1^2 + x2^2)", 2, vec![3.0, 4.0], Some(5.0)),
        ("log(x1)", 1, vec![e], Some(1.0)),
        ("1/x1", 1, vec![4.0], Some(0.25)),
        ("0*x1", 1, vec![4.0], Some(0.0)),
        ("x1-x1", 1, vec![4.0], Some(0.0)),
        ("3-2+1", 1, vec![0.0], Some(2.0)),
        ("2*3^2", 1, vec![0.0], Some(18.0)),
        ("(2*3)^2", 1, vec![0.0], Some(36.0)),
        ("-x1^2", 1, vec![3.0], Some(-9.0)),
        ("abs(x1)*sgn(x1)", 1, vec![-2.0], Some(-2.0)),
        ("1e0", 1, vec![0.0], Some(1.0)),
        ("cos(x1)*max(0, 1 - x1^2)^3", 1, vec![0.0], Some(1.0)),
        // errors
        ("", 1, vec![0.0], None),
        ("   ", 1, vec![0.0], None),
        ("x3", 2, vec![0.0, 0.0], None),
        ("x0", 2, vec![0.0, 0.0], None),
        ("y1", 2, vec![0.0, 0.0], None),
        ("tan(x1)", 1, vec![0.0], None),
        ("1+", 1, vec![0.0], None),
        ("*2", 1, vec![0.0], None),
        ("(1+2", 1, vec![0.0], None),
        ("1+2)", 1, vec![0.0], None),
        ("sin x1", 1, vec![0.0], None),
        ("sin()", 1, vec![0.0], None),
        ("max(1 2)", 1, vec![0.0], None),
        ("2 3", 1, vec![0.0], None),
        ("1..2", 1, vec![0.0], None),
        ("x1 $ 2", 1, vec![0.0], None),
        ("x", 1, vec![0.0], None),
        ("sin", 1, vec![0.0], None),
        ("()", 1, vec![0.0], None),
        ("1^", 1, vec![0.0], None),
        ("abs(1,2)", 1, vec![0.0], None),
        ("x10", 9, vec![0.0; 9], None),
        ("--", 1, vec![0.0], None),
        ("max", 1, vec![0.0], None),
        ("1e", 1, vec![0.0], None),
    ]
}

/// Evaluates every grammar case and checks print/reparse identity. Returns
/// the number of cases.
pub fn run_grammar_suite() -> Result<usize, String> {
    let cases = grammar_cases();
    for (src, n, x, want) in &cases {
        match (parse_expr(src, *n), want) {
            (Ok(e), Some(v)) => {
                let got = e.eval(x).map_err(|err| format!("`{src}`: {err}"))?;
                if (got - v).abs() > 1e-12 * (1.0 + v.abs()) {
                    return Err(format!("`{src}` = {got}, want {v}"));
                }
                let again =
                    parse_expr(&e.to_string(), *n).map_err(|err| format!("`{e}`: {err}"))?;
                if again != e {
                    return Err(format!(
                        "`{src}` printed as `{e}` does not reparse to itself"
                    ));
                }
            }
            (Err(_), None) => {}
            (Ok(e), None) => return Err(format!("`{src}` should not parse, got {e}")),
            (Err(err), Some(_)) => return Err(format!("`{src}` failed: {err}")),
        }
    }
    Ok(cases.len())
}

/// Whether a kink of `e` lies within `2h` of `x` along some axis.
fn near_kink(e: &lowreg::Expr, x: &[f64], h: f64) -> bool {
    e.kink_arguments().iter().any(|k| {
        let v0 = k.eval(x).unwrap_or(0.0);
        (0..x.len()).any(|a| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[a] += 2.0 * h;
            xm[a] -= 2.0 * h;
            let (vp, vm) = (k.eval(&xp).unwrap_or(0.0), k.eval(&xm).unwrap_or(0.0));
            v0 == 0.0 || vp.signum() != v0.signum() || vm.signum() != v0.signum()
        })
    })
}

/// Symbolic first derivatives of every catalog source against central
/// differences (`h = 1e-5`) on a 19×19 lattice, skipping points within `2h`
/// of a kink. Returns the worst relative error.
pub fn catalog_derivative_check() -> Result<f64, String> {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for name in NAMES {
        let spec = catalog::spec(name, 2).map_err(|e| e.to_string())?;
        for src in spec.sources() {
            let e = parse_expr(src, 2).map_err(|e| e.to_string())?;
            for a in 0..2 {
                let d = e.diff(a).map_err(|e| e.to_string())?;
                for i in 1..20 {
                    for j in 1..20 {
                        let x = [
                            spec.lo[0] + (spec.hi[0] - spec.lo[0]) * i as f64 / 20.0 + 1e-3,
                            spec.lo[1] + (spec.hi[1] - spec.lo[1]) * j as f64 / 20.0 + 1e-3,
                        ];
                        if near_kink(&e, &x, h) {
                            continue;
                        }
                        let mut xp = x;
                        let mut xm = x;
                        xp[a] += h;
                        xm[a] -= h;
                        let eval = |p: &[f64]| {
                            e.eval(p)
                                .map_err(|err| format!("{name}: `{src}` at {p:?}: {err}"))
                        };
                        let cd = (eval(&xp)? - eval(&xm)?) / (2.0 * h);
                        let exact = d.eval(&x).map_err(|err| err.to_string())?;
                        let rel = (exact - cd).abs() / (1.0 + exact.abs());
                        worst = worst.max(rel);
                        if rel > 1e-6 {
                            return Err(format!(
                                "{name}: d/dx{} `{src}` at {x:?}: {exact} vs {cd}",
                                a + 1
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(worst)
}
