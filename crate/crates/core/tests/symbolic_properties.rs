use cartan_core::symbolic::{normalize, probably_equal, Bindings, Chart, Env, Expr, Sampling};
use proptest::prelude::*;

mod support;

use support::{expr_tree, runner};

#[test]
fn normalization_is_idempotent() {
    support::normalization_is_idempotent().unwrap();
}

fn bound_chart() -> Chart {
    let mut b = Bindings::new();
    b.insert(
        "h",
        cartan_core::symbolic::Binding::symbolic("s", Expr::sym("s").pow(2) + Expr::one()),
    );
    Chart::new("P", &[("x", 0.2, 0.9), ("y", 0.3, 0.8), ("t", -1.0, 1.0)])
        .unwrap()
        .with_bindings(b)
}

#[test]
fn normal_form_preserves_values() {
    let chart = bound_chart();
    let s = Sampling::default().with_trials(4).with_tol(1e-7);
    runner(300)
        .run(&expr_tree(), |e| {
            let pts = chart.sample(4, 3).unwrap();
            for p in &pts {
                let env = chart.env_at(p);
                if let (Ok(a), Ok(b)) = (e.eval(&env), normalize(&e).eval(&env)) {
                    if a.is_finite() && a.abs() < 1e6 {
                        prop_assert!(
                            cartan_core::symbolic::close(a, b, 1e-7),
                            "{} = {} but normal form {} = {}",
                            e,
                            a,
                            normalize(&e),
                            b
                        );
                    }
                }
            }
            let _ = s;
            Ok(())
        })
        .unwrap();
}

#[test]
fn derivative_matches_central_differences() {
    let chart = bound_chart();
    let b = chart.bindings().clone();
    runner(200)
        .run(&expr_tree(), |e| {
            let de = e.diff("x");
            for p in chart.sample(3, 11).unwrap() {
                let at = |x: f64| {
                    let env = Env::new(&b).with("x", x).with("y", p[1]).with("t", p[2]);
                    e.eval(&env)
                };
                let step = 1e-5;
                let (Ok(fp), Ok(fm)) = (at(p[0] + step), at(p[0] - step)) else {
                    continue;
                };
                let env = Env::new(&b).with("x", p[0]).with("y", p[1]).with("t", p[2]);
                let Ok(exact) = de.eval(&env) else { continue };
                let fd = (fp - fm) / (2.0 * step);
                if exact.is_finite() && exact.abs() < 1e4 && fp.abs() < 1e4 {
                    prop_assert!(
                        (fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()),
                        "d/dx {} : fd {} vs {}",
                        e,
                        fd,
                        exact
                    );
                }
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn derivative_of_bound_curvature() {
    // d/du (-h''/h) with h = u^2 + 1 at u = 1 equals 4u/(u^2+1)^2 = 1.
    let mut b = Bindings::new();
    b.insert(
        "h",
        cartan_core::symbolic::Binding::symbolic("s", Expr::sym("s").pow(2) + Expr::one()),
    );
    let u = Expr::sym("u");
    let kappa = -Expr::func("h", 2, u.clone()) / Expr::func("h", 0, u.clone());
    let f = |x: f64| -2.0 / (x * x + 1.0);
    let fd = (f(1.0 + 1e-6) - f(1.0 - 1e-6)) / 2e-6;
    let v = kappa.diff("u").eval(&Env::new(&b).with("u", 1.0)).unwrap();
    assert!((v - fd).abs() < 1e-6);
    assert!((v - 1.0).abs() < 1e-6);
}

#[test]
fn equality_is_reflexive_and_symmetric() {
    let chart = bound_chart();
    let s = Sampling::default().with_trials(8);
    runner(200)
        .run(&(expr_tree(), expr_tree()), |(a, b)| {
            let eval_ok = |e: &Expr| {
                chart
                    .sample(8, s.seed)
                    .unwrap()
                    .iter()
                    .all(|p| chart.eval(e, p).is_ok_and(|v| v.is_finite()))
            };
            if !eval_ok(&a) || !eval_ok(&b) {
                return Ok(());
            }
            prop_assert!(probably_equal(&a, &a, &chart, &s).unwrap());
            let ab = probably_equal(&a, &b, &chart, &s).unwrap();
            let ba = probably_equal(&b, &a, &chart, &s).unwrap();
            prop_assert_eq!(ab, ba);
            Ok(())
        })
        .unwrap();
}
