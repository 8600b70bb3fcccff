use std::cell::Cell;

use cartan_core::corpus;
use cartan_core::dsl::{self, LowerOptions, Problem};
use cartan_core::flow::{
    convergence_ratios, develop_along_path, monodromy_defect, path_independence_defect,
    step_refinement, FlowError, PathSpec,
};
use cartan_core::symbolic::Expr;
use cartan_core::tasks::{RATIO_RANGE, REPARAM_TOL};
use cartan_core::Development;
use proptest::prelude::*;

mod support;

use support::runner;

fn load(name: &str) -> Problem {
    dsl::load(corpus::example(name).unwrap(), LowerOptions::default()).unwrap()
}

fn inside(chart: &cartan_core::symbolic::Chart, margin: f64) -> impl Strategy<Value = Vec<f64>> {
    let boxes: Vec<_> = chart
        .intervals()
        .iter()
        .map(|&(lo, hi)| {
            let pad = (hi - lo) * margin;
            (lo + pad)..(hi - pad)
        })
        .collect();
    boxes
}

#[test]
fn self_development_reproduces_the_path() {
    let p = load("exp-scaled");
    let c = &p.coframes["scaled"];
    let pts = (inside(c.chart(), 0.05), inside(c.chart(), 0.05));
    runner(1000)
        .run(&pts, |(a, b)| {
            let path = PathSpec::segment(&a, &b).with_steps(400);
            let dev: Development = develop_along_path(c.system(), c, &a, &path).unwrap();
            for seg in &dev.segments {
                for (g, img) in seg.gamma.iter().zip(&seg.image) {
                    let err = g
                        .iter()
                        .zip(img)
                        .map(|(x, y)| (x - y).abs())
                        .fold(0.0, f64::max);
                    prop_assert!(err <= 1e-8, "{:?} -> {:?}: {err:e}", a, b);
                }
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn flat_development_is_path_independent() {
    let p = load("flat");
    let c = &p.coframes["flat"];
    let pts = (
        inside(c.chart(), 0.3),
        inside(c.chart(), 0.3),
        inside(c.chart(), 0.3),
        inside(c.chart(), 0.3),
    );
    runner(1000)
        .run(&pts, |(a, b, via, q0)| {
            let direct = PathSpec::segment(&a, &b).with_steps(50);
            let bent = PathSpec::waypoints(vec![a.clone(), via, b.clone()]).with_steps(50);
            match path_independence_defect(c.system(), c, &q0, &direct, &bent) {
                Ok(d) => prop_assert!(d <= 1e-7, "defect {d:e}"),
                // the image may leave the box; that case says nothing here
                Err(FlowError::ExitsDomain { .. }) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
            Ok(())
        })
        .unwrap();
}

/// `s + a sin(2 pi s) / (2 pi)` is an increasing reparameterization of
/// `[0, 1]` for `|a| < 1`.
fn warp(a: f64) -> Expr {
    let s = Expr::sym("s");
    let two_pi = Expr::int(2) * Expr::sym("pi");
    s.clone() + Expr::float(a) * (two_pi.clone() * s).sin() / two_pi
}

#[test]
fn monodromy_ignores_reparameterization() {
    let p = load("punctured-plane-monodromy");
    let src = p.system("angle").unwrap();
    let tgt = &p.coframes["line"];
    let case = (0.7f64..1.8, -0.9f64..0.9, -0.9f64..0.9, 1i64..3);
    runner(1000)
        .run(&case, |(r, a, b, turns)| {
            let lp = |w: Expr| {
                let arg = Expr::int(2 * turns) * Expr::sym("pi") * w;
                let r = Expr::float(r);
                PathSpec::curve("s", vec![r.clone() * arg.clone().cos(), r * arg.sin()])
                    .with_steps(400)
            };
            let one = monodromy_defect(src, tgt, &lp(warp(a)), &[0.0f64]).unwrap();
            let two = monodromy_defect(src, tgt, &lp(warp(b)), &[0.0f64]).unwrap();
            prop_assert!((one - two).abs() <= REPARAM_TOL, "{one} vs {two}");
            Ok(())
        })
        .unwrap();
}

/// Self-developments of the round sphere frame between equivalent points
/// converge at fourth order.
#[test]
fn development_converges_at_fourth_order() {
    let p = load("constant-curvature-sphere");
    let c = &p.coframes["surface"];
    let case = (
        inside(c.chart(), 0.3),
        proptest::collection::vec(-0.5f64..0.5, 3),
        inside(c.chart(), 0.3),
    );
    let used = Cell::new(0);
    runner(1000)
        .run(&case, |(a, step, q0)| {
            let b: Vec<f64> = a.iter().zip(&step).map(|(x, d)| x + d).collect();
            let path = PathSpec::segment(&a, &b);
            let study = match step_refinement(c, c, &q0, &path, &[20, 40, 80, 160]) {
                Ok(s) => s,
                Err(FlowError::ExitsDomain { .. }) => return Ok(()),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            // the stencil rounds at about 5e-13; near that the ratios say nothing
            if study.last().unwrap().residual < 5e-12 {
                return Ok(());
            }
            used.set(used.get() + 1);
            for r in convergence_ratios(&study) {
                prop_assert!(
                    (RATIO_RANGE.0..=RATIO_RANGE.1).contains(&r),
                    "ratio {r} from {a:?} to {b:?}, q0 {q0:?}"
                );
            }
            Ok(())
        })
        .unwrap();
    assert!(used.get() > 500, "only {} informative cases", used.get());
}
