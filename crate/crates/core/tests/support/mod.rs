//! Randomized property batteries shared by the property tests and the
//! acceptance target. Each battery runs a fixed number of cases from a fixed
//! seed and reports the first counterexample.

#![allow(dead_code)]

use std::sync::Arc;

use cartan_core::algebroid::{AlgebroidForm, IsotropyAlgebra, TrivializedAlgebroid};
use cartan_core::coframe::{ChainOptions, Coframe, InvariantChain, StructureTable};
use cartan_core::corpus;
use cartan_core::dsl::{self, LowerOptions};
use cartan_core::forms::{DifferentialForm, VectorField};
use cartan_core::symbolic::{normalize, Binding, Bindings, Chart, Expr, Sampling};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub const CASES: u32 = 1000;
pub const SEED: [u8; 32] = [17; 32];

pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &SEED))
}

fn leaf(vars: &'static [&'static str]) -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0..vars.len()).prop_map(move |i| Expr::sym(vars[i])),
        (-3i64..4).prop_map(Expr::int),
        (1i64..4, 1i64..4).prop_map(|(a, b)| Expr::frac(a, b)),
    ]
}

/// Smooth expressions without division, so they evaluate everywhere.
pub fn smooth(vars: &'static [&'static str]) -> impl Strategy<Value = Expr> {
    leaf(vars).prop_recursive(4, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), 1i64..3).prop_map(|(a, n)| a.pow(n)),
            inner.clone().prop_map(Expr::sin),
            inner.clone().prop_map(Expr::cos),
            inner.prop_map(|a| Expr::exp(a * Expr::frac(1, 2))),
        ]
    })
}

/// Expressions over `x, y, t` including the bound function `h`, as used by
/// the normalization battery.
pub fn expr_tree() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        Just(Expr::sym("x")),
        Just(Expr::sym("y")),
        Just(Expr::sym("t")),
        (-3i64..4).prop_map(Expr::int),
        (1i64..4, 1i64..4).prop_map(|(a, b)| Expr::frac(a, b)),
        Just(Expr::func("h", 0, Expr::sym("x"))),
        Just(Expr::func("h", 1, Expr::sym("x"))),
    ];
    leaf.prop_recursive(8, 40, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), -2i64..3).prop_map(|(a, n)| a.pow(n)),
            inner.clone().prop_map(Expr::sin),
            inner.clone().prop_map(Expr::cos),
            inner.clone().prop_map(Expr::exp),
            inner.prop_map(|a| Expr::func("h", 0, a)),
        ]
    })
}

const XYTZ: &[&str] = &["x", "y", "t", "z"];

pub fn space() -> Arc<Chart> {
    let mut b = Bindings::new();
    b.insert(
        "h",
        Binding::symbolic("s", Expr::sym("s").pow(2) + Expr::one()),
    );
    Arc::new(
        Chart::new(
            "P",
            &[
                ("x", 0.2, 0.9),
                ("y", 0.3, 0.8),
                ("t", -1.0, 1.0),
                ("z", 0.0, 0.5),
            ],
        )
        .unwrap()
        .with_bindings(b),
    )
}

fn one_form(chart: &Arc<Chart>) -> impl Strategy<Value = DifferentialForm> {
    let chart = chart.clone();
    proptest::collection::vec(smooth(XYTZ), 4)
        .prop_map(move |c| DifferentialForm::one_form(chart.clone(), &c).unwrap())
}

fn function_form(chart: &Arc<Chart>) -> impl Strategy<Value = DifferentialForm> {
    let chart = chart.clone();
    smooth(XYTZ).prop_map(move |f| DifferentialForm::function(chart.clone(), &f).unwrap())
}

/// Forms of degree 0, 1 or 2 (the last as a wedge of two 1-forms).
fn any_form(chart: &Arc<Chart>) -> impl Strategy<Value = DifferentialForm> {
    prop_oneof![
        function_form(chart),
        one_form(chart),
        (one_form(chart), one_form(chart)).prop_map(|(a, b)| a.wedge(&b).unwrap()),
    ]
}

/// Largest coefficient of `w` over `points`; `None` if any is not finite.
fn form_size(w: &DifferentialForm, points: &[Vec<f64>]) -> Option<f64> {
    let mut m: f64 = 0.0;
    for p in points {
        for v in w.values_at(p).ok()? {
            if !v.is_finite() {
                return None;
            }
            m = m.max(v.abs());
        }
    }
    Some(m)
}

fn report<T: std::fmt::Debug>(
    r: Result<(), proptest::test_runner::TestError<T>>,
) -> Result<u32, String> {
    r.map(|_| CASES).map_err(|e| e.to_string())
}

/// A triangular coframe on [`space`] with non-constant entries.
pub fn skew_coframe(chart: &Arc<Chart>) -> Coframe {
    let (x, y) = (Expr::sym("x"), Expr::sym("y"));
    let rows = [
        vec![Expr::one(), Expr::zero(), y.clone(), Expr::zero()],
        vec![Expr::zero(), x.clone().exp(), Expr::zero(), Expr::zero()],
        vec![Expr::zero(), Expr::zero(), Expr::one(), x],
        vec![
            Expr::zero(),
            Expr::zero(),
            Expr::zero(),
            y.pow(2) + Expr::one(),
        ],
    ];
    let forms = rows
        .iter()
        .map(|r| DifferentialForm::one_form(chart.clone(), r).unwrap())
        .collect();
    Coframe::new("skew", chart.clone(), forms, &Sampling::default()).unwrap()
}

/// Expanding a form in a coframe and recombining gives the form back.
pub fn expansion_round_trips() -> Result<u32, String> {
    let chart = space();
    let frame = skew_coframe(&chart);
    let pts = chart.sample(3, 8).unwrap();
    report(runner(CASES).run(&any_form(&chart), |w| {
        let coeffs = frame.expand(&w).unwrap();
        let back = frame.recombine(w.degree(), &coeffs).unwrap();
        let diff = back.sub(&w).unwrap();
        let (Some(scale), Some(err)) = (form_size(&w, &pts), form_size(&diff, &pts)) else {
            return Ok(());
        };
        prop_assert!(
            err <= 1e-9 * (1.0 + scale),
            "{:?} comes back off by {err}",
            w
        );
        Ok(())
    }))
}

/// `d(d w) = 0` for forms of degree 0 to 2.
pub fn d_squared_is_zero() -> Result<u32, String> {
    let chart = space();
    let pts = chart.sample(3, 5).unwrap();
    report(runner(CASES).run(&any_form(&chart), |w| {
        let dw = w.exterior_derivative().unwrap();
        let ddw = dw.exterior_derivative().unwrap();
        let (Some(scale), Some(err)) = (form_size(&dw, &pts), form_size(&ddw, &pts)) else {
            return Ok(());
        };
        prop_assert!(err <= 1e-9 * (1.0 + scale), "d^2 of {:?} is {err}", w);
        Ok(())
    }))
}

/// `d(a ^ b) = da ^ b + (-1)^p a ^ db`.
pub fn wedge_is_graded_leibniz() -> Result<u32, String> {
    let chart = space();
    let pts = chart.sample(3, 6).unwrap();
    let pair = (
        any_form(&chart),
        prop_oneof![function_form(&chart), one_form(&chart)],
    );
    report(runner(CASES).run(&pair, |(a, b)| {
        let p = a.degree();
        let lhs = a.wedge(&b).unwrap().exterior_derivative().unwrap();
        let first = a.exterior_derivative().unwrap().wedge(&b).unwrap();
        let second = a.wedge(&b.exterior_derivative().unwrap()).unwrap();
        let second = if p % 2 == 0 {
            second
        } else {
            second.scale(&Expr::int(-1)).unwrap()
        };
        let diff = lhs.sub(&first.add(&second).unwrap()).unwrap();
        let (Some(scale), Some(err)) = (form_size(&lhs, &pts), form_size(&diff, &pts)) else {
            return Ok(());
        };
        prop_assert!(err <= 1e-9 * (1.0 + scale), "Leibniz fails by {err}");
        Ok(())
    }))
}

fn bundled_algebroid(example: &str, name: &str) -> TrivializedAlgebroid {
    let src = corpus::example(example).expect("bundled example");
    let p = dsl::load(src, LowerOptions::default()).expect("bundled examples load");
    p.algebroids[name].clone()
}

/// `d_A(d_A w) = 0` for functions and 1-forms on the affinely curved
/// algebroid, whose anchor and bracket both depend on the base point.
pub fn algebroid_d_squared_is_zero() -> Result<u32, String> {
    const Y: &[&str] = &["k", "H", "J", "t"];
    let a = bundled_algebroid("affinely-curved", "affine");
    let pts = a.base().sample(3, 9).unwrap();
    let n = a.rank();
    let form = prop_oneof![
        smooth(Y).prop_map(move |f| {
            let mut w = AlgebroidForm::zero(n, 0);
            w.set(Vec::new(), normalize(&f));
            w
        }),
        proptest::collection::vec(smooth(Y), 3).prop_map(move |cs| {
            let mut w = AlgebroidForm::zero(n, 1);
            for (i, c) in cs.into_iter().enumerate() {
                w.set(vec![i], normalize(&c));
            }
            w
        }),
    ];
    report(runner(CASES).run(&form, |w| {
        let dw = a.differential(&w).unwrap();
        let ddw = a.differential(&dw).unwrap();
        let (Ok(scale), Ok(err)) = (a.max_abs(&dw, &pts), a.max_abs(&ddw, &pts)) else {
            return Ok(());
        };
        if !scale.is_finite() {
            return Ok(());
        }
        prop_assert!(err <= 1e-9 * (1.0 + scale), "d_A^2 = {err} (scale {scale})");
        Ok(())
    }))
}

fn known_algebras() -> Vec<(&'static str, Vec<(usize, usize, usize, f64)>)> {
    // entries (k, i, j, c): [e_i, e_j] = c e_k
    vec![
        ("so3", vec![(2, 0, 1, 1.0), (0, 1, 2, 1.0), (1, 2, 0, 1.0)]),
        ("sl2", vec![(2, 0, 1, -1.0), (0, 1, 2, 1.0), (1, 2, 0, 1.0)]),
        ("se2", vec![(1, 2, 0, 1.0), (0, 1, 2, 1.0)]),
        ("heisenberg", vec![(2, 0, 1, 1.0)]),
        ("aff+r", vec![(1, 0, 1, 1.0)]),
    ]
}

fn structure_of(n: usize, entries: &[(usize, usize, usize, f64)]) -> Vec<Vec<Vec<f64>>> {
    let mut s = vec![vec![vec![0.0; n]; n]; n];
    for &(k, i, j, c) in entries {
        s[k][i][j] += c;
        s[k][j][i] -= c;
    }
    s
}

/// Structure constants in the basis `f_a = sum_i P[i][a] e_i`.
fn change_basis(s: &[Vec<Vec<f64>>], p: &nalgebra::DMatrix<f64>) -> Option<Vec<Vec<Vec<f64>>>> {
    let n = s.len();
    let inv = p.clone().try_inverse()?;
    let mut out = vec![vec![vec![0.0; n]; n]; n];
    for a in 0..n {
        for b in 0..n {
            // [f_a, f_b] = sum P_ia P_jb s^k_ij e_k, then back to f coordinates
            let mut w = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    for (k, wk) in w.iter_mut().enumerate() {
                        *wk += p[(i, a)] * p[(j, b)] * s[k][i][j];
                    }
                }
            }
            for c in 0..n {
                out[c][a][b] = (0..n).map(|k| inv[(c, k)] * w[k]).sum();
            }
        }
    }
    Some(out)
}

/// Jacobi holds for Lie algebras in random bases, the isotropy class is
/// basis independent, and the symbolic bracket of a rational change of basis
/// passes the algebroid axioms.
pub fn bracket_jacobi() -> Result<u32, String> {
    let algebras = known_algebras();
    let strat = (
        0..algebras.len(),
        proptest::collection::vec(-4i64..5, 9),
        1i64..4,
    );
    report(runner(CASES).run(&strat, |(which, entries, den)| {
        let (name, table) = &algebras[which];
        let p = nalgebra::DMatrix::from_fn(3, 3, |i, j| {
            entries[3 * i + j] as f64 / den as f64 + if i == j { 3.0 } else { 0.0 }
        });
        if p.determinant().abs() < 1e-3 {
            return Ok(());
        }
        let s = structure_of(3, table);
        let s2 = change_basis(&s, &p).expect("invertible");
        let scale = s2
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let iso = IsotropyAlgebra::from_structure_constants(s2.clone());
        let j = iso.jacobi_residual();
        prop_assert!(
            j <= 1e-9 * (1.0 + scale * scale),
            "{name}: Jacobi residual {j}"
        );
        if ["so3", "sl2", "se2"].contains(name) {
            let class = cartan_core::algebroid::classify_isotropy_3d(&iso).unwrap();
            prop_assert_eq!(class.tag(), *name);
        }
        // the same algebra with exact rational constants
        let mut t = StructureTable::zero(3);
        for k in 0..3 {
            for a in 0..3 {
                for b in a + 1..3 {
                    let v = s2[k][a][b];
                    let q = cartan_core::coframe::recognize_rational(v);
                    let Some(q) = q else { return Ok(()) };
                    t.set(k, a, b, Expr::rational(q));
                }
            }
        }
        let alg = TrivializedAlgebroid::lie_algebra(name, t).unwrap();
        let rep = alg
            .check_structure_equations(&Sampling::default().with_trials(1), 1e-9)
            .unwrap();
        prop_assert!(
            rep.pass,
            "{name}: symbolic Jacobi residual {}",
            rep.jacobi_residual
        );
        Ok(())
    }))
}

/// Jacobi for the Lie bracket of vector fields on the plane.
pub fn vector_field_jacobi() -> Result<u32, String> {
    const XY: &[&str] = &["x", "y"];
    let chart = Arc::new(Chart::new("Q", &[("x", 0.1, 0.9), ("y", 0.1, 0.9)]).unwrap());
    let field = || {
        let chart = chart.clone();
        proptest::collection::vec(smooth(XY), 2)
            .prop_map(move |c| VectorField::new(chart.clone(), c).unwrap())
    };
    let pts = chart.sample(3, 4).unwrap();
    report(
        runner(CASES).run(&(field(), field(), field()), |(x, y, z)| {
            let cyc = |a: &VectorField, b: &VectorField, c: &VectorField| {
                a.lie_bracket(&b.lie_bracket(c).unwrap()).unwrap()
            };
            let sum = cyc(&x, &y, &z)
                .add(&cyc(&y, &z, &x))
                .unwrap()
                .add(&cyc(&z, &x, &y))
                .unwrap();
            let big = cyc(&x, &y, &z);
            for p in &pts {
                let env = chart.env_at(p);
                let mut scale: f64 = 1.0;
                for c in big.components() {
                    let Ok(v) = c.eval(&env) else { return Ok(()) };
                    scale = scale.max(v.abs());
                }
                for c in sum.components() {
                    let Ok(v) = c.eval(&env) else { return Ok(()) };
                    prop_assert!(v.abs() <= 1e-9 * scale, "Jacobi defect {v}");
                }
            }
            Ok(())
        }),
    )
}

/// Ranks along the invariant chain never decrease, never exceed the
/// dimension, and stay put once two consecutive orders agree.
pub fn chain_rank_is_monotone() -> Result<u32, String> {
    const XY: &[&str] = &["x", "y"];
    let chart = Arc::new(Chart::new("Q", &[("x", 0.1, 0.9), ("y", 0.1, 0.9)]).unwrap());
    let sampling = Sampling::default().with_trials(4);
    report(runner(CASES).run(&(smooth(XY), smooth(XY)), |(f, g)| {
        // theta1 = dx + g dy, theta2 = e^f dy is a coframe for any f, g
        let th1 = DifferentialForm::one_form(chart.clone(), &[Expr::one(), g]).unwrap();
        let th2 = DifferentialForm::one_form(chart.clone(), &[Expr::zero(), Expr::exp(f)]).unwrap();
        let Ok(c) = Coframe::new("random", chart.clone(), vec![th1, th2], &sampling) else {
            return Ok(());
        };
        let opts = ChainOptions {
            max_order: 2,
            samples: 4,
            ..ChainOptions::default()
        };
        let Ok(chain) = InvariantChain::build(&c, opts) else {
            return Ok(());
        };
        let ranks: Vec<usize> = chain
            .stats()
            .iter()
            .map(|s| s.ranks.iter().copied().max().unwrap_or(0))
            .collect();
        prop_assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "ranks {:?}", ranks);
        prop_assert!(ranks.iter().all(|&r| r <= 2), "ranks {:?}", ranks);
        if let Some(r) = chain.stabilized_at() {
            prop_assert!(
                ranks[r..].iter().all(|&x| x == ranks[r]),
                "ranks {:?} after {r}",
                ranks
            );
        }
        for s in chain.samples() {
            let per: Vec<usize> = (0..ranks.len())
                .map(|o| chain.rank_at(o, s).unwrap_or(0))
                .collect();
            prop_assert!(
                per.windows(2).all(|w| w[0] <= w[1]),
                "pointwise ranks {:?}",
                per
            );
        }
        Ok(())
    }))
}

/// `normalize` is idempotent.
pub fn normalization_is_idempotent() -> Result<u32, String> {
    report(runner(CASES).run(&expr_tree(), |e| {
        let once = normalize(&e);
        prop_assert_eq!(normalize(&once), once.clone(), "input {}", e);
        Ok(())
    }))
}
