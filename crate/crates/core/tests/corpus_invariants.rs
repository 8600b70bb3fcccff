//! Identities that must hold on every bundled coframe, algebroid and
//! realization.

use cartan_core::algebroid::TrivializedAlgebroid;
use cartan_core::coframe::Coframe;
use cartan_core::corpus;
use cartan_core::dsl::{self, LowerOptions, Problem};
use cartan_core::forms::DifferentialForm;
use cartan_core::linalg::RankTolerance;
use cartan_core::realization::{check_realization, classifying_map_rank};
use cartan_core::symbolic::{probably_equal, Expr, Sampling};

fn problems() -> Vec<(&'static str, Problem)> {
    corpus::EXAMPLES
        .iter()
        .map(|(name, src)| (*name, dsl::load(src, LowerOptions::default()).unwrap()))
        .collect()
}

fn coframes(problems: &[(&'static str, Problem)]) -> Vec<(String, Coframe)> {
    problems
        .iter()
        .flat_map(|(file, p)| {
            p.coframes
                .iter()
                .map(move |(name, c)| (format!("{file}/{name}"), c.clone()))
        })
        .collect()
}

fn algebroids(problems: &[(&'static str, Problem)]) -> Vec<(String, TrivializedAlgebroid)> {
    problems
        .iter()
        .flat_map(|(file, p)| {
            p.algebroids
                .iter()
                .map(move |(name, a)| (format!("{file}/{name}"), a.clone()))
        })
        .collect()
}

fn zero(e: &Expr, c: &Coframe) -> bool {
    probably_equal(e, &Expr::zero(), c.chart(), &Sampling::default()).unwrap()
}

#[test]
fn structure_functions_recombine_to_d_theta() {
    for (name, c) in coframes(&problems()) {
        if c.dim() < 2 {
            continue;
        }
        let table = c.structure_functions().unwrap();
        for (k, theta) in c.forms().iter().enumerate() {
            let coeffs: Vec<(Vec<usize>, Expr)> = table
                .upper_indices()
                .into_iter()
                .filter(|&(kk, _, _)| kk == k)
                .map(|(_, i, j)| (vec![i, j], table.get(k, i, j).clone()))
                .collect();
            let rebuilt = c.recombine(2, &coeffs).unwrap();
            let diff = rebuilt.sub(&theta.exterior_derivative().unwrap()).unwrap();
            for (idx, e) in diff.terms() {
                assert!(
                    zero(e, &c),
                    "{name}: d theta{} differs at {idx:?}: {e}",
                    k + 1
                );
            }
        }
    }
}

#[test]
fn coframe_derivative_rebuilds_df() {
    for (name, c) in coframes(&problems()) {
        let table = c.structure_functions().unwrap();
        let mut fs: Vec<Expr> = table
            .upper_indices()
            .iter()
            .map(|&(k, i, j)| table.get(k, i, j).clone())
            .collect();
        fs.extend(c.chart().coords().iter().map(|x| Expr::sym(x).sin()));
        for f in fs {
            let parts = c.coframe_derivative(&f).unwrap();
            let coeffs: Vec<_> = parts
                .into_iter()
                .enumerate()
                .map(|(k, e)| (vec![k], e))
                .collect();
            let rebuilt = c.recombine(1, &coeffs).unwrap();
            let df = DifferentialForm::function(c.chart().clone(), &f)
                .unwrap()
                .exterior_derivative()
                .unwrap();
            let diff = rebuilt.sub(&df).unwrap();
            assert!(diff.terms().all(|(_, e)| zero(e, &c)), "{name}: d({f})");
        }
    }
}

/// `d^2 theta = 0` written in structure functions and their coframe
/// derivatives: for every `i` and `a < b < c`, the cyclic sum of
/// `F_a(C^i_bc) + sum_m C^i_ma C^m_bc` vanishes.
#[test]
fn second_structure_identity() {
    let mut checked = 0;
    for (name, c) in coframes(&problems()) {
        let n = c.dim();
        if n < 3 {
            continue;
        }
        let t = c.structure_functions().unwrap();
        let derivs: Vec<Vec<Vec<Vec<Expr>>>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|b| {
                        (0..n)
                            .map(|cc| c.coframe_derivative(t.get(i, b, cc)).unwrap())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        for i in 0..n {
            for a in 0..n {
                for b in a + 1..n {
                    for cc in b + 1..n {
                        let mut terms = Vec::new();
                        for (x, y, z) in [(a, b, cc), (b, cc, a), (cc, a, b)] {
                            terms.push(derivs[i][y][z][x].clone());
                            for m in 0..n {
                                terms.push(t.get(i, m, x).clone() * t.get(m, y, z).clone());
                            }
                        }
                        let sum = Expr::add_all(terms);
                        assert!(zero(&sum, &c), "{name}: i={i} ({a},{b},{cc}): {sum}");
                        checked += 1;
                    }
                }
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn isotropy_algebras_satisfy_jacobi() {
    for (name, a) in algebroids(&problems()) {
        let pts = a.base().sample(8, 3).unwrap();
        for x in &pts {
            let o = a
                .orbit_and_isotropy(x, RankTolerance::default(), 1e-8)
                .unwrap();
            let r = o.isotropy.jacobi_residual();
            assert!(r <= 1e-8, "{name} at {x:?}: {r:e}");
        }
    }
}

/// Follow `sum_i w_i rho(e_i)` for a short time with RK4.
fn flow(a: &TrivializedAlgebroid, x: &[f64], w: &[f64], time: f64, steps: usize) -> Vec<f64> {
    let field = |p: &[f64]| -> Vec<f64> {
        let m = a.anchor_matrix_at(p).unwrap();
        (0..p.len())
            .map(|r| (0..w.len()).map(|i| m[(r, i)] * w[i]).sum())
            .collect()
    };
    let h = time / steps as f64;
    let mut p = x.to_vec();
    let shift = |p: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        p.iter().zip(k).map(|(a, b)| a + s * b).collect()
    };
    for _ in 0..steps {
        let k1 = field(&p);
        let k2 = field(&shift(&p, &k1, h / 2.0));
        let k3 = field(&shift(&p, &k2, h / 2.0));
        let k4 = field(&shift(&p, &k3, h));
        for r in 0..p.len() {
            p[r] += h / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]);
        }
    }
    p
}

#[test]
fn orbit_dimension_is_constant_along_anchor_flows() {
    let mut moved = 0;
    for (name, a) in algebroids(&problems()) {
        if a.base().dim() == 0 {
            continue;
        }
        for x in a.base().sample(6, 9).unwrap() {
            let here = a
                .orbit_and_isotropy(&x, RankTolerance::default(), 1e-8)
                .unwrap();
            for i in 0..a.rank() {
                let mut w = vec![0.0; a.rank()];
                w[i] = 1.0;
                let y = flow(&a, &x, &w, 0.05, 20);
                if a.base().require_inside(&y).is_err() {
                    continue;
                }
                let there = a
                    .orbit_and_isotropy(&y, RankTolerance::default(), 1e-8)
                    .unwrap();
                assert_eq!(here.orbit_dim, there.orbit_dim, "{name}: {x:?} -> {y:?}");
                moved += 1;
            }
        }
    }
    assert!(moved > 0);
}

#[test]
fn classifying_map_rank_matches_orbit_dimension() {
    let s = Sampling::default();
    let mut checked = 0;
    for (file, p) in problems() {
        for (rname, entry) in &p.realizations {
            let a = &p.algebroids[&entry.algebroid];
            let r = &entry.realization;
            if !check_realization(a, r, &s, 1e-8).unwrap().pass {
                continue;
            }
            let pts = r.chart().sample(8, 4).unwrap();
            for m in classifying_map_rank(a, r, &pts, RankTolerance::default()).unwrap() {
                assert_eq!(m.rank, m.orbit_dim, "{file}/{rname} at {:?}", m.point);
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}
