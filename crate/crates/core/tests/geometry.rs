use cartan_core::coframe::Coframe;
use cartan_core::corpus;
use cartan_core::dsl::{self, parse_expr, LowerOptions, Problem};
use cartan_core::flow::{develop_along_path, pullback_residual, PathSpec};
use cartan_core::realization::{equivalence_test, EquivalenceOptions, Verdict};
use cartan_core::symbolic::{probably_equal, Sampling};
use cartan_core::{Development, Development32};

fn load(name: &str) -> Problem {
    dsl::load(corpus::example(name).unwrap(), LowerOptions::default()).unwrap()
}

#[test]
fn area_form_in_a_scaled_coframe() {
    let p = load("exp-scaled");
    let c = &p.coframes["scaled"];
    let flat = &p.coframes["flat"];
    let area = flat.forms()[0].wedge(&flat.forms()[1]).unwrap();
    let coeffs = c.expand(&area).unwrap();
    assert_eq!(coeffs.len(), 1);
    assert_eq!(coeffs[0].0, vec![0, 1]);
    let want = parse_expr("exp(-x)").unwrap();
    assert!(probably_equal(&coeffs[0].1, &want, c.chart(), &Sampling::default()).unwrap());
    let back = c.recombine(2, &coeffs).unwrap();
    assert_eq!(back, area);
}

fn verdict(a: &Coframe, p: &[f64], b: &Coframe, q: &[f64]) -> Verdict {
    equivalence_test(a, p, b, q, EquivalenceOptions::default())
        .unwrap()
        .verdict
}

#[test]
fn equivalence_is_reflexive_and_symmetric() {
    let scaled = load("exp-scaled");
    let surfaces = load("surfaces-of-revolution");
    let cases: Vec<(&Coframe, Vec<f64>)> = vec![
        (&scaled.coframes["flat"], vec![0.1, 0.2]),
        (&scaled.coframes["scaled"], vec![-0.3, 0.4]),
        (&surfaces.coframes["sphere"], vec![0.2, 0.1, 0.3]),
        (&surfaces.coframes["hyperbolic"], vec![0.2, 0.1, 0.3]),
        (&surfaces.coframes["generic"], vec![0.9, 0.1, 0.3]),
    ];
    for (c, p) in &cases {
        assert_eq!(verdict(c, p, c, p), Verdict::Equivalent, "{}", c.name());
    }
    for (a, p) in &cases {
        for (b, q) in &cases {
            assert_eq!(
                verdict(a, p, b, q),
                verdict(b, q, a, p),
                "{} vs {}",
                a.name(),
                b.name()
            );
        }
    }
    let (s, h) = (&cases[2], &cases[3]);
    assert_eq!(verdict(s.0, &s.1, h.0, &h.1), Verdict::NotEquivalent);
}

#[test]
fn flat_development_reproduces_the_path() {
    let p = load("flat");
    let c = &p.coframes["flat"];
    let path = PathSpec::waypoints(vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![0.5, 0.5]]);
    let dev: Development = develop_along_path(c.system(), c, &[0.0, 0.0], &path).unwrap();
    for seg in &dev.segments {
        for (g, img) in seg.gamma.iter().zip(&seg.image) {
            assert!((g[0] - img[0]).abs() < 1e-12 && (g[1] - img[1]).abs() < 1e-12);
        }
    }
    assert!(pullback_residual(c, c, &dev).unwrap() < 1e-10);
}

#[test]
fn single_precision_sphere_development() {
    let p = load("surfaces-of-revolution");
    let c = &p.coframes["sphere"];
    let path = PathSpec::segment(&[0.1, 0.2, 0.3], &[0.4, -0.1, 0.8]).with_steps(200);
    let single: Development32 =
        develop_along_path(c.system(), c, &[-0.3f32, 0.5, -1.0], &path).unwrap();
    let double: Development = develop_along_path(c.system(), c, &[-0.3, 0.5, -1.0], &path).unwrap();
    for (a, b) in single.end.iter().zip(&double.end) {
        assert!((f64::from(*a) - b).abs() < 1e-4, "{a} vs {b}");
    }
    assert!(pullback_residual(c, c, &single).unwrap() < 1e-3);
}

#[test]
fn inequivalent_coframes_leave_a_residual() {
    let p = load("exp-scaled");
    let (flat, scaled) = (&p.coframes["flat"], &p.coframes["scaled"]);
    let path = PathSpec::segment(&[-0.5, 0.0], &[0.5, 0.5]);
    let dev: Development = develop_along_path(flat.system(), scaled, &[0.0, 0.0], &path).unwrap();
    assert!(pullback_residual(flat, scaled, &dev).unwrap() >= 1e-2);
}
