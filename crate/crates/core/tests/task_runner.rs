use cartan_core::corpus;
use cartan_core::dsl::{self, LowerOptions, Problem};
use cartan_core::report::Report;
use cartan_core::tasks::{prepare_all, run, RunOptions, TaskKind};

fn problem(src: &str) -> Problem {
    dsl::load(src, LowerOptions::default()).unwrap()
}

fn run_src(src: &str, opts: &RunOptions) -> Report {
    run(&problem(src), opts).unwrap()
}

const SCALED: &str = "\
chart R2 (x, y) { x in (-1, 1); y in (-1, 1); }
coframe scaled on R2 { theta1 = d[x]; theta2 = exp(x)*d[y]; }
";

#[test]
fn every_bundled_example_passes() {
    for (name, src) in corpus::EXAMPLES {
        let report = run_src(src, &RunOptions::default());
        for t in &report.tasks {
            let failed: Vec<_> = t.checks.iter().filter(|c| !c.pass).collect();
            assert!(
                t.pass,
                "{name}: {} {} {:?} {failed:?}",
                t.kind, t.name, t.error
            );
        }
        assert!(report.pass, "{name}");
    }
}

#[test]
fn reports_are_deterministic() {
    let src = corpus::example("constant-curvature-sphere").unwrap();
    let a = run_src(src, &RunOptions::default()).to_json();
    let b = run_src(src, &RunOptions::default()).to_json();
    assert_eq!(a, b);
    let other = RunOptions {
        seed: 7,
        ..RunOptions::default()
    };
    let c = run_src(src, &other);
    assert!(c.pass);
    assert_eq!(c.seed, 7);
    assert!(c.tasks.iter().flat_map(|t| &t.checks).all(|k| k.seed == 7));
}

#[test]
fn tasks_report_in_declaration_order() {
    let src = corpus::example("flat").unwrap();
    let r = run_src(src, &RunOptions::default());
    let names: Vec<_> = r.tasks.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "structure",
            "symmetries",
            "axioms",
            "frame",
            "unimodular",
            "translation",
            "broken-path"
        ]
    );
}

#[test]
fn user_expectation_replaces_the_default_check() {
    let src = format!(
        "{SCALED}task develop wrong {{ source = scaled; target = scaled; \
         start = (x = 0, y = 0); path = [(x = 0, y = 0), (x = 0.5, y = 0.5)]; \
         expect residual >= 1; }}\n"
    );
    let r = run_src(&src, &RunOptions::default());
    let checks: Vec<_> = r.tasks[0]
        .checks
        .iter()
        .filter(|c| c.name == "residual")
        .collect();
    assert_eq!(checks.len(), 1);
    assert_eq!(checks[0].expected, ">= 1");
    assert!(!checks[0].pass);
    assert!(!r.pass);
}

#[test]
fn failing_expectations_fail_the_task() {
    let src = format!(
        "{SCALED}task analyze s {{ coframe = scaled; expect C[2,1,2] = 2; expect rank = 0; }}\n"
    );
    let r = run_src(&src, &RunOptions::default());
    let t = &r.tasks[0];
    assert!(!t.pass);
    assert!(!t.check("C[2,1,2]").unwrap().pass);
    assert!(t.check("rank").unwrap().pass);
}

fn tolerance_of(src: &str, opts: &RunOptions, check: &str) -> Option<f64> {
    run_src(src, opts).tasks[0].check(check).unwrap().tolerance
}

#[test]
fn tolerance_precedence() {
    let bare = format!("{SCALED}task analyze s {{ coframe = scaled; expect C[2,1,2] = 1; }}\n");
    let own = format!(
        "{SCALED}task analyze s {{ coframe = scaled; tol = 1e-3; expect C[2,1,2] = 1; }}\n"
    );
    let cli = RunOptions {
        tol: Some(1e-4),
        ..RunOptions::default()
    };
    assert_eq!(
        tolerance_of(&bare, &RunOptions::default(), "C[2,1,2]"),
        Some(1e-9)
    );
    assert_eq!(tolerance_of(&bare, &cli, "C[2,1,2]"), Some(1e-4));
    assert_eq!(tolerance_of(&own, &cli, "C[2,1,2]"), Some(1e-3));
}

#[test]
fn filter_selects_one_kind() {
    let src = corpus::example("flat").unwrap();
    let opts = RunOptions {
        filter: Some(TaskKind::Develop),
        ..RunOptions::default()
    };
    let r = run_src(src, &opts);
    assert_eq!(r.tasks.len(), 2);
    assert!(r.tasks.iter().all(|t| t.kind == "develop"));
}

#[test]
fn preparation_errors_are_positioned() {
    let cases = [
        ("task analyze a { coframe = nowhere; }", "nowhere"),
        ("task analyze a { coframe = scaled; colour = 3; }", "colour"),
        (
            "task analyze a { coframe = scaled; trials = -1; }",
            "trials",
        ),
        (
            "task develop a { source = scaled; target = scaled; }",
            "start",
        ),
        (
            "task equiv a { source = scaled; target = scaled; at = (x = 0); to = (x = 0, y = 0); }",
            "y",
        ),
        (
            "task analyze a { coframe = scaled; expect banana = 1; }",
            "banana",
        ),
    ];
    for (task, needle) in cases {
        let src = format!("{SCALED}{task}\n");
        let err = prepare_all(&problem(&src), &RunOptions::default()).unwrap_err();
        assert_eq!(err.line, 3, "{task}: {err}");
        assert!(err.message.contains(needle), "{task}: {err}");
    }
}

#[test]
fn task_kinds_round_trip_through_names() {
    for k in TaskKind::ALL {
        assert_eq!(TaskKind::from_name(k.name()), Some(k));
    }
    assert_eq!(TaskKind::from_name("nope"), None);
}
