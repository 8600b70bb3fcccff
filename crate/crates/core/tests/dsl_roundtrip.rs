use cartan_core::corpus;
use cartan_core::dsl::{self, parse, LowerOptions};
use proptest::prelude::*;

mod support;

use support::{expr_tree, runner};

#[test]
fn corpus_survives_print_and_parse() {
    for (name, src) in corpus::EXAMPLES {
        let tree = parse(src).unwrap_or_else(|e| panic!("{name}: {e}"));
        let printed = tree.to_string();
        let again = parse(&printed).unwrap_or_else(|e| panic!("{name} reprinted: {e}\n{printed}"));
        assert_eq!(tree, again, "{name}");
        assert_eq!(printed, again.to_string(), "{name}: printing is not stable");
    }
}

#[test]
fn reprinted_corpus_lowers() {
    for (name, src) in corpus::EXAMPLES {
        let printed = parse(src).unwrap().to_string();
        dsl::load(&printed, LowerOptions::default()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn random_coefficients_round_trip() {
    runner(1000)
        .run(&(expr_tree(), expr_tree()), |(a, b)| {
            let src = format!(
                "chart P (x, y, t) {{ x in (0, 1); }}\n\
                 coframe c on P {{ theta1 = ({a})*d[x] + ({b})*d[y]; theta2 = d[t]; }}\n\
                 task analyze a {{ coframe = c; expect C[1,1,2] = {b}; }}\n"
            );
            let tree = parse(&src).map_err(|e| TestCaseError::fail(format!("{e}\n{src}")))?;
            let again = parse(&tree.to_string())
                .map_err(|e| TestCaseError::fail(format!("{e}\n{tree}")))?;
            prop_assert_eq!(tree, again);
            Ok(())
        })
        .unwrap();
}

/// Byte-level mutations of the corpus: the parser may reject them but must
/// never panic.
#[test]
fn mutated_sources_never_panic() {
    let sources: Vec<&str> = corpus::EXAMPLES.iter().map(|(_, s)| *s).collect();
    let edit = (
        0..sources.len(),
        proptest::collection::vec((any::<prop::sample::Index>(), 0u8..4, any::<char>()), 1..6),
    );
    runner(1000)
        .run(&edit, |(which, ops)| {
            let mut text: Vec<char> = sources[which].chars().collect();
            for (at, op, ch) in ops {
                if text.is_empty() {
                    break;
                }
                let i = at.index(text.len());
                match op {
                    0 => {
                        text.remove(i);
                    }
                    1 => text.insert(i, ch),
                    2 => text[i] = ch,
                    _ => text.truncate(i),
                }
            }
            let s: String = text.into_iter().collect();
            let _ = dsl::load(&s, LowerOptions::default());
            Ok(())
        })
        .unwrap();
}

#[test]
fn arbitrary_text_never_panics() {
    runner(1000)
        .run(&"[a-z0-9_(){};,=<>+*/^'\\[\\]. \n-]{0,80}", |s| {
            let _ = dsl::load(&s, LowerOptions::default());
            Ok(())
        })
        .unwrap();
}

fn error_at(src: &str) -> (u32, u32, String) {
    let e = dsl::load(src, LowerOptions::default()).unwrap_err();
    (e.line, e.col, e.message)
}

#[test]
fn diagnostics_point_at_the_offending_token() {
    let (l, c, m) =
        error_at("chart P (x) {\n  x in (0, 1);\n}\ncoframe c on Q {\n  theta1 = d[x];\n}\n");
    assert_eq!((l, c), (4, 14), "{m}");
    assert!(m.contains('Q'), "{m}");

    let (l, c, m) = error_at("chart P (x) {\n  x in (0, 1)\n}\n");
    assert_eq!((l, c), (3, 1), "{m}");

    // task kinds are checked when tasks are prepared
    let p = dsl::load(
        "chart P (x) { x in (0, 1); }\ntask frobnicate a { }\n",
        LowerOptions::default(),
    )
    .unwrap();
    let e = cartan_core::tasks::run(&p, &Default::default()).unwrap_err();
    assert_eq!((e.line, e.col), (2, 6), "{e}");
}

#[test]
fn unknown_names_are_reported() {
    let src = "chart P (x) { x in (0, 1); }\ncoframe c on P { theta1 = d[x]; }\n\
               task analyze a { coframe = missing; }\n";
    let p = dsl::load(src, LowerOptions::default());
    let err = match p {
        Err(e) => e,
        Ok(p) => cartan_core::tasks::run(&p, &Default::default()).unwrap_err(),
    };
    assert_eq!(err.line, 3, "{err}");
    assert!(err.message.contains("missing"), "{err}");
}
