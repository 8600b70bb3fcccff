use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cartan-kit"))
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cartan-kit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const GOOD: &str = "\
chart R2 (x, y) { x in (-1, 1); y in (-1, 1); }
coframe scaled on R2 { theta1 = d[x]; theta2 = exp(x)*d[y]; }
task analyze s { coframe = scaled; expect C[2,1,2] = 1; }
";

#[test]
fn passing_run_exits_zero_and_prints_the_report() {
    let file = scratch("good.cartan", GOOD);
    let o = bin().arg("run").arg(&file).output().unwrap();
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert!(out.contains("\"schema\": \"cartan-kit/1\""), "{out}");
    assert!(out.contains("\"seed\": 1729"), "{out}");
    assert!(out.contains("\"pass\": true"), "{out}");
}

#[test]
fn failing_check_exits_one() {
    let file = scratch("wrong.cartan", &GOOD.replace("= 1;", "= 2;"));
    let o = bin().arg("analyze").arg(&file).output().unwrap();
    assert_eq!(code(&o), 1);
    let err = text(&o.stderr);
    assert!(err.contains("FAIL analyze s"), "{err}");
}

#[test]
fn malformed_input_exits_two_with_position() {
    let file = scratch("bad.cartan", "chart P (x) {\n  x in (0, 1)\n}\n");
    let o = bin().arg("run").arg(&file).output().unwrap();
    assert_eq!(code(&o), 2);
    let err = text(&o.stderr);
    assert!(err.contains("bad.cartan:3:1:"), "{err}");
    assert!(text(&o.stdout).contains("\"error\""));
}

#[test]
fn missing_file_exits_two() {
    let o = bin()
        .args(["run", "/nonexistent/file.cartan"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn out_flag_writes_the_report_and_seed_is_recorded() {
    let file = scratch("seeded.cartan", GOOD);
    let out = file.with_extension("json");
    let o = bin()
        .args(["--seed", "42", "run"])
        .arg(&file)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert!(o.stdout.is_empty());
    let report = std::fs::read_to_string(&out).unwrap();
    assert!(report.contains("\"seed\": 42"), "{report}");
}

#[test]
fn subcommands_filter_by_kind() {
    let file = scratch(
        "mixed.cartan",
        &format!("{GOOD}task isotropy i {{ coframe = scaled; point = (x = 0, y = 0); }}\n"),
    );
    let o = bin().arg("isotropy").arg(&file).output().unwrap();
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert!(out.contains("\"kind\": \"isotropy\""));
    assert!(!out.contains("\"kind\": \"analyze\""));
}

#[test]
fn examples_list_and_run_deterministically() {
    let o = bin().arg("examples").output().unwrap();
    assert_eq!(code(&o), 0);
    let list = text(&o.stdout);
    for name in ["flat", "so3", "punctured-plane-monodromy"] {
        assert!(list.lines().any(|l| l.trim() == name), "{list}");
    }
    let a = bin().args(["examples", "so3"]).output().unwrap();
    let b = bin().args(["examples", "so3"]).output().unwrap();
    assert_eq!(code(&a), 0, "{}", text(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let unknown = bin().args(["examples", "nope"]).output().unwrap();
    assert_eq!(code(&unknown), 2);
}
