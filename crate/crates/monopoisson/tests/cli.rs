//! End-to-end runs of the binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_monopoisson"));
    c.env_remove("MONOPOISSON_SEED");
    c
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn scratch(name: &str, body: &str) -> String {
    let dir = std::env::temp_dir().join(format!("monopoisson-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn solve_two_state() {
    let out = run(&["solve", "--config", &config("two_state.toml")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,g"));
    let g: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(g.len(), 2);
    assert!(g[0].abs() < 1e-12 && (g[1] - 1.0).abs() < 1e-12, "{g:?}");
}

#[test]
fn solve_methods_agree() {
    let path = config("birth_death.toml");
    let outputs: Vec<String> = ["linear", "regenerative", "series"]
        .iter()
        .map(|m| {
            let out = run(&["solve", "--config", &path, "--method", m]);
            assert!(out.status.success());
            String::from_utf8(out.stdout).unwrap()
        })
        .collect();
    let parse = |s: &str| -> Vec<f64> { s.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect() };
    let base = parse(&outputs[0]);
    for other in &outputs[1..] {
        for (a, b) in base.iter().zip(parse(other)) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn out_flag_writes_file() {
    let target = std::env::temp_dir().join(format!("monopoisson-out-{}.csv", std::process::id()));
    let out = run(&["solve", "--config", &config("two_state.toml"), "--out", target.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(std::fs::read_to_string(&target).unwrap().starts_with("x,g\n"));
    std::fs::remove_file(target).ok();
}

#[test]
fn simulate_is_seeded() {
    let args = ["simulate", "--config", &config("mm1.toml"), "--from", "0,1,4", "--steps", "20"];
    let (a, b) = (run(&args), run(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("step,path0,path1,path2"));
    assert_eq!(text.lines().count(), 22);
    let other = run(&["simulate", "--config", &config("mm1.toml"), "--from", "0,1,4", "--steps", "20", "--seed", "99"]);
    assert_ne!(other.stdout, text.as_bytes());
}

#[test]
fn shipped_configs_check_clean() {
    for name in ["two_state.toml", "birth_death.toml", "lindley_discrete.toml", "mm1.toml", "ar1.toml"] {
        let out = run(&["check", "--config", &config(name)]);
        let text = String::from_utf8_lossy(&out.stdout);
        assert_eq!(out.status.code(), Some(0), "{name}:\n{text}");
        assert!(text.starts_with("name,statistic,threshold,passed,sample_size,seed\n"));
        assert!(!text.contains(",false,"), "{name}:\n{text}");
    }
}

#[test]
fn validate_shipped_configs() {
    for name in ["birth_death.toml", "mm1.toml"] {
        assert!(run(&["validate", "--config", &config(name)]).status.success());
    }
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn bad_config_reports_path() {
    let path = scratch(
        "bad.toml",
        "[model]\nfamily = \"birth_death\"\np = 0.3\ntop = 20\n\n[reward]\nform = \"identity\"\n\n[split]\nb = 1.0\nlambda = 1.5\nv1 = [0.0, 1.0]\nv2 = [0.0, 1.0]\n",
    );
    let out = run(&["solve", "--config", &path]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("split.lambda"), "{err}");
}

#[test]
fn unstable_queue_is_rejected() {
    let path = scratch(
        "unstable.toml",
        "[model]\nfamily = \"lindley\"\narrival = 2.0\nservice = 1.0\n\n[reward]\nform = \"identity\"\n",
    );
    let out = run(&["validate", "--config", &path]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_config_is_io_error() {
    let out = run(&["solve", "--config", "/nonexistent/monopoisson.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind=io"));
}
