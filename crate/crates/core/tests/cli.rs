use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hyperlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperlab")).args(args).output().unwrap()
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONSTRUCT_ONLY: &str = r#"
seed = 7
dimension = 64

[operator]
kind = "scaled_backward_shift"
weight = 2.0

[family]
field = "sqrt_prime_2b"
samples = 1024

[construct]
max_fit_terms = 1
visit_samples = 50

[[construct.blocks]]
atoms = [10]
coeffs = [[0.05, 0.0]]
radius = 0.5

[[construct.blocks]]
atoms = [30]
coeffs = [[0.0625, 0.0]]
radius = 0.5
scale = "bound_relative"
"#;

#[test]
fn minimal_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = hyperlab(&["run", "--config", configs().join("minimal.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(&out);
    assert_eq!(s["pass"], true);
    let ratio = s["pipelines"]["khinchine"]["report"]["ratio"].as_f64().unwrap();
    assert!((ratio - 1.0).abs() < 1e-9);
    assert!(out.join("config.toml").exists());
}

#[test]
fn validate_accepts_the_shipped_configs() {
    for name in ["minimal.toml", "full.toml"] {
        let o = hyperlab(&["validate", "--config", configs().join(name).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
    }
}

#[test]
fn validate_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    let o = hyperlab(&["validate", "--config", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!stderr(&o).trim().is_empty());

    let zero = dir.path().join("zero.toml");
    let text = fs::read_to_string(configs().join("minimal.toml")).unwrap().replace("dimension = 8", "dimension = 0");
    fs::write(&zero, text).unwrap();
    let o = hyperlab(&["validate", "--config", zero.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension must be ≥ 1"), "{}", stderr(&o));
}

#[test]
fn seed_flag_supplies_a_missing_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("noseed.toml");
    let text = fs::read_to_string(configs().join("minimal.toml")).unwrap().replace("seed = 1\n", "");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = hyperlab(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));

    let o = hyperlab(&["run", "--config", cfg.to_str().unwrap(), "--seed", "99", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(summary(&out)["seed"], 99);
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = hyperlab(&["run", "--config", "/nonexistent/hyperlab.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replay_reproduces_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("construct.toml");
    fs::write(&cfg, CONSTRUCT_ONLY).unwrap();
    let out = dir.path().join("out");
    let o = hyperlab(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));

    let blocks = summary(&out)["pipelines"]["construct"]["blocks"].clone();
    let blocks = blocks.as_array().expect("construct blocks in summary");
    assert_eq!(blocks.len(), 2);
    for b in blocks {
        assert!(b["log2_bound"].is_number());
        assert!(b["certified"].is_boolean());
    }
    assert!(out.join("construction.csv").exists());

    let o = hyperlab(&["replay", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read(out.join("summary.json")).unwrap(),
        fs::read(out.join("replay/summary.json")).unwrap()
    );
}
