use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/fixed.json")
}

fn balshap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_balshap"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn run_succeeds_and_honours_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = balshap(&["run", "--config", fixture().to_str().unwrap(), "--out", out, "--seed", "11", "--skip-topk"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["complete"], true);
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(fixture()).unwrap()).unwrap();
    v["background"]["rates"] = serde_json::json!([0.9]);
    let p = dir.path().join("bad.json");
    fs::write(&p, v.to_string()).unwrap();
    let o = balshap(&["run", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("background rate"));

    fs::write(&p, "{ not json").unwrap();
    assert_eq!(code(&balshap(&["run", "--config", p.to_str().unwrap()])), 2);

    let o = balshap(&[
        "run",
        "--config",
        fixture().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--cell",
        "0.3_full_deep",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn stage_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(fixture()).unwrap()).unwrap();
    v["background"]["size"] = 10_000.into();
    let p = dir.path().join("big.json");
    fs::write(&p, v.to_string()).unwrap();
    let o = balshap(&["run", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage balance failed"));

    // explain before train has nothing to read
    let empty = tempfile::tempdir().unwrap();
    let o = balshap(&["explain", "--config", fixture().to_str().unwrap(), "--out", empty.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn subcommands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture();
    let common = ["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()];
    for stage in ["synth", "split", "train", "balance"] {
        let mut args = vec![stage];
        args.extend(common);
        let o = balshap(&args);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for stage in ["explain", "evaluate"] {
        let mut args = vec![stage];
        args.extend(common);
        args.extend(["--cell", "0.5_under_deep"]);
        assert_eq!(code(&balshap(&args)), 0, "{stage}");
    }
    let cell = dir.path().join("cells/0.5_under_deep");
    for f in ["shap.csv", "shap.json", "ranking.json", "beeswarm.svg", "abnormal.json", "topk.csv"] {
        assert!(cell.join(f).exists(), "{f}");
    }
    assert!(!dir.path().join("cells/0.5_full_deep").exists());
}

#[test]
fn help_lists_subcommands() {
    let o = balshap(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for s in ["synth", "split", "train", "balance", "explain", "evaluate", "run"] {
        assert!(text.contains(s), "{s}");
    }
}
