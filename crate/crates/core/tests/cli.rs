use std::path::Path;
use std::process::{Command, Output};

fn radiomark(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radiomark"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn radiomark")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = radiomark(dir, args);
    assert!(
        out.status.success(),
        "radiomark {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn owner_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["keygen", "--key-id", "owner", "--seed", "5", "--out", "keys"]);
    ok(d, &["keygen", "--key-id", "other", "--out", "keys"]);
    assert!(d.join("keys/owner.key").is_file() && d.join("keys/other.key").is_file());

    ok(d, &["synth", "--domain", "alpha", "--target-tokens", "40000", "--out", "data"]);
    ok(d, &["train", "--corpus", "data/alpha.jsonl", "--name", "clean", "--out", "models"]);
    std::fs::write(
        d.join("wm.toml"),
        "corpus = \"data/alpha.jsonl\"\nkey = \"keys/owner.key\"\nmodel = \"models/clean.model\"\nrho = 1.0\n",
    )
    .unwrap();
    ok(d, &["watermark", "--config", "wm.toml", "--out", "wm"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("wm/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["key_id"], "owner");

    ok(d, &["finetune", "--model", "models/clean.model", "--fresh", "true", "--corpus", "wm/watermarked.jsonl", "--name", "suspect", "--out", "models"]);
    let query = ["--model", "models/suspect.model", "--aux", "models/clean.model", "--corpus", "wm/watermarked.jsonl", "--token-budget", "20000"];
    let mut args = vec!["detect", "--key", "keys/owner.key", "--emit-csv", "--out", "det"];
    args.extend(query);
    ok(d, &args);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("det/report.json")).unwrap()).unwrap();
    assert_eq!(report["n0"], 20_000);
    assert!(report["p_value"].as_f64().unwrap() < 0.05, "{report}");
    assert_eq!(report["prf_version"], "sha256-v1");
    let csv = std::fs::read_to_string(d.join("det/scored.csv")).unwrap();
    assert_eq!(csv.lines().count(), 20_001);

    let mut args = vec!["attribute", "--key", "keys/owner.key", "--key", "keys/other.key", "--out", "att"];
    args.extend(query);
    ok(d, &args);
    let att: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("att/attribution.json")).unwrap()).unwrap();
    assert_eq!(att["attribution"]["verdict"], "attributed");
    assert_eq!(att["attribution"]["key_id"], "owner");

    ok(d, &["synth", "--domain", "alpha", "--stream", "1", "--target-tokens", "40000", "--out", "held"]);
    ok(d, &["baseline", "--method", "ppl", "--model", "models/suspect.model", "--members", "wm/watermarked.jsonl", "--nonmembers", "held/alpha.jsonl", "--out", "bl"]);
    ok(d, &["generate", "--model", "models/suspect.model", "--corpus", "held/alpha.jsonl", "--count", "4", "--key", "keys/owner.key", "--out", "gen"]);
    let gens = std::fs::read_to_string(d.join("gen/generations.jsonl")).unwrap();
    assert_eq!(gens.lines().count(), 4);
}

#[test]
fn input_errors_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = radiomark(tmp.path(), &["detect", "--model", "missing.model", "--key", "k.key", "--corpus", "c.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
    let out = radiomark(tmp.path(), &["experiment", "--set", "rho=2.0"]);
    assert_eq!(out.status.code(), Some(3));
    let out = radiomark(tmp.path(), &["detect", "--model", "m"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn low_power_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["keygen", "--key-id", "owner", "--seed", "1"]);
    ok(d, &["synth", "--target-tokens", "5000"]);
    ok(d, &["train", "--corpus", "out/general.jsonl"]);
    let out = radiomark(d, &["detect", "--model", "out/model.model", "--key", "out/owner.key", "--corpus", "out/general.jsonl", "--token-budget", "300", "--out", "det"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("det/report.json").is_file());
}
