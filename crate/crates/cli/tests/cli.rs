use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use inl_core::info::{Channel, JointPmf};
use serde_json::{json, Value};

fn inl(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inl")).args(args).env("INL_OUT_DIR", out).output().expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn out_dir_env_wins_over_the_flag() {
    let env = tempfile::tempdir().unwrap();
    let flag = tempfile::tempdir().unwrap();
    let o = inl(env.path(), &["--out-dir", flag.path().to_str().unwrap(), "bandwidth-table"]);
    assert!(o.status.success());
    assert!(env.path().join("bandwidth_table.csv").exists());
    assert!(!flag.path().join("bandwidth_table.csv").exists());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("12/12"), "{text}");
}

#[test]
fn gen_data_then_train_from_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = json!({"num_classes": 3, "feature_dim": 4, "num_views": 2, "noise_stds": [0.3, 0.6],
                      "train_size": 120, "test_size": 40, "seed": 9});
    fs::write(dir.path().join("spec.json"), spec.to_string()).unwrap();
    let o = inl(dir.path(), &["gen-data", "--config", dir.path().join("spec.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let data = read_json(&dir.path().join("data.json"));
    assert_eq!(data["train"]["labels"].as_array().unwrap().len(), 120);

    let cfg = json!({"data_file": "data.json", "capacity": 64.0,
                     "train": {"s": 0.01, "eta": 0.05, "batch_size": 16, "epochs": 4, "seed": 2}});
    fs::write(dir.path().join("run.json"), cfg.to_string()).unwrap();
    for scheme in ["inl", "fl", "sl"] {
        let o = inl(
            dir.path(),
            &[
                "--deterministic",
                "train",
                "--scheme",
                scheme,
                "--config",
                dir.path().join("run.json").to_str().unwrap(),
            ],
        );
        assert!(o.status.success(), "{scheme}: {}", String::from_utf8_lossy(&o.stderr));
        let csv = fs::read_to_string(dir.path().join(format!("{scheme}_metrics.csv"))).unwrap();
        assert_eq!(csv.lines().next(), Some("epoch,split,loss,accuracy,cumulative_bits"));
        assert_eq!(csv.lines().count(), 1 + 2 * 4);
        let summary = read_json(&dir.path().join(format!("{scheme}_summary.json")));
        for key in ["final_accuracy", "total_bits", "wall_time_s"] {
            assert!(summary.get(key).is_some(), "{scheme} summary lacks {key}");
        }
        let last_bits: u64 = csv.lines().last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(summary["total_bits"], last_bits);
    }
}

#[test]
fn region_queries_emit_json_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let joint = JointPmf::noisy_copies(&[0.1, 0.2, 0.3]).unwrap().to_file();
    let inst = json!({
        "joint": joint,
        "channels": vec![Channel::identity(2); 3],
        "capacities": {"c15": 0.1, "c24": 0.1, "c34": 0.1, "c45": 0.1},
        "combiner": Channel::identity(4),
        "s": 0.3,
        "c_sum": 100.0,
    });
    let path = dir.path().join("inst.json");
    fs::write(&path, inst.to_string()).unwrap();
    let expect = [("feasible", false), ("sum", true), ("lemma1", true), ("lemma2", true)];
    for (q, ok) in expect {
        let o = inl(dir.path(), &["region", q, "--input", path.to_str().unwrap()]);
        assert!(o.status.success(), "{q}: {}", String::from_utf8_lossy(&o.stderr));
        let v = read_json(&dir.path().join(format!("region_{q}.json")));
        assert_eq!(v["ok"], ok, "{q}: {v}");
    }
    let v = read_json(&dir.path().join("region_feasible.json"));
    assert!(!v["verdict"]["violated"].as_array().unwrap().is_empty());
}

#[test]
fn verify_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = inl(dir.path(), &["verify", "bandwidth", "--seeds", "3,4"]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("verify_bandwidth.csv")).unwrap();
    assert!(csv.starts_with("seed,suite,check,"));
    assert_eq!(
        csv.lines().filter(|l| l.starts_with("3,")).count(),
        csv.lines().filter(|l| l.starts_with("4,")).count()
    );
    let v = read_json(&dir.path().join("verify_bandwidth.json"));
    assert_eq!(v["passed"], true);
    assert_eq!(v["failing_seeds"], json!([]));
}

#[test]
fn bad_inputs_exit_non_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!inl(dir.path(), &["train", "--config", "/nonexistent.json"]).status.success());
    fs::write(dir.path().join("bad.json"), r#"{"joint": {"alphabets": [2, 2], "probs": [0.5, 0.6, 0, 0]}}"#).unwrap();
    let o = inl(dir.path(), &["region", "feasible", "--input", dir.path().join("bad.json").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(!String::from_utf8(o.stderr).unwrap().is_empty());
}
