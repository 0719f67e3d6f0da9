//! End-to-end checks of the CLI surface: artifacts, exit codes, determinism.

use std::path::Path;
use std::process::{Command, Output};

fn mechdis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mechdis"))
        .args(args)
        .env_remove("MECHDIS_SEED")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = mechdis(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn tiny_train_args<'a>(data: &'a str, out: &'a str, seed: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--data",
        data,
        "--out",
        out,
        "--epochs",
        "3",
        "--batch-size",
        "32",
        "--enc-hidden",
        "12",
        "--enc-layers",
        "2",
        "--trans-hidden",
        "8",
        "--trans-layers",
        "2",
        "--alpha-a",
        "0.01",
        "--seed",
        seed,
    ]
}

#[test]
fn generate_creates_dataset_directory() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ta");
    run_ok(&[
        "generate", "--variant", "t-a", "--dz", "2", "--dx", "4", "--n-seq", "50", "--t-len",
        "2", "--seed", "0", "--out", data.to_str().unwrap(),
    ]);
    for f in ["meta.json", "x.bin", "a.bin", "z.bin"] {
        assert!(data.join(f).exists(), "{f} missing");
    }
}

#[test]
fn missing_out_is_usage_error() {
    let out = mechdis(&["generate", "--variant", "t-a", "--dz", "2", "--dx", "4"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_dims_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = mechdis(&[
        "generate",
        "--variant",
        "t-a",
        "--dz",
        "6",
        "--dx",
        "3",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

fn setup_tiny_dataset(dir: &Path) -> String {
    let data = dir.join("data");
    run_ok(&[
        "generate", "--variant", "t-a", "--dz", "2", "--dx", "4", "--n-seq", "60", "--t-len",
        "2", "--seed", "3", "--out", data.to_str().unwrap(),
    ]);
    data.to_str().unwrap().to_string()
}

#[test]
fn train_writes_three_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = setup_tiny_dataset(dir.path());
    let run1 = dir.path().join("run1");
    let run2 = dir.path().join("run2");
    run_ok(&tiny_train_args(&data, run1.to_str().unwrap(), "5"));
    run_ok(&tiny_train_args(&data, run2.to_str().unwrap(), "5"));
    for f in ["checkpoint.json", "log.csv", "report.json"] {
        assert!(run1.join(f).exists(), "{f} missing");
    }
    let r1 = std::fs::read(run1.join("report.json")).unwrap();
    let r2 = std::fs::read(run2.join("report.json")).unwrap();
    assert_eq!(r1, r2, "reports differ across identical runs");
    let c1 = std::fs::read(run1.join("checkpoint.json")).unwrap();
    let c2 = std::fs::read(run2.join("checkpoint.json")).unwrap();
    assert_eq!(c1, c2, "checkpoints differ across identical runs");
    // report parses and has the contract fields
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run1.join("report.json")).unwrap()).unwrap();
    for key in ["mcc", "permutation", "linear_score", "shd_a", "shd_z", "elbo_test", "masks_a", "masks_z", "seed", "config", "format_version"] {
        assert!(report.get(key).is_some(), "report missing {key}");
    }
}

#[test]
fn eval_round_trips_and_rejects_dim_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let data = setup_tiny_dataset(dir.path());
    let run = dir.path().join("run");
    run_ok(&tiny_train_args(&data, run.to_str().unwrap(), "7"));
    let ckpt = run.join("checkpoint.json");

    let out1 = run_ok(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", &data]);
    let out2 = run_ok(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", &data]);
    assert_eq!(out1.stdout, out2.stdout, "eval output not deterministic");
    let report: serde_json::Value = serde_json::from_slice(&out1.stdout).unwrap();
    assert!(report["mcc"].as_f64().is_some());

    // a dataset with different dims must be rejected with exit 2
    let other = dir.path().join("other");
    run_ok(&[
        "generate", "--variant", "t-a", "--dz", "3", "--dx", "6", "--n-seq", "40", "--t-len",
        "2", "--seed", "0", "--out", other.to_str().unwrap(),
    ]);
    let bad = mechdis(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        other.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn supervised_checkpoint_reports_its_mcc_via_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = setup_tiny_dataset(dir.path());
    let run = dir.path().join("sup");
    let mut args = tiny_train_args(&data, run.to_str().unwrap(), "2");
    args.push("--supervised");
    run_ok(&args);
    let out = run_ok(&[
        "eval",
        "--checkpoint",
        run.join("checkpoint.json").to_str().unwrap(),
        "--data",
        &data,
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let direct: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mcc"], direct["mcc"]);
}

#[test]
fn sweep_produces_expected_rows_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = setup_tiny_dataset(dir.path());
    let csv1 = dir.path().join("sweep1.csv");
    let csv2 = dir.path().join("sweep2.csv");
    let args = |out: &Path| {
        vec![
            "sweep".to_string(),
            "--data".into(),
            data.clone(),
            "--alpha-a".into(),
            "0,0.01".into(),
            "--seeds".into(),
            "0,1".into(),
            "--epochs".into(),
            "2".into(),
            "--batch-size".into(),
            "32".into(),
            "--enc-hidden".into(),
            "12".into(),
            "--enc-layers".into(),
            "2".into(),
            "--trans-hidden".into(),
            "8".into(),
            "--trans-layers".into(),
            "2".into(),
            "--jobs".into(),
            "2".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let to_refs = |v: &[String]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let a1 = args(&csv1);
    let out = Command::new(env!("CARGO_BIN_EXE_mechdis"))
        .args(to_refs(&a1))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a2 = args(&csv2);
    let out2 = Command::new(env!("CARGO_BIN_EXE_mechdis"))
        .args(to_refs(&a2))
        .output()
        .unwrap();
    assert!(out2.status.success());

    let content = std::fs::read_to_string(&csv1).unwrap();
    let lines: Vec<&str> = content.lines().collect();
    assert_eq!(lines[0], "kind,alpha_a,alpha_z,seed,mcc,linear_score,elbo,shd_a,shd_z,status");
    // 2 alphas x 1 alpha_z x 2 seeds runs + 2 supervised + 2 random
    assert_eq!(lines.len() - 1, 4 + 2 + 2);
    let runs = lines.iter().filter(|l| l.starts_with("run,")).count();
    assert_eq!(runs, 4);
    assert_eq!(lines.iter().filter(|l| l.starts_with("supervised,")).count(), 2);
    assert_eq!(lines.iter().filter(|l| l.starts_with("random,")).count(), 2);
    assert!(lines[1..].iter().all(|l| l.ends_with(",ok")));

    // deterministic bytes even with --jobs 2
    assert_eq!(content, std::fs::read_to_string(&csv2).unwrap());
}

#[test]
fn sweep_empty_alpha_list_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = setup_tiny_dataset(dir.path());
    let out = mechdis(&[
        "sweep",
        "--data",
        &data,
        "--alpha-a",
        "",
        "--out",
        dir.path().join("s.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_variant_and_graph_modes() {
    for (variant, dz) in [("t-a", "3"), ("nt-a", "5"), ("t-t", "4"), ("nt-t", "3")] {
        let out = run_ok(&["check", "--variant", variant, "--dz", dz]);
        let verdict: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(verdict["satisfied"], true, "{variant} at d_z={dz}");
        assert!(verdict["criterion"]["witnesses"].as_array().is_some());
    }
    // a complete graph fails the temporal criterion
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("complete3.json");
    std::fs::write(
        &path,
        r#"{"rows":3,"cols":3,"adj":[[1,1,1],[1,1,1],[1,1,1]]}"#,
    )
    .unwrap();
    let out = run_ok(&["check", "--graph", path.to_str().unwrap(), "--mode", "temporal"]);
    let verdict: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(verdict["satisfied"], false);

    // malformed graph JSON exits 2
    std::fs::write(&path, "{not json").unwrap();
    let out = mechdis(&["check", "--graph", path.to_str().unwrap(), "--mode", "temporal"]);
    assert_eq!(out.status.code(), Some(2));

    // check output is deterministic
    let o1 = run_ok(&["check", "--variant", "nt-a", "--dz", "5", "--seed", "1"]);
    let o2 = run_ok(&["check", "--variant", "nt-a", "--dz", "5", "--seed", "1"]);
    assert_eq!(o1.stdout, o2.stdout);
}

#[test]
fn verify_lemmas_reports_and_exits_zero() {
    let out = run_ok(&["verify-lemmas", "--dim", "3", "--trials", "25", "--seed", "0"]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["passed"], true);
    let lemmas = summary["lemmas"].as_array().unwrap();
    assert!(lemmas.len() >= 2);
    for l in lemmas {
        assert_eq!(l["trials"].as_u64().unwrap(), 25);
        assert_eq!(l["counterexamples"].as_u64().unwrap(), 0);
    }
    // degenerate dimension is trivially fine
    let out = run_ok(&["verify-lemmas", "--dim", "1", "--trials", "5", "--seed", "0"]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["passed"], true);
}

#[test]
fn config_file_and_env_seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    std::fs::write(
        &cfg,
        r#"{"variant":"t-a","dz":2,"dx":4,"n-seq":30,"t-len":2,"seed":9,"out":null}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("cfg_data");
    // out comes from the CLI, the rest from the file
    run_ok(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 9);
    assert_eq!(meta["n_seq"], 30);

    // env var is the lowest-precedence seed source
    let out_env = dir.path().join("env_data");
    let out = Command::new(env!("CARGO_BIN_EXE_mechdis"))
        .args([
            "generate", "--variant", "t-a", "--dz", "2", "--dx", "4", "--n-seq", "30",
            "--t-len", "2", "--out", out_env.to_str().unwrap(),
        ])
        .env("MECHDIS_SEED", "123")
        .output()
        .unwrap();
    assert!(out.status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_env.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 123);
}
