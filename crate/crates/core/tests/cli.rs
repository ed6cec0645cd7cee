//! End-to-end checks of the command-line binary: artifact layout, exit
//! codes, and run-to-run reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bbnn-sim"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "`bbnn-sim {}` failed:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn toy_pipeline_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let net = &format!("{out}/network.toml");
    let map = &format!("{out}/map.bbnp");
    let inputs = &format!("{out}/inputs.bbni");
    let labels = &format!("{out}/labels.txt");

    run_ok(&["toy", "--preset", "small", "--count", "8", "--output", out, "--seed", "3"]);
    for f in ["network.toml", "map.bbnp", "inputs.bbni", "labels.txt", "config_snapshot.toml"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    assert_eq!(read(&dir.path().join("labels.txt")).lines().count(), 8);

    run_ok(&["analyze", "--network", net, "--map", map, "--output", out]);
    let sparsity = read(&dir.path().join("sparsity.csv"));
    assert!(sparsity.starts_with("layer,"));
    assert_eq!(sparsity.lines().count(), 5, "header plus one row per layer");

    run_ok(&["clamp", "--network", net, "--map", map, "--output", out]);
    assert!(dir.path().join("map_clamped.bbnp").exists());
    assert!(dir.path().join("clamp_report.csv").exists());

    run_ok(&["split", "--network", net, "--map", map, "--output", out]);
    assert!(read(&dir.path().join("split.csv")).starts_with("layer,"));
    assert!(dir.path().join("split.json").exists());

    run_ok(&[
        "simulate", "--network", net, "--map", map, "--inputs", inputs, "--labels", labels,
        "--n-mc", "4", "--output", out,
    ]);
    let predictions = read(&dir.path().join("predictions.csv"));
    assert_eq!(predictions.lines().count(), 9, "header plus one row per input");
    let summary: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("summary.json"))).unwrap();
    let acc = summary["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc), "accuracy {acc}");

    // reusing the same predictions as the "OOD" set still exercises the
    // whole curve path (AUC near 0.5)
    let preds = format!("{out}/predictions.csv");
    run_ok(&["roc", "--ood", &preds, "--output", out]);
    assert!(read(&dir.path().join("roc_epistemic.csv")).starts_with("fpr,tpr,threshold"));
    assert!(read(&dir.path().join("roc_summary.csv")).starts_with("curve,auc"));

    run_ok(&["project", "--network", net, "--map", map, "--mode", "ls", "--output", out]);
    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("cost_ls.json"))).unwrap();
    assert!(report["energy_per_image_j"].as_f64().unwrap() > 0.0);

    run_ok(&["sweep", "--network", net, "--map", map, "--sizes", "32,64", "--output", out]);
    let sweep = read(&dir.path().join("sweep.csv"));
    assert_eq!(sweep.lines().count(), 7, "header plus one row per size and mode");
}

#[test]
fn identical_configs_reproduce_predictions_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["toy", "--preset", "small", "--count", "6", "--output", out, "--seed", "9"]);
    let net = &format!("{out}/network.toml");
    let map = &format!("{out}/map.bbnp");
    let inputs = &format!("{out}/inputs.bbni");

    let mut runs = Vec::new();
    for sub in ["a", "b"] {
        let run_dir = dir.path().join(sub);
        run_ok(&[
            "simulate", "--network", net, "--map", map, "--inputs", inputs,
            "--n-mc", "3", "--seed", "42", "--output", run_dir.to_str().unwrap(),
        ]);
        runs.push(read(&run_dir.join("predictions.csv")));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn mapping_modes_agree_on_a_noise_free_device() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["toy", "--preset", "small", "--count", "6", "--output", out, "--seed", "5"]);
    let dev_path = dir.path().join("device.toml");
    std::fs::write(
        &dev_path,
        "g_max = 25e-6\nsigma_prog = 0.0\nsigma_read = 0.0\nnu_mean = 0.0\nnu_sigma = 0.0\n",
    )
    .unwrap();

    let mut runs = Vec::new();
    for mode in ["dense", "ls", "lsrs"] {
        let run_dir = dir.path().join(mode);
        run_ok(&[
            "simulate",
            "--network", &format!("{out}/network.toml"),
            "--map", &format!("{out}/map.bbnp"),
            "--inputs", &format!("{out}/inputs.bbni"),
            "--labels", &format!("{out}/labels.txt"),
            "--device", dev_path.to_str().unwrap(),
            "--mode", mode,
            "--n-mc", "3",
            "--seed", "7",
            "--output", run_dir.to_str().unwrap(),
        ]);
        runs.push(read(&run_dir.join("predictions.csv")));
    }
    assert_eq!(runs[0], runs[1], "dense vs ls");
    assert_eq!(runs[0], runs[2], "dense vs lsrs");
}

#[test]
fn exit_codes_distinguish_usage_and_runtime_errors() {
    let help = bin().arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));

    let bad_flag = bin().args(["simulate", "--no-such-flag"]).output().unwrap();
    assert_eq!(bad_flag.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let missing = bin()
        .args([
            "simulate",
            "--network", "/nonexistent/network.toml",
            "--map", "/nonexistent/map.bbnp",
            "--inputs", "/nonexistent/inputs.bbni",
            "--output", dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());
}
