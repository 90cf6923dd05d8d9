//! End-to-end pipeline tests through the compiled binary: synth -> train
//! -> predict -> combine -> evaluate/report, exit codes, manifests, and
//! byte-identical reruns.

use std::path::Path;
use std::process::{Command, Output};

fn gradekit(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gradekit"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn expect_ok(args: &[&str]) -> String {
    let out = gradekit(args, &[]);
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn synth_small(dir: &Path, seed: &str) {
    expect_ok(&[
        "synth",
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
        "--train-speakers",
        "30",
        "--calibration-speakers",
        "15",
        "--test-speakers",
        "15",
        "--frames-min",
        "2",
        "--frames-max",
        "4",
        "--views",
        "2",
    ]);
}

#[test]
fn pipeline_smoke_synth_train_predict_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_small(dir, "7");
    for name in [
        "train.jsonl",
        "calibration.jsonl",
        "test.jsonl",
        "views-g01.csv",
    ] {
        assert!(dir.join(name).exists(), "missing {name}");
    }

    for part in ["P1", "P2", "P3", "P4", "P5"] {
        expect_ok(&[
            "train",
            "--out",
            dir.to_str().unwrap(),
            "--part",
            part,
            "--members",
            "2",
            "--arch",
            "shallow",
            "--hidden-width",
            "32",
            "--penult-width",
            "8",
            "--epochs",
            "10",
            "--lr",
            "0.002",
            "--dropout",
            "0.05",
            "--batch-size",
            "16",
            "--seed",
            "3",
        ]);
        assert!(dir.join(format!("ensemble-{part}/ensemble.json")).exists());
        assert!(dir.join(format!("loss-{part}.json")).exists());
    }

    let models: Vec<String> = ["P1", "P2", "P3", "P4", "P5"]
        .iter()
        .map(|p| {
            dir.join(format!("ensemble-{p}"))
                .to_str()
                .unwrap()
                .to_string()
        })
        .collect();
    let mut predict_args: Vec<&str> = vec!["predict", "--out", dir.to_str().unwrap(), "--model"];
    predict_args.extend(models.iter().map(|s| s.as_str()));
    let data = dir.join("test.jsonl");
    predict_args.extend(["--data", data.to_str().unwrap(), "--grader", "w2v"]);
    expect_ok(&predict_args);
    let pred_csv = dir.join("predictions-w2v.csv");
    assert!(pred_csv.exists());
    let header = std::fs::read_to_string(&pred_csv).unwrap();
    assert!(header.starts_with("speaker,part,grader,score\n"));

    // Evaluate writes the metrics files with all five columns.
    let metrics_dir = dir.join("metrics");
    let table = expect_ok(&[
        "evaluate",
        "--pred",
        pred_csv.to_str().unwrap(),
        "--ref",
        data.to_str().unwrap(),
        "--out",
        metrics_dir.to_str().unwrap(),
    ]);
    assert!(table.contains("| Model | PCC | SRC | RMSE | %<=0.5 | %<=1.0 |"));
    let metrics_json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(metrics_dir.join("metrics.json")).unwrap()).unwrap();
    for field in ["pcc", "src", "rmse", "within_half", "within_one", "n"] {
        assert!(
            metrics_json.get(field).is_some(),
            "metrics.json lacks {field}"
        );
    }

    // Report adds scatter data.
    let report_dir = dir.join("report");
    expect_ok(&[
        "report",
        "--pred",
        pred_csv.to_str().unwrap(),
        "--ref",
        data.to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    let scatter = std::fs::read_to_string(report_dir.join("scatter.csv")).unwrap();
    assert!(scatter.starts_with("speaker,reference,predicted\n"));
    assert_eq!(scatter.lines().count(), 15 + 1);

    // Manifest records every run in order.
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    let commands: Vec<&str> = manifest
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["command"].as_str().unwrap())
        .collect();
    assert_eq!(commands[0], "synth");
    assert!(commands.contains(&"train") && commands.contains(&"predict"));
}

#[test]
fn combine_and_calibrate_produce_models_and_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_small(dir, "11");
    let g1 = dir.join("views-g01.csv");
    let g2 = dir.join("views-g02.csv");
    let cal = dir.join("calibration.jsonl");
    let test = dir.join("test.jsonl");

    let stdout = expect_ok(&[
        "combine",
        "--out",
        dir.to_str().unwrap(),
        "--graders",
        g1.to_str().unwrap(),
        g2.to_str().unwrap(),
        "--fit",
        cal.to_str().unwrap(),
        "--apply",
        test.to_str().unwrap(),
    ]);
    assert!(stdout.contains("| Model | P1 | P2 | P3 | P4 | P5 | b0 |"));
    assert!(stdout.contains("| g01 |") && stdout.contains("| g02 |"));
    assert!(dir.join("combination.json").exists());
    assert!(dir.join("combined.csv").exists());

    let model: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("combination.json")).unwrap()).unwrap();
    assert_eq!(model["coefficients"].as_object().unwrap().len(), 10);
    assert!(model["regularized"].as_bool().is_some());

    // Combined predictions evaluate cleanly against the test references.
    let table = expect_ok(&[
        "evaluate",
        "--pred",
        dir.join("combined.csv").to_str().unwrap(),
        "--ref",
        test.to_str().unwrap(),
    ]);
    assert!(table.contains("combined:overall"));

    // Single-grader calibration.
    let stdout = expect_ok(&[
        "calibrate",
        "--out",
        dir.to_str().unwrap(),
        "--graders",
        g1.to_str().unwrap(),
        "--fit",
        cal.to_str().unwrap(),
    ]);
    assert!(stdout.contains("| g01 |"));
    assert!(dir.join("calibration-g01.json").exists());

    // Calibrate rejects multi-grader input.
    let out = gradekit(
        &[
            "calibrate",
            "--out",
            dir.to_str().unwrap(),
            "--graders",
            g1.to_str().unwrap(),
            g2.to_str().unwrap(),
            "--fit",
            cal.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn canonical_p2_recipe_is_the_default() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    expect_ok(&[
        "synth",
        "--seed",
        "2",
        "--out",
        dir.to_str().unwrap(),
        "--train-speakers",
        "4",
        "--calibration-speakers",
        "1",
        "--test-speakers",
        "1",
        "--frames-min",
        "2",
        "--frames-max",
        "3",
    ]);
    expect_ok(&[
        "train",
        "--out",
        dir.to_str().unwrap(),
        "--part",
        "P2",
        "--members",
        "1",
    ]);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    let train_entry = manifest
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["command"] == "train")
        .unwrap();
    let cfg = &train_entry["config"];
    assert_eq!(cfg["part"], "P2");
    assert_eq!(cfg["architecture"], "deep");
    assert_eq!(cfg["batch_size"], 16);
    assert_eq!(cfg["grad_accum_steps"], 2);
    assert_eq!(cfg["dropout_rate"], 0.5);
    assert_eq!(cfg["learning_rate"], 1e-6);
    assert_eq!(cfg["epochs"], 3);
    assert_eq!(cfg["hidden_width"], 768);
    assert_eq!(cfg["penult_width"], 128);
}

#[test]
fn config_file_drives_training_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    expect_ok(&[
        "synth",
        "--seed",
        "4",
        "--out",
        dir.to_str().unwrap(),
        "--train-speakers",
        "8",
        "--calibration-speakers",
        "1",
        "--test-speakers",
        "1",
        "--frames-min",
        "2",
        "--frames-max",
        "3",
    ]);
    let cfg_path = dir.join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{
            "part": "P5", "architecture": "shallow",
            "batch_size": 4, "grad_accum_steps": 2,
            "dropout_rate": 0.0, "learning_rate": 0.002, "epochs": 3,
            "hidden_width": 16, "penult_width": 4, "activation": "identity",
            "weight_decay": 0.0, "seed": 9
        }"#,
    )
    .unwrap();
    expect_ok(&[
        "train",
        "--out",
        dir.to_str().unwrap(),
        "--config",
        cfg_path.to_str().unwrap(),
        "--members",
        "1",
        "--epochs",
        "5",
    ]);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    let cfg = &manifest
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["command"] == "train")
        .unwrap()["config"];
    assert_eq!(cfg["part"], "P5");
    assert_eq!(cfg["batch_size"], 4);
    assert_eq!(cfg["epochs"], 5, "--epochs flag overrides the config file");
    assert_eq!(cfg["seed"], 9, "config seed kept without a --seed flag");
    assert!(dir.join("ensemble-P5").exists());

    // A part flag conflicting with the config is a usage error.
    let out = gradekit(
        &[
            "train",
            "--out",
            dir.to_str().unwrap(),
            "--config",
            cfg_path.to_str().unwrap(),
            "--part",
            "P1",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn part_level_evaluation_selects_part_grades() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_small(dir, "13");
    let test = dir.join("test.jsonl");
    // Grader view scores are per part, so P2 rows evaluate against the P2
    // reference grades.
    let table = expect_ok(&[
        "evaluate",
        "--pred",
        dir.join("views-g01.csv").to_str().unwrap(),
        "--ref",
        test.to_str().unwrap(),
        "--part",
        "P2",
    ]);
    assert!(table.contains("g01:P2"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        expect_ok(&[
            "synth",
            "--seed",
            "42",
            "--out",
            dir.to_str().unwrap(),
            "--train-speakers",
            "10",
            "--calibration-speakers",
            "5",
            "--test-speakers",
            "5",
            "--frames-min",
            "2",
            "--frames-max",
            "3",
            "--views",
            "2",
        ]);
        expect_ok(&[
            "train",
            "--out",
            dir.to_str().unwrap(),
            "--part",
            "P3",
            "--members",
            "2",
            "--arch",
            "shallow",
            "--hidden-width",
            "16",
            "--penult-width",
            "4",
            "--epochs",
            "4",
            "--lr",
            "0.002",
            "--seed",
            "5",
        ]);
    }
    for name in [
        "train.jsonl",
        "calibration.jsonl",
        "test.jsonl",
        "views-g01.csv",
        "ensemble-P3/member_00.json",
        "ensemble-P3/member_01.json",
        "loss-P3.json",
    ] {
        let left = std::fs::read(a.join(name)).unwrap();
        let right = std::fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical runs");
    }
}

#[test]
fn thread_cap_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_small(dir, "9");
    let serial = dir.join("serial");
    let parallel = dir.join("parallel");
    for (out, threads) in [(&serial, "1"), (&parallel, "4")] {
        let out_str = out.to_str().unwrap();
        let data = dir.join("train.jsonl");
        let result = gradekit(
            &[
                "train",
                "--out",
                out_str,
                "--data",
                data.to_str().unwrap(),
                "--part",
                "P1",
                "--members",
                "3",
                "--arch",
                "shallow",
                "--hidden-width",
                "16",
                "--penult-width",
                "4",
                "--epochs",
                "3",
                "--lr",
                "0.002",
                "--seed",
                "8",
            ],
            &[("GRADEKIT_THREADS", threads)],
        );
        assert!(result.status.success());
    }
    for i in 0..3 {
        let name = format!("ensemble-P1/member_0{i}.json");
        assert_eq!(
            std::fs::read(serial.join(&name)).unwrap(),
            std::fs::read(parallel.join(&name)).unwrap(),
            "{name} depends on the thread count"
        );
    }
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // 1: usage errors.
    assert_eq!(gradekit(&["frobnicate"], &[]).status.code(), Some(1));
    assert_eq!(gradekit(&["synth"], &[]).status.code(), Some(1));

    // 2: data errors.
    let out = gradekit(
        &[
            "train",
            "--out",
            dir.to_str().unwrap(),
            "--part",
            "P1",
            "--data",
            "/nonexistent.jsonl",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));

    // 3: numerical failure (degenerate metric input).
    synth_small(dir, "21");
    let test = dir.join("test.jsonl");
    let const_csv = dir.join("const.csv");
    let mut rows = String::from("speaker,part,grader,score\n");
    for i in 0..15 {
        rows.push_str(&format!("te-{i:05},overall,const,3.0\n"));
    }
    std::fs::write(&const_csv, rows).unwrap();
    let out = gradekit(
        &[
            "evaluate",
            "--pred",
            const_csv.to_str().unwrap(),
            "--ref",
            test.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));

    // 0 with --help.
    assert_eq!(gradekit(&["--help"], &[]).status.code(), Some(0));
}
