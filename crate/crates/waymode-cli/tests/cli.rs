//! End-to-end tests driving the compiled binary through temp directories.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn waymode() -> Command {
    Command::new(env!("CARGO_BIN_EXE_waymode"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    waymode()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process should exit normally")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("cfg.toml");
    fs::write(&path, body).unwrap();
    path
}

fn read_bytes(dir: &Path, rel: &str) -> Vec<u8> {
    fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("cannot read {rel}: {e}"))
}

const SMALL_CONFIG: &str = r#"
input_csv = "data.csv"
output_dir = "out"

[library]
size = 2
master_seed = 11

[training]
epochs = 6

[ensemble]
method = "weights"
"#;

#[test]
fn full_pipeline_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir, SMALL_CONFIG);

    let all = ["synth", "preprocess", "train", "ensemble", "evaluate"];
    for cmd in all {
        if cmd == "synth" {
            run_ok(
                dir,
                &[
                    "--config",
                    "cfg.toml",
                    "synth",
                    "--trips-per-mode",
                    "12",
                    "--out",
                    "data.csv",
                ],
            );
        } else {
            run_ok(dir, &["--config", "cfg.toml", cmd]);
        }
    }

    let tracked = [
        "data.csv",
        "out/segments.seg",
        "out/models/A.mnet",
        "out/models/G01.mnet",
        "out/models/library.tsv",
        "out/ensemble/weights.json",
        "out/evaluation.txt",
        "out/evaluation_metrics.csv",
        "out/evaluation_confusion.csv",
        "out/preprocess.manifest.json",
        "out/train.manifest.json",
    ];
    let first: Vec<Vec<u8>> = tracked.iter().map(|p| read_bytes(dir, p)).collect();

    // The preprocess manifest carries one nonzero count per mode.
    let manifest: serde_json::Value =
        serde_json::from_slice(&read_bytes(dir, "out/preprocess.manifest.json")).unwrap();
    for mode in ["walk", "bike", "transit", "car"] {
        let n = manifest["details"]["mode_counts"][mode].as_u64().unwrap();
        assert!(n > 0, "no {mode} segments in manifest");
    }

    // The evaluation report surfaces the fitted simplex weights.
    let report = String::from_utf8(read_bytes(dir, "out/evaluation.txt")).unwrap();
    assert!(
        report.contains("fitted weights:"),
        "report missing weights:\n{report}"
    );
    let weights: serde_json::Value =
        serde_json::from_slice(&read_bytes(dir, "out/ensemble/weights.json")).unwrap();
    let sum: f64 = weights["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-9, "weights sum {sum}");
    assert!(weights["converged"].as_bool().unwrap());

    for cmd in all {
        if cmd == "synth" {
            run_ok(
                dir,
                &[
                    "--config",
                    "cfg.toml",
                    "synth",
                    "--trips-per-mode",
                    "12",
                    "--out",
                    "data.csv",
                ],
            );
        } else {
            run_ok(dir, &["--config", "cfg.toml", cmd]);
        }
    }
    for (path, before) in tracked.iter().zip(&first) {
        let after = read_bytes(dir, path);
        assert_eq!(&after, before, "{path} changed across reruns");
    }
}

#[test]
fn nine_point_trips_leave_zero_segments() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut csv = String::from("user_id,timestamp,lat,lon,mode\n");
    for i in 0..9 {
        csv.push_str(&format!(
            "u,{},{:.6},-73.6,walk\n",
            i * 10,
            45.5 + i as f64 * 1e-4
        ));
    }
    fs::write(dir.join("data.csv"), csv).unwrap();
    write_config(dir, "input_csv = \"data.csv\"\noutput_dir = \"out\"\n");

    let out = run(dir, &["--config", "cfg.toml", "preprocess"]);
    assert_eq!(exit_code(&out), 2);
    assert!(
        stderr_of(&out).contains("zero surviving segments"),
        "stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn usage_and_config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let out = run(dir, &["evaluate", "--bogus"]);
    assert_eq!(exit_code(&out), 1);

    let out = run(dir, &["predict"]);
    assert_eq!(
        exit_code(&out),
        1,
        "predict without --input should be a usage error"
    );

    write_config(dir, "segment_length = 80\n");
    let out = run(dir, &["--config", "cfg.toml", "preprocess"]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_of(&out).contains("segment_length"));

    let out = run(dir, &["--jobs", "0", "preprocess"]);
    assert_eq!(exit_code(&out), 1);

    let out = run(dir, &["--config", "nope.toml", "preprocess"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn missing_prerequisites_name_the_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir, SMALL_CONFIG);

    let out = run(dir, &["--config", "cfg.toml", "train"]);
    assert_eq!(exit_code(&out), 2);
    let err = stderr_of(&out);
    assert!(
        err.contains("segments.seg") && err.contains("preprocess"),
        "stderr: {err}"
    );

    run_ok(
        dir,
        &[
            "--config",
            "cfg.toml",
            "synth",
            "--trips-per-mode",
            "12",
            "--out",
            "data.csv",
        ],
    );
    run_ok(dir, &["--config", "cfg.toml", "preprocess"]);
    run_ok(dir, &["--config", "cfg.toml", "train"]);
    let out = run(dir, &["--config", "cfg.toml", "evaluate"]);
    assert_eq!(exit_code(&out), 2);
    let err = stderr_of(&out);
    assert!(
        err.contains("weights.json") && err.contains("ensemble"),
        "stderr: {err}"
    );
}

#[test]
fn sequential_jobs_flag_reproduces_default_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir, SMALL_CONFIG);
    run_ok(
        dir,
        &[
            "--config",
            "cfg.toml",
            "synth",
            "--trips-per-mode",
            "10",
            "--out",
            "data.csv",
        ],
    );

    run_ok(dir, &["--config", "cfg.toml", "preprocess"]);
    run_ok(dir, &["--config", "cfg.toml", "train"]);
    let seg_par = read_bytes(dir, "out/segments.seg");
    let model_par = read_bytes(dir, "out/models/A.mnet");

    fs::remove_dir_all(dir.join("out")).unwrap();
    run_ok(dir, &["--jobs", "1", "--config", "cfg.toml", "preprocess"]);
    run_ok(dir, &["--jobs", "1", "--config", "cfg.toml", "train"]);
    assert_eq!(read_bytes(dir, "out/segments.seg"), seg_par);
    assert_eq!(read_bytes(dir, "out/models/A.mnet"), model_par);
}

#[test]
fn predict_reproduces_memorized_training_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // Walk and car trips only: two well-separated classes a single small
    // network can memorize outright.
    write_config(
        dir,
        r#"
input_csv = "wc.csv"
output_dir = "out"

[library]
size = 1
master_seed = 5

[training]
batch_size = 8
epochs = 80
learning_rate = 3e-3
patience = 80
dropout = 0.1

[ensemble]
method = "average"
"#,
    );
    run_ok(
        dir,
        &[
            "--config",
            "cfg.toml",
            "synth",
            "--trips-per-mode",
            "14",
            "--out",
            "all.csv",
        ],
    );
    let all = fs::read_to_string(dir.join("all.csv")).unwrap();
    let mut wc = String::new();
    for (i, line) in all.lines().enumerate() {
        if i == 0 || line.ends_with(",walk") || line.ends_with(",car") {
            wc.push_str(line);
            wc.push('\n');
        }
    }
    fs::write(dir.join("wc.csv"), wc).unwrap();

    run_ok(dir, &["--config", "cfg.toml", "preprocess"]);
    run_ok(dir, &["--config", "cfg.toml", "train"]);
    run_ok(dir, &["--config", "cfg.toml", "ensemble"]);
    run_ok(
        dir,
        &["--config", "cfg.toml", "predict", "--input", "wc.csv"],
    );

    let segments = waymode::io::read_segments_bin(&dir.join("out/segments.seg")).unwrap();
    let predictions = fs::read_to_string(dir.join("out/predictions.csv")).unwrap();
    let predicted: Vec<&str> = predictions
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert_eq!(predicted.len(), segments.len());
    for (i, (seg, pred)) in segments.iter().zip(&predicted).enumerate() {
        let actual = seg.label.unwrap().name();
        assert_eq!(
            actual, *pred,
            "segment {i} predicted {pred} but was labeled {actual}"
        );
    }
}
