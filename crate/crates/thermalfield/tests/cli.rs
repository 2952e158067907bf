use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermalfield"))
        .args(args)
        .env_remove("THERMALFIELD_WORKERS")
        .output()
        .expect("spawn thermalfield")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_exits_cleanly() {
    let out = cli(&["--help"]);
    assert!(out.status.success());
    for sub in ["convert", "synth", "train", "render", "eval", "mesh"] {
        assert!(stdout(&out).contains(sub), "help lacks {sub}");
    }
    assert!(cli(&["train", "--help"]).status.success());
}

#[test]
fn usage_errors_exit_with_two() {
    let out = cli(&["train"]);
    assert_eq!(out.status.code(), Some(2));
    let first = stderr(&out).lines().next().unwrap().to_string();
    let json: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(json["error"], "usage");
    assert_eq!(cli(&["synth", "--out", "x", "--bits", "12"]).status.code(), Some(2));
}

#[test]
fn bad_config_keys_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"learnig_rate": 0.1, "batch_rays": "many"}"#).unwrap();
    let out = cli(&[
        "train",
        "--data",
        p(&dir.path().join("missing")),
        "--config",
        p(&config),
        "--out",
        p(&dir.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("learnig_rate") && err.contains("batch_rays"), "{err}");
    let json: serde_json::Value = serde_json::from_str(err.lines().next().unwrap()).unwrap();
    assert_eq!(json["error"], "config");
    assert!(!dir.path().join("run").exists());
}

#[test]
fn missing_dataset_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["eval", "--checkpoint", p(&dir.path().join("c.tfck")), "--data", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let json: serde_json::Value = serde_json::from_str(stderr(&out).lines().next().unwrap()).unwrap();
    assert_eq!(json["error"], "io");
}

#[test]
fn small_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"batch_rays": 64, "samples_per_ray": 8, "hidden_layers": 1, "hidden_width": 16,
            "thermal_width": 8, "position_frequencies": 3, "direction_frequencies": 1,
            "checkpoint_every": 5}"#,
    )
    .unwrap();

    let synth = cli(&["synth", "--views", "6", "--res", "12", "--bits", "8", "--out", p(&data)]);
    assert!(synth.status.success(), "{}", stderr(&synth));

    let train = cli(&[
        "--workers", "1", "train", "--data", p(&data), "--config", p(&config), "--out", p(&run),
        "--iterations", "10", "--log-every", "5",
    ]);
    assert!(train.status.success(), "{}", stderr(&train));
    let log = fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 10);
    let last: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert_eq!(last["step"], 10);
    let printed: Vec<serde_json::Value> =
        stdout(&train).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(printed.len(), 2);
    for key in ["step", "l_pix", "l_str", "l_tot", "elapsed_s"] {
        assert!(printed[1].get(key).is_some(), "log lacks {key}");
    }
    assert_eq!(printed[1]["l_tot"], last["l_tot"]);
    assert!(run.join("checkpoints/step_000005.tfck").exists());
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(saved["iterations"], 10);

    let ckpt = run.join("checkpoint.tfck");
    let frames = dir.path().join("frames");
    let render = cli(&[
        "render", "--checkpoint", p(&ckpt), "--data", p(&data), "--views", "test", "--samples", "8",
        "--pseudo-color", "--out", p(&frames),
    ]);
    assert!(render.status.success(), "{}", stderr(&render));
    assert!(fs::read_dir(&frames).unwrap().count() >= 1);

    let eval = cli(&["eval", "--checkpoint", p(&ckpt), "--data", p(&data), "--samples", "8"]);
    assert!(eval.status.success(), "{}", stderr(&eval));
    assert!(stdout(&eval).lines().next().unwrap().contains("psnr"));

    let mesh_path = dir.path().join("field.ply");
    let mesh = cli(&["mesh", "--checkpoint", p(&ckpt), "--res", "12", "--out", p(&mesh_path)]);
    assert!(mesh.status.success(), "{}", stderr(&mesh));
    assert!(fs::read_to_string(&mesh_path).unwrap().starts_with("ply\n"));
}
