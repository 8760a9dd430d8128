use std::path::Path;
use std::process::{Command, Output};

fn sem_a2c(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sem-a2c"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Untrained checkpoint on a small map, written by `train --steps 0`.
fn untrained(dir: &Path) -> std::path::PathBuf {
    let o = sem_a2c(&["train", "--steps", "0", "--map", "6", "--out", "run"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("run/checkpoint.bin")
}

#[test]
fn zero_step_training_writes_a_checkpoint_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained(dir.path());
    assert!(ckpt.is_file());
    assert!(dir.path().join("run/train_log.jsonl").is_file());
}

#[test]
fn zero_run_evaluation_prints_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained(dir.path());
    let o = sem_a2c(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--runs", "0"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with("task,appearance,runs,n,successes,timeouts,censored,success_rate,mean_steps"));
}

#[test]
fn evaluation_writes_csv_and_honours_the_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained(dir.path());
    let c = ckpt.to_str().unwrap();
    let run = |seed: &str, out: &str| {
        let o = sem_a2c(&["eval", "--checkpoint", c, "--runs", "4", "--seed", seed, "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(dir.path().join(out)).unwrap()
    };
    let a = run("1", "a.csv");
    assert_eq!(a, run("1", "b.csv"));
    assert_ne!(a, run("2", "c.csv"));
}

#[test]
fn heatmap_writes_both_grids() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained(dir.path());
    let o = sem_a2c(&["heatmap", "--checkpoint", ckpt.to_str().unwrap(), "--runs", "2", "--out", "hm"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["before.csv", "before.pgm", "after.csv", "after.pgm"] {
        assert!(dir.path().join("hm").join(f).is_file(), "{f}");
    }
}

#[test]
fn gradient_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = sem_a2c(&["grad-check"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn unknown_config_key_lists_valid_keys() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"gama": 0.9}"#).unwrap();
    let o = sem_a2c(&["train", "--config", "c.json", "--steps", "0"], dir.path());
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("gama") && err.contains("gamma") && err.contains("map_size"), "{err}");
}

#[test]
fn missing_checkpoint_fails_with_a_file_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sem_a2c(&["eval", "--checkpoint", "nope.bin", "--runs", "1"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nope.bin"), "{}", stderr(&o));
}

#[test]
fn unknown_model_name_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = sem_a2c(&["train", "--steps", "0", "--model", "transformer"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("transformer"));
}
