use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn blockdyn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockdyn")).current_dir(dir).args(args).env("BLOCKDYN_THREADS", "2").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL: &str = "d = 12\nm = 16\ntheta = 0.1\neta = 0.2\nbatch_size = 16\nmax_steps = 120\nmetrics_every = 40\nsnapshot_every = 60\neval_n = 1000\ng_mu_samples = 10000\n";

fn small_cfg(dir: &Path) {
    fs::write(dir.join("small.cfg"), SMALL).unwrap();
}

#[test]
fn train_records_override_and_reruns_identically() {
    let t = tempfile::tempdir().unwrap();
    small_cfg(t.path());
    for out in ["a", "b"] {
        let o = blockdyn(t.path(), &["train", "--config", "small.cfg", "--override", "eta=0.05", "--output-dir", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let resolved = fs::read_to_string(t.path().join("a/run/config.resolved")).unwrap();
    assert!(resolved.contains("eta = 0.05"));
    assert!(resolved.contains("eta (override)"));
    let ma = fs::read(t.path().join("a/run/metrics.csv")).unwrap();
    let mb = fs::read(t.path().join("b/run/metrics.csv")).unwrap();
    assert_eq!(ma, mb);
    assert!(!t.path().join("a/run/run.incomplete").exists());
}

#[test]
fn seed_flag_changes_the_run() {
    let t = tempfile::tempdir().unwrap();
    small_cfg(t.path());
    for (out, seed) in [("s1", "1"), ("s2", "2")] {
        assert_eq!(code(&blockdyn(t.path(), &["train", "--config", "small.cfg", "--seed", seed, "--output-dir", out])), 0);
    }
    assert_ne!(fs::read(t.path().join("s1/run/metrics.csv")).unwrap(), fs::read(t.path().join("s2/run/metrics.csv")).unwrap());
}

#[test]
fn unknown_override_key_is_a_config_error_before_any_work() {
    let t = tempfile::tempdir().unwrap();
    small_cfg(t.path());
    let o = blockdyn(t.path(), &["train", "--config", "small.cfg", "--override", "etaa=0.1", "--output-dir", "out"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("etaa"));
    assert!(!t.path().join("out").exists());
}

#[test]
fn missing_config_file_is_a_config_error() {
    let t = tempfile::tempdir().unwrap();
    let o = blockdyn(t.path(), &["train", "--config", "nope.cfg"]);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.cfg"));
}

#[test]
fn verify_is_deterministic_and_writes_jsonl() {
    let t = tempfile::tempdir().unwrap();
    let args = ["verify", "--suite", "gaussian-lemmas", "--seed", "7", "--output-dir", "v"];
    let a = blockdyn(t.path(), &args);
    assert_eq!(code(&a), 0);
    let first = fs::read_to_string(t.path().join("v/verify_gaussian-lemmas_seed7.jsonl")).unwrap();
    let b = blockdyn(t.path(), &args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(first, fs::read_to_string(t.path().join("v/verify_gaussian-lemmas_seed7.jsonl")).unwrap());
    for line in first.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["verdict"], "pass");
        assert!(v["lemma_id"].is_string() && v["predicted"].is_array() && v["sigma_margin"].is_number());
    }
}

#[test]
fn verify_phase1a_default_neurons_pass() {
    let t = tempfile::tempdir().unwrap();
    let o = blockdyn(t.path(), &["verify", "--suite", "phase1a"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn verify_failure_exits_3() {
    let t = tempfile::tempdir().unwrap();
    let o = blockdyn(t.path(), &["verify", "--suite", "margin-asymptotics", "--margin-samples", "100000"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn unknown_suite_exits_1() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&blockdyn(t.path(), &["verify", "--suite", "nope"])), 1);
}

#[test]
fn report_and_plot() {
    let t = tempfile::tempdir().unwrap();
    small_cfg(t.path());
    assert_eq!(code(&blockdyn(t.path(), &["train", "--config", "small.cfg", "--output-dir", "o"])), 0);
    let p = blockdyn(t.path(), &["plot", "o/run"]);
    assert_eq!(code(&p), 0);
    assert!(t.path().join("o/run/blocks.svg").exists());
    let r = blockdyn(t.path(), &["report", "o/run"]);
    assert_eq!(code(&r), 0);
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text.contains("off-boundary accuracy (ε=0.3):"));
    assert!(text.contains("growth law"));
    assert!(text.contains("blocks.svg"));
    assert!(!text.contains("partial"));
}

#[test]
fn report_on_partial_run_is_flagged() {
    let t = tempfile::tempdir().unwrap();
    small_cfg(t.path());
    assert_eq!(code(&blockdyn(t.path(), &["train", "--config", "small.cfg", "--output-dir", "o"])), 0);
    let run = t.path().join("o/run");
    fs::remove_file(run.join("summary.json")).unwrap();
    let m = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let keep: Vec<&str> = m.lines().take(3).collect();
    fs::write(run.join("metrics.csv"), keep.join("\n") + "\n").unwrap();
    fs::write(run.join("run.incomplete"), "").unwrap();
    let r = blockdyn(t.path(), &["report", "o/run"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stdout).contains("partial"));
}

#[test]
fn report_on_empty_dir_exits_1() {
    let t = tempfile::tempdir().unwrap();
    fs::create_dir(t.path().join("empty")).unwrap();
    let o = blockdyn(t.path(), &["report", "empty"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("metrics.csv"));
}

#[test]
fn sweep_with_patch_file() {
    let t = tempfile::tempdir().unwrap();
    small_cfg(t.path());
    fs::write(t.path().join("p.txt"), "# contrasts\nclean: label.kind=xor\nnoisy: label.noise_rate=0.05\n").unwrap();
    let o = blockdyn(
        t.path(),
        &["sweep", "--config", "small.cfg", "--override", "m=24", "--patch-file", "p.txt", "--patch", "wide: m=32", "--output-dir", "sw"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(t.path().join("sw/sweep_summary.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.contains("noisy") && table.contains("wide"));
}

#[test]
fn sweep_rejects_unknown_patch_key() {
    let t = tempfile::tempdir().unwrap();
    small_cfg(t.path());
    let o = blockdyn(t.path(), &["sweep", "--config", "small.cfg", "--patch", "x: label.nosie_rate=0.1", "--output-dir", "sw"]);
    assert_eq!(code(&o), 1);
    assert!(!t.path().join("sw").exists());
}

#[test]
fn bad_thread_count_is_rejected() {
    let t = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_blockdyn"))
        .current_dir(t.path())
        .args(["verify", "--suite", "block-rotation"])
        .env("BLOCKDYN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}
