use std::path::Path;
use std::process::{Command, Output};

fn factqg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factqg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = factqg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn toy_config(dir: &Path, output_dir: &str) -> String {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy/experiment.conf");
    let text = std::fs::read_to_string(shipped)
        .unwrap()
        .replace("output_dir = out", &format!("output_dir = {output_dir}"));
    let path = dir.join(format!("{output_dir}.conf"));
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn staged_run_matches_one_shot_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let stdout = ok(&["make-toy-corpus", "--out", d, "--predicates", "6", "--samples", "50", "--seed", "3"]);
    assert!(stdout.contains("300 questions"), "{stdout}");

    let staged = toy_config(dir.path(), "staged");
    let c = ["--config", staged.as_str()];
    assert!(ok(&[&["prepare-contexts"][..], &c].concat()).contains("300 samples"));
    ok(&[&["train-transe"][..], &c].concat());
    assert!(ok(&[&["make-folds"][..], &c].concat()).contains("fold 0:"));
    for system in ["r_transe_copy", "model_copy"] {
        let target = ["--fold", "0", "--system", system];
        ok(&[&["train"][..], &c, &target].concat());
        ok(&[&["generate"][..], &c, &target].concat());
    }
    let report = ok(&[&["evaluate"][..], &c].concat());
    assert_eq!(report.lines().count(), 3, "{report}");
    assert!(report.starts_with("system\tBLEU-1"));

    let oneshot = toy_config(dir.path(), "oneshot");
    assert_eq!(ok(&["run-experiment", "--config", &oneshot]), report);
    let read = |sub: &str, f: &str| std::fs::read(dir.path().join(sub).join(f)).unwrap();
    assert_eq!(read("staged", "report.tsv"), read("oneshot", "report.tsv"));
    assert_eq!(read("staged", "fold0/model_copy.ckpt"), read("oneshot", "fold0/model_copy.ckpt"));

    ok(&["export-human-eval", "--config", &staged, "--fold", "0", "--rows", "5"]);
    let sheet = String::from_utf8(read("staged", "human_eval.fold0.tsv")).unwrap();
    assert_eq!(sheet.lines().filter(|l| !l.starts_with('#')).count(), 6, "{sheet}");
    let key = String::from_utf8(read("staged", "human_eval.fold0.key.tsv")).unwrap();
    assert!(key.contains("model_copy") && key.contains("r_transe_copy"));
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.conf");
    let out = factqg(&["prepare-contexts", "--config", missing.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error:") && err.contains("none.conf"), "{err}");

    let conf = toy_config(dir.path(), "out");
    let out = factqg(&["train-transe", "--config", &conf]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("kb.tsv"));

    let out = factqg(&["train", "--config", &conf, "--fold", "0", "--system", "nonsense"]);
    assert!(!out.status.success());
}
