use hitl_abc::{Preset, SessionConfig, SessionStatus, SessionStore};
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hitl-abc"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn batch_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "batch",
            "--preset",
            "gaussian-sensitivity",
            "--seed",
            "2",
            "--out-dir",
        ])
        .arg(dir.path())
        .args([
            "--override",
            "replicates=1",
            "--override",
            "pi=1.0",
            "--override",
            "delta=0.06",
            "--override",
            "n=500",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let runs = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert!(runs.starts_with(
        "preset,n_sim,reliability,delta,zeta,replicate,method,feedbacks,gamma_hat,optimal,"
    ));
    assert_eq!(runs.lines().count(), 2);
    assert!(dir.path().join("aggregates.json").exists());
}

#[test]
fn bad_override_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["batch", "--preset", "gaussian-sensitivity", "--out-dir"])
        .arg(dir.path())
        .args(["--override", "colour=blue"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn replay_reproduces_saved_session() {
    let sessions = tempfile::tempdir().unwrap();
    let store = SessionStore::open(sessions.path()).unwrap();
    let id = store
        .create(SessionConfig::from_preset(
            Preset::GaussianSensitivity,
            0.0,
            4,
        ))
        .unwrap()
        .id;
    loop {
        let s = store.summary(&id).unwrap();
        if s.status != SessionStatus::AwaitingFeedback {
            break;
        }
        let j = s.pending_statistic.unwrap();
        store.post_feedback(&id, s.iteration, j, j < 2).unwrap();
    }
    let expected = store.export(&id).unwrap().to_csv().unwrap();

    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .arg("replay")
        .arg("--session")
        .arg(sessions.path().join(format!("{id}.json")))
        .arg("--out-dir")
        .arg(out.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        std::fs::read_to_string(out.path().join("posterior.csv")).unwrap(),
        expected
    );
    assert!(out.path().join("report.json").exists());
}
