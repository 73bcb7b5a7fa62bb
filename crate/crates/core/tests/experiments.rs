use hitl_abc::experiments::{aggregate, read_runs_csv, write_outputs, AggregateRow};
use hitl_abc::{ExperimentSpec, Method, Preset};
use std::fs;
use std::path::Path;

fn spec(preset: Preset, overrides: &[&str]) -> ExperimentSpec {
    let mut s = preset.defaults();
    for o in overrides {
        s.apply_override(o).unwrap();
    }
    s
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("posteriors")] {
        let mut entries: Vec<_> = fs::read_dir(&sub)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        out.extend(entries.into_iter().map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        }));
    }
    out
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let s = spec(
        Preset::GaussianSensitivity,
        &[
            "replicates=2",
            "pi=1.0,0.8",
            "delta=0.06",
            "methods=hitl,random,ridge-all",
            "n=1000",
            "seed=3",
        ],
    );
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_outputs(&s, a.path()).unwrap();
    write_outputs(&s, b.path()).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.iter().any(|(n, _)| n == "runs.csv"));
    assert_eq!(fa.len(), 5 + 2 * (2 + 2 + 1));
    assert_eq!(fa, fb);
}

#[test]
fn aggregates_are_recomputable_from_runs_csv() {
    let s = spec(
        Preset::GaussianSensitivity,
        &[
            "replicates=3",
            "pi=0.95",
            "delta=0.02,0.1",
            "methods=hitl,linear-all",
            "samples=false",
        ],
    );
    let dir = tempfile::tempdir().unwrap();
    let result = write_outputs(&s, dir.path()).unwrap();
    assert!(!dir.path().join("posteriors").exists());
    let runs = read_runs_csv(&dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs, result.records);
    let stored: Vec<AggregateRow> =
        serde_json::from_slice(&fs::read(dir.path().join("aggregates.json")).unwrap()).unwrap();
    assert_eq!(aggregate(&runs), stored);
    assert_eq!(stored.len(), 3);
    assert!(stored.iter().all(|r| r.runs == 3));
}

#[test]
fn reliable_expert_always_finds_the_optimal_set() {
    let s = spec(
        Preset::GaussianSensitivity,
        &[
            "replicates=20",
            "pi=1.0",
            "delta=0.06",
            "methods=hitl",
            "seed=21",
        ],
    );
    let result = hitl_abc::experiments::run_experiment(&s, |_, _| Ok(())).unwrap();
    assert_eq!(result.records.len(), 20);
    let bad: Vec<_> = result
        .records
        .iter()
        .filter(|r| !r.optimal)
        .map(|r| r.gamma_hat.clone())
        .collect();
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn gandk_reference_artifact() {
    let s = spec(
        Preset::GAndKLowSim,
        &[
            "replicates=1",
            "n_sim=200",
            "methods=linear-all",
            "reference_n_sim=1000",
            "reference_epsilon=0.05",
            "n=500",
        ],
    );
    let dir = tempfile::tempdir().unwrap();
    let result = write_outputs(&s, dir.path()).unwrap();
    let reference = result.reference.unwrap();
    assert_eq!((reference.len(), reference.dim()), (500, 4));
    let text = fs::read_to_string(dir.path().join("reference.csv")).unwrap();
    assert!(text.starts_with("A,B,g,k\n"));
    assert_eq!(text.lines().count(), 501);
    let rec = &result.records[0];
    assert_eq!(rec.method, Method::LinearAll);
    assert_eq!(rec.kl_reference.as_ref().unwrap().len(), 4);
    let header = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert!(header
        .lines()
        .next()
        .unwrap()
        .ends_with("kl_A,kl_B,kl_g,kl_k"));
}
