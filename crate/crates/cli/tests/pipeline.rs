use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use radam_cli::store::StoreIndex;
use radam_cli::synth::{generate, write_dataset};
use radam_cli::{cmd_encode, cmd_eval, cmd_fit, CliError, Pooling, RunConfig};
use radam_core::classifier::ClassifierKind;
use radam_core::tensorio::{read_manifest, write_manifest, ManifestLine, Split};
use tempfile::TempDir;

/// 5 classes x 4 images, alternating train/test.
fn dataset() -> &'static Path {
    static DATA: OnceLock<TempDir> = OnceLock::new();
    DATA.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        write_dataset(&generate(4, 7), dir.path()).unwrap();
        dir
    })
    .path()
}

fn manifest() -> PathBuf {
    dataset().join("manifest.jsonl")
}

fn encode_config(store: &Path, pooling: Pooling) -> RunConfig {
    RunConfig {
        manifest_path: Some(manifest()),
        output_dir: store.to_path_buf(),
        pooling,
        threads: Some(2),
        ..RunConfig::default()
    }
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn encode_fit_eval_round_trip() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = encode_config(tmp.path(), Pooling::Radam);
    // two examples per class: at C = 1 the margin term still wins
    cfg.c = 100.0;
    let summary = cmd_encode(&cfg).unwrap();
    assert_eq!(summary.records, 20);
    // z = 8 + 16 + 32 + 64
    assert_eq!(summary.feature_dim, 120);

    let index = StoreIndex::load(tmp.path()).unwrap();
    assert_eq!(index.records.len(), 20);
    assert!(index.failures.is_empty());
    assert_eq!(index.m, 4);
    assert_eq!((index.lcg.a, index.lcg.b, index.lcg.c), (75, 74, 65537));

    let train = cmd_fit(&cfg).unwrap();
    assert_eq!(train.folds.len(), 1);
    assert_eq!(train.mean, 1.0);

    let report = cmd_eval(&cfg).unwrap();
    assert_eq!(report.classifier, ClassifierKind::Svm);
    assert_eq!(report.pooling, Pooling::Radam);
    assert!(report.mean >= 0.8, "{}", report.table());
    assert_eq!(report.std, 0.0);

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("model/report.json")).unwrap())
            .unwrap();
    let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys.len(), 5);
    for k in ["pooling", "classifier", "folds", "mean", "std"] {
        assert!(json.get(k).is_some(), "missing {k}");
    }
    assert_eq!(json["pooling"], "radam");
}

#[test]
fn gap_agg_matches_radam_length_and_gap_is_last_block() {
    let tmp = TempDir::new().unwrap();
    let agg = cmd_encode(&encode_config(&tmp.path().join("agg"), Pooling::GapAgg)).unwrap();
    let gap = cmd_encode(&encode_config(&tmp.path().join("gap"), Pooling::Gap)).unwrap();
    assert_eq!(agg.feature_dim, 120);
    assert_eq!(gap.feature_dim, 64);
}

#[test]
fn lda_sidecar_kind() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = encode_config(tmp.path(), Pooling::Radam);
    cmd_encode(&cfg).unwrap();
    cfg.classifier = ClassifierKind::Lda;
    cmd_fit(&cfg).unwrap();
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("model/model.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["kind"], "lda");
    assert_eq!(cmd_eval(&cfg).unwrap().classifier, ClassifierKind::Lda);
}

#[test]
fn encode_is_deterministic_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let mut a = encode_config(&tmp.path().join("a"), Pooling::Radam);
    a.threads = Some(1);
    let mut b = encode_config(&tmp.path().join("b"), Pooling::Radam);
    b.threads = Some(4);
    cmd_encode(&a).unwrap();
    cmd_encode(&b).unwrap();
    let first = read_tree(&a.output_dir);
    assert_eq!(first, read_tree(&b.output_dir));

    // rerunning in place overwrites identically
    cmd_encode(&a).unwrap();
    assert_eq!(first, read_tree(&a.output_dir));
}

#[test]
fn refit_writes_identical_model_bytes() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = encode_config(tmp.path(), Pooling::Radam);
    cmd_encode(&cfg).unwrap();
    for kind in [ClassifierKind::Svm, ClassifierKind::Lda] {
        cfg.classifier = kind;
        cfg.model_dir = Some(tmp.path().join("m1"));
        cmd_fit(&cfg).unwrap();
        cfg.model_dir = Some(tmp.path().join("m2"));
        cmd_fit(&cfg).unwrap();
        let one = read_tree(&tmp.path().join("m1"));
        assert!(one.iter().any(|(p, _)| p.ends_with("weights.radt")));
        assert_eq!(one, read_tree(&tmp.path().join("m2")), "{kind}");
    }
}

/// The same images reused under four folds with rotating split assignment.
fn folded_manifest(dir: &Path) -> PathBuf {
    let base = read_manifest(manifest()).unwrap();
    let mut lines = Vec::new();
    for fold in 1..=4u32 {
        for (i, r) in base.records.iter().enumerate() {
            let split = if (i as u32 / 5 + fold).is_multiple_of(2) {
                Split::Train
            } else {
                Split::Test
            };
            lines.push(ManifestLine {
                path: dataset().join(&r.path).to_string_lossy().into_owned(),
                label: r.label.clone(),
                split,
                fold: Some(fold),
            });
        }
    }
    let path = dir.join("folds.jsonl");
    write_manifest(&lines, &path).unwrap();
    path
}

#[test]
fn four_fold_report_has_four_rows() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = encode_config(&tmp.path().join("store"), Pooling::Radam);
    cfg.manifest_path = Some(folded_manifest(tmp.path()));
    let summary = cmd_encode(&cfg).unwrap();
    assert_eq!(summary.records, 80);
    assert_eq!(summary.unique, 20);

    cmd_fit(&cfg).unwrap();
    for f in 1..=4 {
        assert!(cfg
            .model_dir()
            .join(format!("fold_{f}/model.json"))
            .is_file());
    }
    let report = cmd_eval(&cfg).unwrap();
    let folds: Vec<u32> = report.folds.iter().map(|f| f.fold).collect();
    assert_eq!(folds, vec![1, 2, 3, 4]);
    let mean = report.folds.iter().map(|f| f.accuracy).sum::<f64>() / 4.0;
    assert!((report.mean - mean).abs() < 1e-12);
    assert_eq!(report.table().lines().count(), 6);
}

#[test]
fn eval_rejects_fold_mismatch() {
    let tmp = TempDir::new().unwrap();
    let store = tmp.path().join("store");
    // fit without folds, then re-encode the folded manifest into the same store
    let cfg = encode_config(&store, Pooling::Radam);
    cmd_encode(&cfg).unwrap();
    cmd_fit(&cfg).unwrap();
    let mut folded = cfg.clone();
    folded.manifest_path = Some(folded_manifest(tmp.path()));
    cmd_encode(&folded).unwrap();
    let err = cmd_eval(&folded).unwrap_err();
    assert!(matches!(err, CliError::Validation(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn fit_lists_missing_features() {
    let tmp = TempDir::new().unwrap();
    let cfg = encode_config(tmp.path(), Pooling::Gap);
    cmd_encode(&cfg).unwrap();
    fs::remove_file(tmp.path().join("features/00003.radt")).unwrap();
    fs::remove_file(tmp.path().join("features/00011.radt")).unwrap();
    let msg = cmd_fit(&cfg).unwrap_err().to_string();
    assert!(msg.contains("2 feature file(s) missing"), "{msg}");
    assert!(
        msg.contains("00003.radt") && msg.contains("00011.radt"),
        "{msg}"
    );
}

#[test]
fn broken_record_is_a_partial_failure() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    write_dataset(&generate(2, 3), &data).unwrap();
    fs::write(data.join("images/00004/block_2.radt"), b"RADT garbage").unwrap();

    let cfg = RunConfig {
        manifest_path: Some(data.join("manifest.jsonl")),
        output_dir: tmp.path().join("store"),
        ..RunConfig::default()
    };
    match cmd_encode(&cfg).unwrap_err() {
        e @ CliError::Partial {
            failed: 1,
            total: 10,
            ..
        } => assert_eq!(e.exit_code(), 2),
        e => panic!("unexpected {e}"),
    }
    let index = StoreIndex::load(&cfg.output_dir).unwrap();
    assert_eq!(index.records.len(), 9);
    assert_eq!(index.failures.len(), 1);
    assert_eq!(index.failures[0].index, 4);
    // the surviving records are still usable
    cmd_fit(&cfg).unwrap();
}

fn radam() -> Command {
    Command::new(env!("CARGO_BIN_EXE_radam"))
}

#[test]
fn binary_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let store = tmp.path().join("store");
    let ok = radam()
        .args(["encode", "--pooling", "gap_agg", "--manifest"])
        .arg(manifest())
        .arg("--out")
        .arg(&store)
        .env("RADAM_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));

    let fit = radam()
        .args(["fit", "--json", "--store"])
        .arg(&store)
        .output()
        .unwrap();
    assert_eq!(fit.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&fit.stdout).unwrap();
    assert_eq!(report["pooling"], "gap_agg");
    assert_eq!(report["classifier"], "svm");

    let bad = radam()
        .args(["encode", "--m", "0", "--manifest"])
        .arg(manifest())
        .arg("--out")
        .arg(&store)
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("--m must be at least 1"));

    let no_store = radam()
        .args(["eval", "--store"])
        .arg(tmp.path().join("nope"))
        .output()
        .unwrap();
    assert_eq!(no_store.status.code(), Some(1));
}

#[test]
fn selftest_binary_reports_lcg_values_and_catches_fault() {
    let good = radam().arg("selftest").output().unwrap();
    assert_eq!(good.status.code(), Some(0));
    let text = String::from_utf8(good.stdout).unwrap();
    assert!(text.contains("74, 5624, 28652"), "{text}");

    let bad = radam()
        .args(["selftest", "--inject-fault", "lcg-multiplier"])
        .output()
        .unwrap();
    assert_ne!(bad.status.code(), Some(0));
    let text = String::from_utf8(bad.stdout).unwrap();
    assert!(
        text.lines()
            .any(|l| l.starts_with("FAIL") && l.contains("lcg_first_states")),
        "{text}"
    );
}
