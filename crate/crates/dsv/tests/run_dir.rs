use std::fs;
use std::path::Path;

use dsv::io::{load_run, save_run, EmbeddingFormat, MANIFEST};
use dsv::{CandidateModel, DsvError, EmbeddingSet, SelectionRun};
use proptest::prelude::*;

fn set(rows: &[&[f64]]) -> EmbeddingSet {
    EmbeddingSet::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
}

fn minimal() -> SelectionRun {
    SelectionRun {
        task_id: "tiny".into(),
        trn: set(&[&[0.0, 0.0], &[1.0, 0.0]]),
        test: set(&[&[0.5, 0.1], &[3.0, 0.0]]),
        labels: Some(vec![false, true]),
        candidates: vec![CandidateModel::new(0.25, set(&[&[4.0, 0.0], &[5.0, 0.0]]))],
    }
}

fn rewrite(path: &Path, f: impl FnOnce(String) -> String) {
    let text = fs::read_to_string(path).unwrap();
    fs::write(path, f(text)).unwrap();
}

#[test]
fn minimal_directory_loads() {
    let dir = tempfile::tempdir().unwrap();
    save_run(&minimal(), dir.path(), EmbeddingFormat::Csv).unwrap();
    let run = load_run(dir.path()).unwrap();
    assert_eq!(run.candidates.len(), 1);
    assert_eq!(run, minimal());
}

#[test]
fn short_labels_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    save_run(&minimal(), dir.path(), EmbeddingFormat::Csv).unwrap();
    fs::write(dir.path().join("labels.txt"), "0\n").unwrap();
    let err = load_run(dir.path()).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("labels.txt"), "{err}");
}

#[test]
fn ragged_row_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    save_run(&minimal(), dir.path(), EmbeddingFormat::Csv).unwrap();
    rewrite(&dir.path().join("test.csv"), |t| t + "1.0\n");
    match load_run(dir.path()).unwrap_err() {
        DsvError::Parse { path, line, .. } => {
            assert!(path.ends_with("test.csv"));
            assert_eq!(line, 3);
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn non_finite_value_rejected() {
    let dir = tempfile::tempdir().unwrap();
    save_run(&minimal(), dir.path(), EmbeddingFormat::Csv).unwrap();
    fs::write(dir.path().join("trn.csv"), "0,0\nNaN,1\n").unwrap();
    let err = load_run(dir.path()).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("trn.csv"), "{err}");
}

#[test]
fn missing_file_and_unknown_key() {
    let dir = tempfile::tempdir().unwrap();
    save_run(&minimal(), dir.path(), EmbeddingFormat::Csv).unwrap();
    fs::remove_file(dir.path().join("test.csv")).unwrap();
    let err = load_run(dir.path()).unwrap_err();
    assert!(matches!(err, DsvError::Io { .. }), "{err}");

    save_run(&minimal(), dir.path(), EmbeddingFormat::Csv).unwrap();
    rewrite(&dir.path().join(MANIFEST), |t| t + "colour = blue\n");
    assert!(matches!(load_run(dir.path()).unwrap_err(), DsvError::Parse { .. }));
}

#[test]
fn dimension_mismatch_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    save_run(&minimal(), dir.path(), EmbeddingFormat::Csv).unwrap();
    rewrite(&dir.path().join(MANIFEST), |t| t.replace("dim = 2", "dim = 3"));
    assert!(load_run(dir.path()).unwrap_err().is_validation());
}

fn arb_set(n: usize, dim: usize) -> impl Strategy<Value = EmbeddingSet> {
    prop::collection::vec(-1e6f64..1e6, n * dim).prop_map(move |v| EmbeddingSet::from_flat(v, dim).unwrap())
}

fn arb_run() -> impl Strategy<Value = SelectionRun> {
    (1usize..5, 1usize..6, 2usize..6, 1usize..4, any::<bool>()).prop_flat_map(|(dim, n_trn, n_test, k, labeled)| {
        let hps = prop::collection::btree_set(1u32..10_000, k)
            .prop_map(|s| s.into_iter().map(|v| v as f64 / 7.0).collect::<Vec<_>>());
        (
            arb_set(n_trn, dim),
            arb_set(n_test, dim),
            prop::collection::vec(arb_set(n_trn, dim), k),
            prop::collection::vec(prop::option::of(arb_set(n_test, dim)), k),
            prop::collection::vec(prop::option::of(prop::collection::vec(-1e3f64..1e3, n_test)), k),
            hps,
        )
            .prop_map(move |(trn, test, augs, tests, scores, hps)| {
                let mut labels = vec![false; n_test];
                labels[0] = true;
                SelectionRun {
                    task_id: "prop".into(),
                    trn,
                    test,
                    labels: labeled.then_some(labels),
                    candidates: augs
                        .into_iter()
                        .zip(tests)
                        .zip(scores)
                        .zip(hps)
                        .map(|(((aug, test), scores), hp)| CandidateModel {
                            hp_value: hp,
                            aug,
                            trn: None,
                            test,
                            scores,
                        })
                        .collect(),
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn save_then_load_is_identity(run in arb_run(), binary in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let format = if binary { EmbeddingFormat::Binary } else { EmbeddingFormat::Csv };
        save_run(&run, dir.path(), format).unwrap();
        let back = load_run(dir.path()).unwrap();
        prop_assert_eq!(back, run);
    }

    #[test]
    fn candidates_come_back_sorted(run in arb_run()) {
        let mut shuffled = run.clone();
        shuffled.candidates.reverse();
        let dir = tempfile::tempdir().unwrap();
        save_run(&shuffled, dir.path(), EmbeddingFormat::Csv).unwrap();
        let back = load_run(dir.path()).unwrap();
        prop_assert!(back.hp_grid().windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(back, run);
    }
}
