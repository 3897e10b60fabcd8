use std::collections::BTreeMap;
use std::path::PathBuf;

use proptest::prelude::*;

use selmean_cli::dataset::{ingest_csv, ingest_str, serialize, TrialDataset};
use selmean_cli::report::{estimate_command, SigmaPolicy};
use selmean_cli::CliError;

fn table2() -> TrialDataset {
    ingest_csv(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/table2.csv")).unwrap()
}

fn to_csv(rows: &[(u8, &str, f64)]) -> String {
    let mut s = String::from("stage,arm,value\n");
    for (stage, arm, v) in rows {
        s.push_str(&format!("{stage},{arm},{v}\n"));
    }
    s
}

#[test]
fn table2_transcription() {
    let d = table2();
    assert_eq!((d.stage1_arm1.len(), d.stage1_arm2.len(), d.stage2.len()), (40, 40, 26));
    let [a, b] = d.stage1_means();
    assert!((a - 3846.05).abs() < 1e-3);
    assert!((b - 3710.775).abs() < 1e-3);
    assert!((d.stage2_mean() - 3925.846).abs() < 1e-3);
    assert!(d.metadata.contains_key("source"));
}

#[test]
fn table2_estimates() {
    let d = table2();
    let pooled = estimate_command(&d, SigmaPolicy::PooledStage1).unwrap();
    assert!((pooled.sigma - 951.648).abs() < 1e-3);
    assert!(pooled.sigma_source.contains("pooled"));
    let matched = estimate_command(&d, SigmaPolicy::MatchUmvcue(3860.262)).unwrap();
    assert!((matched.sigma - 1025.854).abs() < 1e-3);
    let e = |r: &selmean_cli::report::EstimateReport, i: usize| r.estimates[i].value;
    assert!((e(&matched, 1) - 3860.262).abs() < 1e-6);
    for r in [&pooled, &matched] {
        assert!((e(r, 0) - 3877.484).abs() < 1e-3);
        assert_eq!(e(r, 3), r.stage1_means[0]);
    }
}

#[test]
fn ragged_arms_are_rejected() {
    let d = table2();
    let mut rows: Vec<(u8, &str, f64)> = Vec::new();
    rows.extend(d.stage1_arm1.iter().map(|&v| (1, "1", v)));
    rows.extend(d.stage1_arm2.iter().take(39).map(|&v| (1, "2", v)));
    rows.extend(d.stage2.iter().map(|&v| (2, "S", v)));
    let e = ingest_str(&to_csv(&rows)).unwrap_err();
    assert!(matches!(e, CliError::RaggedArms { arm1: 40, arm2: 39 }), "{e}");
    assert!(e.to_string().contains("40") && e.to_string().contains("39"));
}

#[test]
fn each_failure_has_its_own_message() {
    let both = to_csv(&[(1, "1", 2.0), (1, "2", 1.0), (2, "1", 3.0), (2, "2", 4.0)]);
    let bad_number = "stage,arm,value\n1,1,12.5\n1,2,abc\n2,S,3\n";
    let ragged = to_csv(&[(1, "1", 2.0), (1, "1", 2.0), (1, "2", 1.0), (2, "S", 3.0)]);
    let messages: Vec<String> =
        [both.as_str(), bad_number, ragged.as_str()].iter().map(|t| ingest_str(t).unwrap_err().to_string()).collect();
    assert!(messages[0].contains("both arms"), "{}", messages[0]);
    assert!(messages[1].contains("`abc`") && messages[1].contains("line 3"), "{}", messages[1]);
    assert!(messages[2].contains("ragged"), "{}", messages[2]);
}

#[test]
fn single_subject_cells() {
    let d = ingest_str(&to_csv(&[(1, "1", 2.0), (1, "2", 1.0), (2, "S", 3.0)])).unwrap();
    assert_eq!((d.n1(), d.n2()), (1, 1));
    let r = estimate_command(&d, SigmaPolicy::Fixed(0.7)).unwrap();
    assert!(r.estimates.iter().all(|e| e.value.is_finite()));
}

fn value() -> impl Strategy<Value = f64> + Clone {
    prop_oneof![
        -1e6f64..1e6,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        (-1000i32..1000).prop_map(|i| i as f64 / 8.0),
    ]
}

fn dataset_of<S: Strategy<Value = f64> + Clone>(value: S) -> impl Strategy<Value = TrialDataset> {
    (1usize..30, 1usize..30).prop_flat_map(move |(n1, n2)| {
        (
            prop::collection::vec(value.clone(), n1),
            prop::collection::vec(value.clone(), n1),
            prop::collection::vec(value.clone(), n2),
            prop::collection::btree_map("[a-z][a-z0-9_]{0,8}", "[A-Za-z0-9]([A-Za-z0-9 ,.]{0,20}[A-Za-z0-9])?", 0..4),
        )
            .prop_map(|(a, b, s, metadata): (_, _, _, BTreeMap<String, String>)| TrialDataset {
                stage1_arm1: a,
                stage1_arm2: b,
                stage2: s,
                metadata,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn serialize_then_ingest_is_identity(d in dataset_of(value())) {
        let text = serialize(&d).unwrap();
        let back = ingest_str(&text).unwrap();
        prop_assert_eq!(back.stage1_arm1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        d.stage1_arm1.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back, d);
    }

    #[test]
    fn estimates_ignore_arm_labels(d in dataset_of(-1e4f64..1e4), sigma in 0.1f64..50.0) {
        let [a, b] = d.stage1_means();
        prop_assume!(a != b);
        let r = estimate_command(&d, SigmaPolicy::Fixed(sigma)).unwrap();
        let swapped = estimate_command(&d.relabelled(), SigmaPolicy::Fixed(sigma)).unwrap();
        for (x, y) in r.estimates.iter().zip(&swapped.estimates) {
            prop_assert_eq!(x.value.to_bits(), y.value.to_bits());
        }
        prop_assert_eq!(r.selected_arm, 3 - swapped.selected_arm);
    }
}
