use std::path::PathBuf;

use proptest::prelude::*;

use xaipipe::data::{
    generate_synthetic, load_csv, one_hot_encode, split_indices, write_csv, ColumnKind, Dataset, RuleSpec, TaskKind,
};

fn rules_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../rules")
}

/// Direct evaluation of a conjunction of closed intervals.
fn oracle_label(spec: &RuleSpec, row: &[f64]) -> f64 {
    let hit = spec
        .predicates
        .iter()
        .all(|p| p.lower <= row[p.feature_index] && row[p.feature_index] <= p.upper);
    if hit { 1.0 } else { 0.0 }
}

#[test]
fn shipped_rule_files_match_the_built_in_sets() {
    let a = RuleSpec::from_file(rules_dir().join("two_feature_box.rules")).unwrap();
    assert_eq!(a, RuleSpec::two_feature_box());
    let b = RuleSpec::from_file(rules_dir().join("six_feature_noise.rules")).unwrap();
    assert_eq!(b, RuleSpec::six_feature_noise());
}

#[test]
fn rule_examples() {
    let box_rule = RuleSpec::two_feature_box();
    let mut row = vec![0.0; 17];
    row[2] = 0.8;
    row[5] = 0.3;
    assert_eq!(box_rule.label(&row), 1);
    row[5] = 0.35;
    assert_eq!(box_rule.label(&row), 1, "bounds are closed");

    let noise = RuleSpec::six_feature_noise();
    assert_eq!(noise.label(&[0.2; 100]), 0);
    let ds = generate_synthetic(&noise, 2000, 0).unwrap();
    assert_eq!((ds.n_samples(), ds.n_features()), (2000, 100));
}

#[test]
fn malformed_rule_files_name_the_line() {
    let e = RuleSpec::parse("n_features: 3\nF1, 0.1, 0.2\nF2, oops, 1\n").unwrap_err();
    assert!(e.to_string().contains("line 3"), "{e}");
    assert!(RuleSpec::parse("F1, 0.1, 0.2\n").is_err());
    assert!(RuleSpec::parse("n_features: 2\nF3, 0.1, 0.2\n").is_err());
}

#[test]
fn categorical_csv_is_encoded_one_column_per_category() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    std::fs::write(&p, "age,colour,size,y\n30,a,S,yes\n40,b,M,no\n50,c,L,yes\n60,b,S,no\n").unwrap();
    let ds = load_csv(&p, "y", TaskKind::Classification).unwrap();
    assert_eq!(ds.class_labels, ["yes", "no"]);
    assert!(matches!(ds.columns[1].kind, ColumnKind::Categorical));
    let enc = one_hot_encode(&ds, &["colour", "size"]).unwrap();
    assert_eq!(enc.n_features(), 1 + 3 + 3);
    let b = enc.column_index("colour=b").unwrap();
    assert_eq!(enc.features.row(1).slice(ndarray::s![b - 1..b + 2]).to_vec(), [0.0, 1.0, 0.0]);
    assert_eq!(one_hot_encode(&ds, &[]).unwrap(), ds);
}

fn synthetic(n: usize, seed: u64) -> Dataset {
    generate_synthetic(&RuleSpec::two_feature_box(), n, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn labels_match_direct_rule_evaluation(seed in any::<u64>()) {
        let spec = RuleSpec::six_feature_noise();
        let ds = generate_synthetic(&spec, 200, seed).unwrap();
        for (row, &y) in ds.features.rows().into_iter().zip(&ds.target) {
            prop_assert_eq!(y, oracle_label(&spec, row.as_slice().unwrap()));
        }
    }

    #[test]
    fn csv_round_trip_is_value_identical(seed in any::<u64>()) {
        let ds = synthetic(30, seed);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_csv(&ds, &p).unwrap();
        let back = load_csv(&p, "class", TaskKind::Classification).unwrap();
        prop_assert_eq!(&back.features, &ds.features);
        prop_assert_eq!(&back.target, &ds.target);
        prop_assert_eq!(back.feature_names(), ds.feature_names());
    }

    #[test]
    fn splits_are_deterministic_partitions(seed in any::<u64>(), n in 10usize..200, stratify in any::<bool>()) {
        let ds = synthetic(n, seed);
        let (train, test) = split_indices(&ds, 0.2, seed, stratify).unwrap();
        prop_assert_eq!(split_indices(&ds, 0.2, seed, stratify).unwrap(), (train.clone(), test.clone()));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn one_hot_rows_have_a_single_one(codes in prop::collection::vec(0usize..4, 2..40)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let mut text = String::from("c,x,y\n");
        for (i, c) in codes.iter().enumerate() {
            text.push_str(&format!("k{c},{i},{}\n", i % 2));
        }
        std::fs::write(&p, text).unwrap();
        let ds = load_csv(&p, "y", TaskKind::Classification).unwrap();
        let enc = one_hot_encode(&ds, &["c"]).unwrap();
        let derived: Vec<usize> = enc
            .feature_names()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with("c="))
            .map(|(j, _)| j)
            .collect();
        for row in enc.features.rows() {
            let ones = derived.iter().filter(|&&j| row[j] == 1.0).count();
            let zeros = derived.iter().filter(|&&j| row[j] == 0.0).count();
            prop_assert_eq!((ones, zeros), (1, derived.len() - 1));
        }
    }
}
