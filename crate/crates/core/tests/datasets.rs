use std::collections::HashSet;

use propnli_core::datagen::{
    audit, bin_counts, generate_pairs, read_dataset, sample_formula, split_dataset, write_dataset, GenConfig,
};
use propnli_core::logic::relation_of_pair;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sample_seed42_matches_golden() {
    let golden = include_str!("golden/sample_seed42_k3.txt").trim();
    let f = sample_formula(&mut ChaCha8Rng::seed_from_u64(42), 3, 1.0 / 3.0);
    assert_eq!(f.to_string(), golden);
}

#[test]
fn generation_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.tsv");
    let config = GenConfig { per_bin_pairs: 3, max_bin: 3, ..GenConfig::default() };
    write_dataset(&generate_pairs(&config).unwrap(), &path).unwrap();
    let written = std::fs::read_to_string(&path).unwrap();
    assert_eq!(written, include_str!("golden/gen_seed42_per3_max3.tsv"));
}

#[test]
fn write_read_round_trip_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.tsv");
    let ex = generate_pairs(&GenConfig { per_bin_pairs: 40, ..GenConfig::default() }).unwrap();
    write_dataset(&ex, &path).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back, ex);
    assert!(audit(&back, 12).is_empty());
    for e in &back {
        assert_eq!(e.label, relation_of_pair(&e.premise, &e.hypothesis));
    }

    let empty = dir.path().join("empty.tsv");
    write_dataset(&[], &empty).unwrap();
    assert_eq!(std::fs::metadata(&empty).unwrap().len(), 0);
    assert!(read_dataset(&empty).unwrap().is_empty());
}

#[test]
fn default_dataset_shape() {
    let ex = generate_pairs(&GenConfig::default()).unwrap();
    let counts = bin_counts(&ex, 12);
    assert_eq!(counts[0], 36);
    assert!(counts[1..].iter().all(|&c| c == 1000));
    let distinct: HashSet<_> = ex.iter().map(|e| (&e.premise, &e.hypothesis)).collect();
    assert_eq!(distinct.len(), ex.len());

    let split = split_dataset(&ex, 0.8, 42);
    let train = bin_counts(&split.train, 12);
    for (b, (&t, &n)) in train.iter().zip(&counts).enumerate() {
        let frac = t as f64 / n as f64;
        assert!((t as f64 - 0.8 * n as f64).abs() <= 1.0, "bin {b}: {t}/{n} = {frac}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = GenConfig { per_bin_pairs: 25, ..GenConfig::default() };
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    write_dataset(&generate_pairs(&config).unwrap(), &a).unwrap();
    write_dataset(&generate_pairs(&config).unwrap(), &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
