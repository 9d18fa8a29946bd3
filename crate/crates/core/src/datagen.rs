//! Random sentence pairs, complexity bins, train/test splits and the TSV
//! dataset format.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`), seeded from a `u64`.
//! Each bin draws from its own ChaCha stream (the stream id is the bin
//! number), so bins can be generated in any order or in parallel and the
//! output is the same.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::logic::{relation_of_pair, BinOp, Formula, Relation, NUM_VARIABLES};

/// Highest bin the default generator fills.
pub const MAX_BIN: usize = 12;

/// Consecutive duplicate draws after which a bin counts as exhausted.
const DEDUPE_PATIENCE: usize = 20_000;

/// Stream offset separating split shuffles from generation streams.
const SPLIT_STREAM: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bin {bin}: only {found} distinct pairs found, {wanted} requested")]
    GenerationExhausted { bin: usize, found: usize, wanted: usize },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}: {content:?}")]
    Parse { line: usize, message: String, content: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// What to do when deduplication runs out of distinct pairs in a bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exhaustion {
    /// Fail with [`DataError::GenerationExhausted`].
    Fail,
    /// Keep every distinct pair that exists and move on.
    Cap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub per_bin_pairs: usize,
    pub max_bin: usize,
    pub negation_probability: f64,
    pub dedupe: bool,
    pub on_exhausted: Exhaustion,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 42,
            per_bin_pairs: 1000,
            max_bin: MAX_BIN,
            negation_probability: 1.0 / 3.0,
            dedupe: true,
            on_exhausted: Exhaustion::Cap,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.per_bin_pairs == 0 {
            return Err(DataError::InvalidConfig("per_bin_pairs must be positive".into()));
        }
        if !(self.negation_probability > 0.0 && self.negation_probability < 1.0) {
            return Err(DataError::InvalidConfig(format!(
                "negation_probability {} not in (0, 1)",
                self.negation_probability
            )));
        }
        if self.max_bin > MAX_BIN {
            return Err(DataError::InvalidConfig(format!("max_bin {} exceeds {MAX_BIN}", self.max_bin)));
        }
        Ok(())
    }
}

/// A labeled premise/hypothesis pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Example {
    pub premise: Formula,
    pub hypothesis: Formula,
    pub label: Relation,
    pub bin: usize,
}

impl Example {
    /// Labels the pair with the oracle.
    pub fn new(premise: Formula, hypothesis: Formula) -> Self {
        let label = relation_of_pair(&premise, &hypothesis);
        Self::with_label(premise, hypothesis, label)
    }

    /// Keeps a given label, e.g. one read back from disk.
    pub fn with_label(premise: Formula, hypothesis: Formula, label: Relation) -> Self {
        let bin = premise.connective_count().max(hypothesis.connective_count());
        Example { premise, hypothesis, label, bin }
    }

    pub fn to_tsv_line(&self) -> String {
        format!("{}\t{}\t{}", self.label, self.premise, self.hypothesis)
    }
}

/// Samples a formula with exactly `connectives` connectives.
pub fn sample_formula<R: Rng + ?Sized>(rng: &mut R, connectives: usize, negation_probability: f64) -> Formula {
    if connectives == 0 {
        return Formula::Var(rng.gen_range(1..=NUM_VARIABLES));
    }
    let rest = connectives - 1;
    if rng.gen_bool(negation_probability) {
        return Formula::not(sample_formula(rng, rest, negation_probability));
    }
    let op = if rng.gen_bool(0.5) { BinOp::And } else { BinOp::Or };
    let left = rng.gen_range(0..=rest);
    Formula::Bin(
        op,
        Box::new(sample_formula(rng, left, negation_probability)),
        Box::new(sample_formula(rng, rest - left, negation_probability)),
    )
}

/// RNG for one bin of generation.
pub fn bin_rng(seed: u64, bin: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(bin as u64);
    rng
}

/// One pair from bin `bin`: one side (chosen by coin flip) has exactly
/// `bin` connectives, the other a count uniform in `0..=bin`.
pub fn sample_pair<R: Rng + ?Sized>(rng: &mut R, bin: usize, negation_probability: f64) -> Example {
    let forced_premise = rng.gen_bool(0.5);
    let other = rng.gen_range(0..=bin);
    let (p, h) = if forced_premise { (bin, other) } else { (other, bin) };
    let premise = sample_formula(rng, p, negation_probability);
    let hypothesis = sample_formula(rng, h, negation_probability);
    Example::new(premise, hypothesis)
}

fn generate_bin(config: &GenConfig, bin: usize) -> Result<Vec<Example>, DataError> {
    let mut rng = bin_rng(config.seed, bin);
    let mut out = Vec::with_capacity(config.per_bin_pairs);
    let mut seen = HashSet::new();
    let mut misses = 0;
    while out.len() < config.per_bin_pairs {
        let ex = sample_pair(&mut rng, bin, config.negation_probability);
        if config.dedupe && !seen.insert((ex.premise.clone(), ex.hypothesis.clone())) {
            misses += 1;
            if misses >= DEDUPE_PATIENCE {
                return match config.on_exhausted {
                    Exhaustion::Cap => Ok(out),
                    Exhaustion::Fail => {
                        Err(DataError::GenerationExhausted { bin, found: out.len(), wanted: config.per_bin_pairs })
                    }
                };
            }
            continue;
        }
        misses = 0;
        out.push(ex);
    }
    Ok(out)
}

/// Examples for every bin `0..=max_bin`, bins in ascending order.
pub fn generate_pairs(config: &GenConfig) -> Result<Vec<Example>, DataError> {
    config.validate()?;
    let mut all = Vec::with_capacity(config.per_bin_pairs * (config.max_bin + 1));
    for bin in 0..=config.max_bin {
        all.extend(generate_bin(config, bin)?);
    }
    Ok(all)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub split_fraction: f64,
    pub seed: u64,
}

/// Train-side count for a bin of `n` examples.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction) + 1e-9).floor() as usize
}

/// Shuffles each bin with its own seeded stream and cuts it at `fraction`
/// (train side rounded down). Output is grouped by ascending bin.
pub fn split_dataset(examples: &[Example], fraction: f64, seed: u64) -> DatasetSplit {
    assert!(fraction > 0.0 && fraction < 1.0, "split fraction {fraction} not in (0, 1)");
    let max_bin = examples.iter().map(|e| e.bin).max().unwrap_or(0);
    let mut by_bin: Vec<Vec<Example>> = vec![Vec::new(); max_bin + 1];
    for ex in examples {
        by_bin[ex.bin].push(ex.clone());
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (bin, mut group) in by_bin.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SPLIT_STREAM + bin as u64);
        group.shuffle(&mut rng);
        let cut = train_count(group.len(), fraction);
        let rest = group.split_off(cut);
        train.extend(group);
        test.extend(rest);
    }
    DatasetSplit { train, test, split_fraction: fraction, seed }
}

/// Train-side examples with `bin <= cutoff`.
pub fn training_subset(split: &DatasetSplit, cutoff: usize) -> Vec<Example> {
    split.train.iter().filter(|e| e.bin <= cutoff).cloned().collect()
}

pub fn write_dataset_to<W: Write>(examples: &[Example], mut out: W) -> io::Result<()> {
    for ex in examples {
        writeln!(out, "{}", ex.to_tsv_line())?;
    }
    out.flush()
}

pub fn write_dataset(examples: &[Example], path: impl AsRef<Path>) -> Result<(), DataError> {
    let file = fs::File::create(path)?;
    write_dataset_to(examples, BufWriter::new(file))?;
    Ok(())
}

/// Parses one TSV line. `line` is 1-based and only used for errors.
pub fn parse_tsv_line(text: &str, line: usize) -> Result<Example, DataError> {
    let err = |message: String| DataError::Parse { line, message, content: text.to_owned() };
    let text = text.strip_suffix('\r').unwrap_or(text);
    let mut fields = text.split('\t');
    let (Some(label), Some(premise), Some(hypothesis), None) =
        (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(err("expected 3 tab-separated fields".into()));
    };
    let label = Relation::from_label(label).ok_or_else(|| err(format!("unknown label {label:?}")))?;
    let premise: Formula = premise.parse().map_err(|e| err(format!("premise: {e}")))?;
    let hypothesis: Formula = hypothesis.parse().map_err(|e| err(format!("hypothesis: {e}")))?;
    Ok(Example::with_label(premise, hypothesis, label))
}

pub fn read_dataset_from<R: BufRead>(input: R) -> Result<Vec<Example>, DataError> {
    input.lines().enumerate().map(|(i, line)| parse_tsv_line(&line?, i + 1)).collect()
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Example>, DataError> {
    read_dataset_from(BufReader::new(fs::File::open(path)?))
}

/// Counts per relation, indexed by [`Relation::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RelationHistogram(pub [usize; 7]);

impl RelationHistogram {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn count(&self, r: Relation) -> usize {
        self.0[r.index()]
    }

    pub fn fraction(&self, r: Relation) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.count(r) as f64 / n as f64,
        }
    }

    /// Most frequent relation; ties go to the lowest canonical index.
    pub fn majority(&self) -> Relation {
        let mut best = Relation::Equivalence;
        for r in Relation::ALL {
            if self.count(r) > self.count(best) {
                best = r;
            }
        }
        best
    }
}

impl fmt::Display for RelationHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in Relation::ALL.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}:{}", r.label(), self.count(*r))?;
        }
        Ok(())
    }
}

pub fn class_distribution<'a>(examples: impl IntoIterator<Item = &'a Example>) -> RelationHistogram {
    let mut h = RelationHistogram::default();
    for ex in examples {
        h.0[ex.label.index()] += 1;
    }
    h
}

/// Number of examples per bin, `0..=max_bin`.
pub fn bin_counts<'a>(examples: impl IntoIterator<Item = &'a Example>, max_bin: usize) -> Vec<usize> {
    let mut counts = vec![0; max_bin + 1];
    for ex in examples {
        if ex.bin <= max_bin {
            counts[ex.bin] += 1;
        }
    }
    counts
}

/// A disagreement found by [`audit`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditFailure {
    /// 1-based position in the audited list.
    pub line: usize,
    pub message: String,
}

/// Recomputes every label with the oracle and checks bin bounds.
pub fn audit(examples: &[Example], max_bin: usize) -> Vec<AuditFailure> {
    let mut failures = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let oracle = relation_of_pair(&ex.premise, &ex.hypothesis);
        if oracle != ex.label {
            failures.push(AuditFailure {
                line: i + 1,
                message: format!("stored label {} but oracle says {}", ex.label, oracle),
            });
        }
        let bin = ex.premise.connective_count().max(ex.hypothesis.connective_count());
        if bin != ex.bin {
            failures
                .push(AuditFailure { line: i + 1, message: format!("bin {} but connective count is {}", ex.bin, bin) });
        }
        if bin > max_bin {
            failures.push(AuditFailure { line: i + 1, message: format!("bin {bin} exceeds maximum {max_bin}") });
        }
    }
    failures
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(per_bin: usize, max_bin: usize) -> GenConfig {
        GenConfig { per_bin_pairs: per_bin, max_bin, ..GenConfig::default() }
    }

    #[test]
    fn sample_formula_has_requested_size() {
        let mut rng = bin_rng(7, 0);
        for k in 0..=12 {
            for _ in 0..50 {
                assert_eq!(sample_formula(&mut rng, k, 1.0 / 3.0).connective_count(), k);
            }
        }
    }

    #[test]
    fn sample_formula_small_cases() {
        let mut rng = bin_rng(1, 0);
        for _ in 0..100 {
            assert!(matches!(sample_formula(&mut rng, 0, 0.3), Formula::Var(1..=6)));
            match sample_formula(&mut rng, 1, 0.3) {
                Formula::Not(c) => assert!(matches!(*c, Formula::Var(_))),
                Formula::Bin(_, l, r) => {
                    assert!(matches!(*l, Formula::Var(_)));
                    assert!(matches!(*r, Formula::Var(_)));
                }
                Formula::Var(_) => panic!("k=1 produced a bare variable"),
            }
        }
    }

    #[test]
    fn sample_formula_is_reproducible() {
        let a = sample_formula(&mut ChaCha8Rng::seed_from_u64(42), 3, 1.0 / 3.0);
        let b = sample_formula(&mut ChaCha8Rng::seed_from_u64(42), 3, 1.0 / 3.0);
        assert_eq!(a, b);
    }

    #[test]
    fn generate_counts_per_bin() {
        let ex = generate_pairs(&small(10, 2)).unwrap();
        assert_eq!(ex.len(), 30);
        assert_eq!(bin_counts(&ex, 2), vec![10, 10, 10]);
    }

    #[test]
    fn bin_zero_exhausts_at_36() {
        let capped = generate_pairs(&small(100, 0)).unwrap();
        assert_eq!(capped.len(), 36);
        let strict = GenConfig { on_exhausted: Exhaustion::Fail, ..small(100, 0) };
        assert!(matches!(
            generate_pairs(&strict),
            Err(DataError::GenerationExhausted { bin: 0, found: 36, wanted: 100 })
        ));
        let no_dedupe = GenConfig { dedupe: false, ..small(100, 0) };
        assert_eq!(generate_pairs(&no_dedupe).unwrap().len(), 100);
    }

    #[test]
    fn generated_examples_are_distinct_and_labeled() {
        let ex = generate_pairs(&small(200, 4)).unwrap();
        let distinct: HashSet<_> = ex.iter().map(|e| (&e.premise, &e.hypothesis)).collect();
        assert_eq!(distinct.len(), ex.len());
        assert!(audit(&ex, 4).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(GenConfig { per_bin_pairs: 0, ..GenConfig::default() }.validate().is_err());
        assert!(GenConfig { negation_probability: 1.0, ..GenConfig::default() }.validate().is_err());
        assert!(GenConfig { negation_probability: 0.0, ..GenConfig::default() }.validate().is_err());
        assert!(GenConfig { max_bin: 13, ..GenConfig::default() }.validate().is_err());
        assert!(GenConfig::default().validate().is_ok());
    }

    #[test]
    fn split_per_bin_floor() {
        let ex: Vec<Example> = generate_pairs(&small(100, 1)).unwrap();
        let split = split_dataset(&ex, 0.8, 3);
        assert_eq!(bin_counts(&split.train, 1), vec![28, 80]);
        assert_eq!(bin_counts(&split.test, 1), vec![8, 20]);

        let three: Vec<Example> = ex.iter().filter(|e| e.bin == 1).take(3).cloned().collect();
        let split = split_dataset(&three, 0.5, 3);
        assert_eq!((split.train.len(), split.test.len()), (1, 2));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ex = generate_pairs(&small(50, 3)).unwrap();
        let a = split_dataset(&ex, 0.8, 9);
        assert_eq!(a, split_dataset(&ex, 0.8, 9));
        assert_ne!(a.train, split_dataset(&ex, 0.8, 10).train);
        let train: HashSet<_> = a.train.iter().collect();
        assert!(a.test.iter().all(|e| !train.contains(e)));
        assert_eq!(a.train.len() + a.test.len(), ex.len());
    }

    #[test]
    fn training_subset_respects_cutoff() {
        let ex = generate_pairs(&small(20, 5)).unwrap();
        let split = split_dataset(&ex, 0.8, 1);
        assert!(training_subset(&split, 3).iter().all(|e| e.bin <= 3));
        assert!(training_subset(&split, 0).iter().all(|e| e.bin == 0));
        assert_eq!(training_subset(&split, 5), split.train);
    }

    #[test]
    fn tsv_line_format() {
        let ex = Example::new("( not p3 )".parse().unwrap(), "p3".parse().unwrap());
        assert_eq!(ex.to_tsv_line(), "^\t( not p3 )\tp3");
        let mut buf = Vec::new();
        write_dataset_to(&[], &mut buf).unwrap();
        assert!(buf.is_empty());
    }

    #[test]
    fn tsv_parse_errors_carry_line_numbers() {
        let input = "^\t( not p3 )\tp3\n=\tp1\n";
        match read_dataset_from(input.as_bytes()) {
            Err(DataError::Parse { line: 2, content, .. }) => assert_eq!(content, "=\tp1"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_tsv_line("?\tp1\tp1", 1).is_err());
        assert!(parse_tsv_line("=\tp1\tp7", 1).is_err());
        assert!(parse_tsv_line("=\tp1\tp1\tp1", 1).is_err());
        assert_eq!(parse_tsv_line("=\tp1\tp1\r", 1).unwrap().label, Relation::Equivalence);
    }

    #[test]
    fn histogram() {
        assert_eq!(class_distribution(&[]).total(), 0);
        let x: Formula = "( p1 ( or p2 ) )".parse().unwrap();
        let same: Vec<_> = (0..5).map(|_| Example::new(x.clone(), x.clone())).collect();
        let h = class_distribution(&same);
        assert_eq!(h.fraction(Relation::Equivalence), 1.0);
        assert_eq!(h.majority(), Relation::Equivalence);
        assert_eq!(RelationHistogram::default().majority(), Relation::Equivalence);
        let mut tie = RelationHistogram::default();
        tie.0[Relation::Cover.index()] = 3;
        tie.0[Relation::Negation.index()] = 3;
        assert_eq!(tie.majority(), Relation::Negation);
    }

    #[test]
    fn audit_flags_bad_labels() {
        let mut ex = generate_pairs(&small(5, 2)).unwrap();
        let wrong = Relation::ALL.into_iter().find(|r| *r != ex[3].label).unwrap();
        ex[3].label = wrong;
        let failures = audit(&ex, 12);
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].line, 4);
    }
}
