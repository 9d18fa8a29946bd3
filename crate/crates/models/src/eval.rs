//! Per-bin evaluation, the cutoff experiments, learning curves and baselines.

use propnli_core::datagen::{split_dataset, MAX_BIN};
use propnli_core::{class_distribution, training_subset, DatasetSplit, Example, Relation};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{Model, ModelConfig};
use crate::train::{thread_pool, train, train_with_validation, History, TrainConfig};
use crate::ModelError;

/// The three training cutoffs of the generalization experiments.
pub const CUTOFFS: [usize; 3] = [3, 4, 6];

/// Candidate L2 strengths for [`sweep_lambda`].
pub const LAMBDA_GRID: [f64; 3] = [1e-3, 1e-4, 1e-5];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinStats {
    pub bin: usize,
    pub count: usize,
    pub correct: usize,
    /// `confusion[gold][predicted]`, canonical relation order.
    pub confusion: [[usize; 7]; 7],
}

impl BinStats {
    fn new(bin: usize) -> Self {
        BinStats { bin, count: 0, correct: 0, confusion: [[0; 7]; 7] }
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.count > 0).then(|| self.correct as f64 / self.count as f64)
    }
}

/// Per-bin results for bins `0..=MAX_BIN`. Bin 0 is kept but left out of
/// the headline aggregates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinTable {
    pub bins: Vec<BinStats>,
}

impl BinTable {
    pub fn empty() -> Self {
        BinTable { bins: (0..=MAX_BIN).map(BinStats::new).collect() }
    }

    fn record(&mut self, bin: usize, gold: Relation, predicted: Relation) {
        let s = &mut self.bins[bin];
        s.count += 1;
        s.correct += usize::from(gold == predicted);
        s.confusion[gold.index()][predicted.index()] += 1;
    }

    pub fn accuracy(&self, bin: usize) -> Option<f64> {
        self.bins.get(bin).and_then(BinStats::accuracy)
    }

    /// Pooled accuracy over every example whose bin lies in `bins`.
    pub fn pooled(&self, bins: std::ops::RangeInclusive<usize>) -> Option<f64> {
        let (mut n, mut c) = (0, 0);
        for s in self.bins.iter().filter(|s| bins.contains(&s.bin)) {
            n += s.count;
            c += s.correct;
        }
        (n > 0).then(|| c as f64 / n as f64)
    }

    /// Unweighted mean of the per-bin accuracies in `bins`, skipping empty bins.
    pub fn mean_of_bins(&self, bins: std::ops::RangeInclusive<usize>) -> Option<f64> {
        let accs: Vec<f64> = bins.filter_map(|b| self.accuracy(b)).collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }

    /// Headline accuracy over bins 1..=12.
    pub fn overall(&self) -> Option<f64> {
        self.pooled(1..=MAX_BIN)
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|s| s.count).sum()
    }
}

/// Tallies any predictor per bin.
pub fn tally(examples: &[Example], predictions: &[Relation]) -> Result<BinTable, ModelError> {
    assert_eq!(examples.len(), predictions.len());
    let mut t = BinTable::empty();
    for (e, &p) in examples.iter().zip(predictions) {
        if e.bin > MAX_BIN {
            return Err(ModelError::InvalidConfig(format!("example bin {} exceeds {MAX_BIN}", e.bin)));
        }
        t.record(e.bin, e.label, p);
    }
    Ok(t)
}

/// Predictions in input order; parallel over examples, parameters read-only.
pub fn predict_all(model: &Model, examples: &[Example], pool: &rayon::ThreadPool) -> Result<Vec<Relation>, ModelError> {
    pool.install(|| examples.par_iter().map(|e| model.predict(e)).collect())
}

pub fn evaluate_by_bin(model: &Model, examples: &[Example], threads: usize) -> Result<BinTable, ModelError> {
    let pool = thread_pool(threads)?;
    tally(examples, &predict_all(model, examples, &pool)?)
}

pub(crate) fn accuracy(model: &Model, examples: &[Example], pool: &rayon::ThreadPool) -> Result<f64, ModelError> {
    let preds = predict_all(model, examples, pool)?;
    let correct = examples.iter().zip(&preds).filter(|(e, p)| e.label == **p).count();
    Ok(correct as f64 / examples.len().max(1) as f64)
}

/// Predicts the training majority (ties to the lowest relation index) everywhere.
pub fn baseline_most_frequent(train: &[Example], test: &[Example]) -> Result<(Relation, BinTable), ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let majority = class_distribution(train).majority();
    Ok((majority, tally(test, &vec![majority; test.len()])?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub model: ModelConfig,
    pub train_config: TrainConfig,
    /// Largest training bin, if the run was a cutoff experiment.
    pub cutoff: Option<usize>,
    pub train_size: usize,
    pub test: BinTable,
    pub train: BinTable,
    pub baseline_label: Relation,
    pub baseline_test: BinTable,
    pub baseline_train: BinTable,
    pub history: History,
}

impl ExperimentReport {
    pub fn train_accuracy(&self) -> Option<f64> {
        self.train.pooled(0..=MAX_BIN)
    }

    pub fn baseline_train_accuracy(&self) -> Option<f64> {
        self.baseline_train.pooled(0..=MAX_BIN)
    }

    /// A run whose training accuracy does not beat the majority baseline.
    pub fn degenerate(&self) -> bool {
        match (self.train_accuracy(), self.baseline_train_accuracy()) {
            (Some(t), Some(b)) => t <= b,
            _ => true,
        }
    }

    /// Whether `bin` was inside the training range.
    pub fn seen(&self, bin: usize) -> bool {
        self.cutoff.is_none_or(|c| bin <= c)
    }
}

/// Share of the training data held out for validation when
/// [`TrainConfig::best_epoch`] is set.
pub const VALIDATION_FRACTION: f64 = 0.1;

/// Trains a fresh model on `train_set` and evaluates it on both sides.
///
/// With `best_epoch` set, a seeded tenth of every training bin is held out to
/// pick the epoch, and the report's train side is the remaining nine tenths.
pub fn train_and_evaluate(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    train_set: &[Example],
    test_set: &[Example],
    cutoff: Option<usize>,
) -> Result<(Model, ExperimentReport), ModelError> {
    let mut model = Model::with_optimizer(model_config.clone(), train_config.optimizer())?;
    let held;
    let (train_set, history) = if train_config.best_epoch {
        if train_set.len() < 2 {
            return Err(ModelError::InvalidConfig("best-epoch selection needs at least 2 training examples".into()));
        }
        held = split_dataset(train_set, 1.0 - VALIDATION_FRACTION, train_config.seed);
        let h = train_with_validation(&mut model, &held.train, Some(&held.test), train_config)?;
        (&held.train[..], h)
    } else {
        (train_set, train(&mut model, train_set, train_config)?)
    };
    let pool = thread_pool(train_config.threads)?;
    let test = tally(test_set, &predict_all(&model, test_set, &pool)?)?;
    let train_table = tally(train_set, &predict_all(&model, train_set, &pool)?)?;
    let (baseline_label, baseline_test) = baseline_most_frequent(train_set, test_set)?;
    let (_, baseline_train) = baseline_most_frequent(train_set, train_set)?;
    let report = ExperimentReport {
        model: model_config.clone(),
        train_config: train_config.clone(),
        cutoff,
        train_size: train_set.len(),
        test,
        train: train_table,
        baseline_label,
        baseline_test,
        baseline_train,
        history,
    };
    Ok((model, report))
}

/// Trains on the training side of bins `0..=cutoff` and tests on every bin.
pub fn run_experiment(
    split: &DatasetSplit,
    cutoff: usize,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(Model, ExperimentReport), ModelError> {
    let train_set = training_subset(split, cutoff);
    train_and_evaluate(model_config, train_config, &train_set, &split.test, Some(cutoff))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    /// Test accuracy pooled over bins 1..=12.
    pub accuracy: f64,
}

/// A seeded subset of `size` examples, kept in their original order so the
/// full size reproduces the unsubsampled run exactly.
pub fn seeded_subset(examples: &[Example], size: usize, seed: u64) -> Result<Vec<Example>, ModelError> {
    if size > examples.len() {
        return Err(ModelError::SizeExceedsAvailable { requested: size, available: examples.len() });
    }
    let mut idx: Vec<usize> = (0..examples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut keep = idx[..size].to_vec();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| examples[i].clone()).collect())
}

pub fn learning_curve(
    split: &DatasetSplit,
    cutoff: usize,
    sizes: &[usize],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<Vec<CurvePoint>, ModelError> {
    let pool = training_subset(split, cutoff);
    if sizes.is_empty() {
        return Err(ModelError::InvalidConfig("no training sizes given".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ModelError::InvalidConfig("sizes must be strictly ascending".into()));
    }
    if let Some(&s) = sizes.iter().find(|&&s| s > pool.len() || s == 0) {
        return Err(ModelError::SizeExceedsAvailable { requested: s, available: pool.len() });
    }
    let mut points = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let subset = seeded_subset(&pool, size, train_config.seed)?;
        let (_, report) = train_and_evaluate(model_config, train_config, &subset, &split.test, Some(cutoff))?;
        points.push(CurvePoint { size, accuracy: report.test.overall().unwrap_or(0.0) });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSweep {
    /// `(λ, held-out accuracy)` in the order tried.
    pub results: Vec<(f64, f64)>,
    pub chosen: f64,
}

/// Picks λ by held-out accuracy on a slice of the training data (ties go
/// to the earlier candidate).
pub fn sweep_lambda(
    train_set: &[Example],
    candidates: &[f64],
    holdout_fraction: f64,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<LambdaSweep, ModelError> {
    if candidates.is_empty() {
        return Err(ModelError::InvalidConfig("no lambda candidates".into()));
    }
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(ModelError::InvalidConfig("holdout fraction must be in (0, 1)".into()));
    }
    let inner = split_dataset(train_set, 1.0 - holdout_fraction, train_config.seed);
    if inner.train.is_empty() || inner.test.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let pool = thread_pool(train_config.threads)?;
    let mut results = Vec::new();
    for &lambda in candidates {
        let cfg = TrainConfig { lambda, ..train_config.clone() };
        let mut model = Model::with_optimizer(model_config.clone(), cfg.optimizer())?;
        train(&mut model, &inner.train, &cfg)?;
        results.push((lambda, accuracy(&model, &inner.test, &pool)?));
    }
    let mut chosen = results[0];
    for &r in &results[1..] {
        if r.1 > chosen.1 {
            chosen = r;
        }
    }
    Ok(LambdaSweep { results, chosen: chosen.0 })
}
