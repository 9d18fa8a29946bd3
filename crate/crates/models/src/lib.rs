//! Sentence encoders, the siamese NTN classifier, training and per-bin
//! evaluation for the propositional entailment task.

pub mod classifier;
pub mod encoder;
pub mod eval;
pub mod params;
pub mod report;
pub mod train;

use propnli_autodiff::AutodiffError;
use thiserror::Error;

pub use classifier::{argmax_relation, Model, ModelConfig, NUM_CLASSES};
pub use encoder::{Encoder, EncoderConfig, EncoderKind, LeafCache, LstmState, SEQ_VOCAB, TREE_VOCAB};
pub use eval::{
    baseline_most_frequent, evaluate_by_bin, learning_curve, run_experiment, seeded_subset, sweep_lambda,
    train_and_evaluate, BinStats, BinTable, CurvePoint, ExperimentReport, LambdaSweep, CUTOFFS, LAMBDA_GRID,
    VALIDATION_FRACTION,
};
pub use train::{train, train_with_validation, History, TrainConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parameters do not match the model: {0}")]
    Incompatible(String),
    #[error("cannot encode an empty sentence")]
    EmptySentence,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("parameter {name} became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteParameter { epoch: usize, batch: usize, name: String },
    #[error("requested {requested} training examples but only {available} are available")]
    SizeExceedsAvailable { requested: usize, available: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
