//! Propositional-logic entailment data: the bracketed sentence language,
//! an exact seven-way relation oracle, and a seeded dataset generator.

pub mod datagen;
pub mod logic;

pub use datagen::{
    class_distribution, generate_pairs, read_dataset, split_dataset, training_subset, write_dataset, DataError,
    DatasetSplit, Example, GenConfig, RelationHistogram,
};
pub use logic::{parse, relation, relation_of_pair, tokenize, BinOp, Formula, Relation, SyntaxError, Token, TruthSet};
