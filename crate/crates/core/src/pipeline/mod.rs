//! Experiment stages over in-memory corpora and over files.

mod commands;
mod prepare;

pub use commands::*;
pub use prepare::{featurize, prepare, validation_split, Corpus, FeatureSpace, Prepared};
