//! Candidate-sampled mini-batch training, checkpointing and model selection.

mod checkpoint;
mod sampling;
mod trainer;

pub use checkpoint::{
    select_model, Checkpoint, Selection, ValidationMetrics, CHECKPOINT_INDEX_HEADER, CHECKPOINT_KS, SCORE_CHUNK,
};
pub use sampling::sample_candidates;
pub use trainer::{
    epoch_order, grid_search, initial_models, item_codes, pretrain_sdae, train, TrainConfig, TrainData, TrainOutcome,
};
