//! Domain separation network and the terms of its training objective.

mod losses;
mod model;
mod objective;

pub use losses::{difference_loss, difference_loss_grads, item_anchor_loss, similarity_loss};
pub use model::{Batch, DsnActivations, DsnArch, DsnModel, ParamSnapshot};
pub use objective::{
    backward_objective, forward_objective, total_loss, ItemCodes, LossComponents, LossWeights, ObjectiveGraph,
    ObjectiveInputs, ObjectiveOptions, ObjectiveStreams, Tape,
};
