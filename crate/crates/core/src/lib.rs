//! Cross-domain recommendation with domain separation networks.
//!
//! Users of a *target* service (with no labeled interactions) receive
//! recommendations of items from a *source* service. Recommendation is cast
//! as extreme multi-class classification over source items: a classifier is
//! trained on labeled source histories and adapted to unlabeled target
//! histories with a domain separation network (shared and private encoders,
//! a shared decoder, an adversarial domain discriminator behind a gradient
//! reversal layer). Softmax weights can additionally be anchored to item
//! codes learned by a stacked denoising autoencoder over item content.
//!
//! Module map:
//!
//! - [`nn`]: dense layers with exact reverse-mode gradients, Adam, losses,
//!   gradient reversal and a finite-difference gradient checker.
//! - [`features`]: TF-IDF vocabularies and user/item vectorization.
//! - [`sdae`]: the item autoencoder.
//! - [`dsn`]: the network and every term of the training objective.
//! - [`train`]: candidate-sampled mini-batch training and model selection.
//! - [`eval`]: Recall@K, nDCG@K, target risk and the popularity baseline.
//! - [`serve`]: exact dot-product top-K recommendation.
//! - [`synth`]: paired-domain synthetic benchmark generator.
//! - [`pipeline`]: the file-based commands driven by the CLI.

pub mod config;
pub mod data;
pub mod dsn;
pub mod error;
pub mod eval;
pub mod features;
pub mod nn;
pub mod persist;
pub mod pipeline;
pub mod sdae;
pub mod serve;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
