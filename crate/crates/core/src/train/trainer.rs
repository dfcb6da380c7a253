use serde::{Deserialize, Serialize};

use super::checkpoint::{select_model, Checkpoint, Selection, ValidationMetrics};
use super::sample_candidates;
use crate::dsn::{
    backward_objective, forward_objective, Batch, DsnArch, DsnModel, ItemCodes, LossComponents, LossWeights,
    ObjectiveInputs, ObjectiveOptions, ObjectiveStreams,
};
use crate::features::SparseVec;
use crate::nn::{Adam, GrlMode, Matrix, Rng};
use crate::sdae::{continue_sdae_training, densify, SdaeArch, SdaeModel, SdaeTrainConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub weights: LossWeights,
    /// Classes per sampled softmax (clamped to the catalog size).
    pub candidate_count: usize,
    pub weight_decay_grid: Vec<f64>,
    pub selection: Selection,
    /// Update the autoencoder jointly with the network; otherwise its codes
    /// are frozen after pretraining.
    pub joint_sdae: bool,
    pub sdae_pretrain_epochs: usize,
    /// Do not compute zero-weighted terms at all.
    pub skip_inactive_terms: bool,
    /// Train once per `weight_decay_grid` value and keep the best run.
    pub grid_search: bool,
    /// Drop probability after each encoder hidden layer.
    pub encoder_dropout: f64,
    /// Drop probability in the decoder, classifier and discriminator.
    pub hidden_dropout: f64,
    pub sdae_corruption: f64,
    pub sdae_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 128,
            lr: 1e-3,
            seed: 0,
            weights: LossWeights::default(),
            candidate_count: 512,
            weight_decay_grid: vec![1e-1, 1e-2, 1e-3, 1e-4],
            selection: Selection::NdcgAt100,
            joint_sdae: true,
            sdae_pretrain_epochs: 5,
            skip_inactive_terms: true,
            grid_search: false,
            encoder_dropout: 0.75,
            hidden_dropout: 0.5,
            sdae_corruption: 0.9,
            sdae_dropout: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.epochs == 0 || self.batch_size == 0 || self.candidate_count == 0 {
            return Err(Error::Config("epochs, batch_size and candidate_count must be at least 1".into()));
        }
        if self.weight_decay_grid.is_empty() {
            return Err(Error::Config("weight_decay_grid must not be empty".into()));
        }
        if self.weight_decay_grid.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("weight decay values must be finite and non-negative".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        for r in [self.encoder_dropout, self.hidden_dropout, self.sdae_corruption, self.sdae_dropout] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidRate(r));
            }
        }
        Ok(())
    }

    pub fn dsn_arch(&self, input_dim: usize, classes: usize) -> DsnArch {
        DsnArch {
            encoder_dropout: self.encoder_dropout,
            decoder_dropout: self.hidden_dropout,
            classifier_dropout: self.hidden_dropout,
            discriminator_dropout: self.hidden_dropout,
            ..DsnArch::new(input_dim, classes)
        }
    }

    pub fn sdae_arch(&self) -> SdaeArch {
        SdaeArch {
            input_corruption: self.sdae_corruption,
            hidden_dropout: self.sdae_dropout,
            ..SdaeArch::default()
        }
    }

    /// Whether the objective involves item codes at all.
    pub fn uses_sdae(&self) -> bool {
        self.weights.lambda_item != 0.0 || self.weights.lambda_ir != 0.0
    }
}

/// In-memory training inputs. Item `k` of `items` is class `k`.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub source: Vec<SparseVec>,
    pub source_labels: Vec<usize>,
    pub validation: Vec<SparseVec>,
    pub validation_labels: Vec<usize>,
    pub target: Vec<SparseVec>,
    pub items: Vec<SparseVec>,
}

impl TrainData {
    pub fn input_dim(&self) -> Result<usize> {
        let dim = self.source.first().ok_or(Error::Empty("source examples"))?.dim();
        let all = self.source.iter().chain(&self.validation).chain(&self.target);
        if all.clone().any(|v| v.dim() != dim) {
            return Err(Error::shape("user vectors differ in dimension"));
        }
        Ok(dim)
    }

    pub fn classes(&self) -> usize {
        self.items.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.source.is_empty() {
            return Err(Error::Empty("source examples"));
        }
        if self.target.is_empty() {
            return Err(Error::Empty("target examples"));
        }
        if self.validation.is_empty() {
            return Err(Error::Empty("validation examples"));
        }
        if self.items.is_empty() {
            return Err(Error::Empty("items"));
        }
        if self.source.len() != self.source_labels.len() || self.validation.len() != self.validation_labels.len() {
            return Err(Error::shape("inputs and labels differ in length"));
        }
        let classes = self.classes();
        if let Some(&y) = self.source_labels.iter().chain(&self.validation_labels).find(|&&y| y >= classes) {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        self.input_dim().map(|_| ())
    }
}

/// Outcome of one training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// The final model state.
    pub model: DsnModel,
    pub sdae: Option<SdaeModel>,
    pub checkpoints: Vec<Checkpoint>,
    /// Index of the checkpoint chosen by the configured criterion.
    pub selected: usize,
    /// Objective components of every optimizer step.
    pub trace: Vec<LossComponents>,
    pub weight_decay: f64,
}

impl TrainOutcome {
    /// The model as it was at checkpoint `idx`.
    pub fn model_at(&self, idx: usize) -> Result<DsnModel> {
        let c = self.checkpoints.get(idx).ok_or(Error::Empty("checkpoint"))?;
        let mut m = self.model.clone();
        m.restore(&c.snapshot)?;
        Ok(m)
    }

    pub fn selected_model(&self) -> Result<DsnModel> {
        self.model_at(self.selected)
    }

    /// Checkpoint index under another selection criterion.
    pub fn select(&self, criterion: Selection) -> Result<usize> {
        select_model(&self.checkpoints, criterion)
    }
}

/// Builds a fresh network (and, when the objective uses item codes, a
/// pretrained autoencoder) from `config.seed`.
pub fn initial_models(data: &TrainData, config: &TrainConfig) -> Result<(DsnModel, Option<SdaeModel>)> {
    let root = Rng::new(config.seed);
    let arch = config.dsn_arch(data.input_dim()?, data.classes());
    let model = DsnModel::new(&arch, &mut root.fork("init.dsn"))?;
    let sdae = if config.uses_sdae() {
        Some(pretrain_sdae(&data.items, config)?)
    } else {
        None
    };
    Ok((model, sdae))
}

pub fn pretrain_sdae(items: &[SparseVec], config: &TrainConfig) -> Result<SdaeModel> {
    let dim = items.first().ok_or(Error::Empty("items"))?.dim();
    let mut sdae = SdaeModel::new(dim, &config.sdae_arch(), &mut Rng::new(config.seed).fork("init.sdae"))?;
    let cfg = SdaeTrainConfig {
        epochs: config.sdae_pretrain_epochs,
        batch_size: config.batch_size,
        lr: config.lr,
        seed: config.seed,
    };
    continue_sdae_training(&mut sdae, items, &cfg, 0)?;
    Ok(sdae)
}

/// Codes of every item under an autoencoder, one row per class.
pub fn item_codes(sdae: &SdaeModel, items: &[SparseVec]) -> Result<Matrix> {
    let refs: Vec<&SparseVec> = items.iter().collect();
    sdae.encode(&densify(&refs, sdae.item_dim()))
}

/// Source/target batch order of one epoch, a pure function of (seed, epoch).
pub fn epoch_order(seed: u64, epoch: usize, n_source: usize, n_target: usize) -> (Vec<usize>, Vec<usize>) {
    let root = Rng::new(seed).fork("batches");
    let mut s: Vec<usize> = (0..n_source).collect();
    let mut t: Vec<usize> = (0..n_target).collect();
    root.fork(&format!("source.{epoch}")).shuffle(&mut s);
    root.fork(&format!("target.{epoch}")).shuffle(&mut t);
    (s, t)
}

/// Mini-batch training with one source and one target batch per step,
/// checkpointing validation metrics after every epoch.
pub fn train(
    mut model: DsnModel,
    mut sdae: Option<SdaeModel>,
    data: &TrainData,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    data.validate()?;
    if model.input_dim() != data.input_dim()? || model.classes() != data.classes() {
        return Err(Error::shape("model dimensions do not match the data"));
    }
    let weights = config.weights;
    if config.uses_sdae() && sdae.is_none() {
        return Err(Error::Config("item terms are active but no autoencoder was given".into()));
    }
    if !config.uses_sdae() {
        sdae = None;
    }
    let frozen_codes = match (&sdae, config.joint_sdae) {
        (Some(s), false) => Some(item_codes(s, &data.items)?),
        _ => None,
    };

    let root = Rng::new(config.seed).fork("train");
    let mut streams = ObjectiveStreams::new(&root);
    let mut candidate_rng = root.fork("candidates");
    let adam = Adam::with_lr(config.lr);
    let options = ObjectiveOptions {
        grl: GrlMode::Reverse,
        skip_inactive: config.skip_inactive_terms,
    };
    let input_dim = model.input_dim();
    let classes = model.classes();
    let item_dim = data.items[0].dim();
    let s_eff = config.candidate_count.min(classes);

    let mut t = 0u64;
    let mut trace = Vec::new();
    let mut checkpoints = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (s_order, t_order) = epoch_order(config.seed, epoch, data.source.len(), data.target.len());
        for (b, chunk) in s_order.chunks(config.batch_size).enumerate() {
            let rows: Vec<&SparseVec> = chunk.iter().map(|&i| &data.source[i]).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| data.source_labels[i]).collect();
            let mut source = Batch::source(densify(&rows, input_dim), labels.clone());
            let t_rows: Vec<&SparseVec> = (0..chunk.len())
                .map(|j| &data.target[t_order[(b * config.batch_size + j) % t_order.len()]])
                .collect();
            let target = Batch::target(densify(&t_rows, input_dim));

            let candidates = if s_eff < classes {
                let distinct = {
                    let mut d = labels.clone();
                    d.sort_unstable();
                    d.dedup();
                    d.len()
                };
                Some(sample_candidates(classes, s_eff.max(distinct), &labels, &mut candidate_rng)?)
            } else {
                None
            };
            if let Some(codes) = &frozen_codes {
                source.item_codes = Some(codes.select_rows(&labels));
            }
            let label_items = match (&sdae, config.joint_sdae) {
                (Some(_), true) => {
                    let items: Vec<&SparseVec> = labels.iter().map(|&y| &data.items[y]).collect();
                    Some(densify(&items, item_dim))
                }
                _ => None,
            };

            let inputs = ObjectiveInputs {
                source: &source,
                target: &target,
                candidates: candidates.as_deref(),
                label_items: label_items.as_ref(),
            };
            let joint = if config.joint_sdae { sdae.as_ref() } else { None };
            let codes = joint.map_or(ItemCodes::Frozen, ItemCodes::Joint);
            let (parts, tape) = forward_objective(&model, codes, &inputs, &weights, &options, Some(&mut streams))?;
            if !parts.total.is_finite() {
                return Err(Error::Config(format!("objective diverged at step {}", t + 1)));
            }
            model.zero_grad();
            let joint_mut = if config.joint_sdae { sdae.as_mut() } else { None };
            if let Some(s) = joint_mut {
                s.zero_grad();
                backward_objective(tape, &mut model, Some(&mut *s), &weights)?;
                t += 1;
                s.adam_step(&adam, t);
            } else {
                backward_objective(tape, &mut model, None, &weights)?;
                t += 1;
            }
            model.adam_step(&adam, t);
            trace.push(parts);
        }
        let metrics = ValidationMetrics::compute(&model, &data.validation, &data.validation_labels)?;
        checkpoints.push(Checkpoint {
            step: t,
            epoch: epoch + 1,
            snapshot: model.snapshot(),
            metrics,
        });
    }
    let selected = select_model(&checkpoints, config.selection)?;
    Ok(TrainOutcome {
        model,
        sdae,
        checkpoints,
        selected,
        trace,
        weight_decay: weights.weight_decay,
    })
}

/// Trains once per weight-decay value in the grid (fresh models each time)
/// and keeps the run whose selected checkpoint scores best.
pub fn grid_search(data: &TrainData, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut best: Option<(f64, TrainOutcome)> = None;
    let pretrained = if config.uses_sdae() {
        Some(pretrain_sdae(&data.items, config)?)
    } else {
        None
    };
    for &wd in &config.weight_decay_grid {
        let mut cfg = config.clone();
        cfg.weights.weight_decay = wd;
        let model = DsnModel::new(
            &cfg.dsn_arch(data.input_dim()?, data.classes()),
            &mut Rng::new(cfg.seed).fork("init.dsn"),
        )?;
        let outcome = train(model, pretrained.clone(), data, &cfg)?;
        let m = &outcome.checkpoints[outcome.selected].metrics;
        let score = match config.selection {
            Selection::CrossEntropy => m.ce.ok_or(Error::MissingMetric("ce"))?,
            Selection::NdcgAt100 => -m.ndcg_at_100.ok_or(Error::MissingMetric("ndcg@100"))?,
        };
        if best.as_ref().map_or(true, |(b, _)| score < *b) {
            best = Some((score, outcome));
        }
    }
    Ok(best.expect("grid is non-empty").1)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Seven classes, each with its own block of feature indices.
    fn toy(n: usize, seed: u64) -> TrainData {
        let mut rng = Rng::new(seed);
        let dim = 28;
        let mut make = |count: usize, offset: usize| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for _ in 0..count {
                let y = rng.below(7);
                let mut entries = vec![(y * 4 + rng.below(4), 1.0), (rng.below(dim), 0.3)];
                entries[1].0 = (entries[1].0 + offset) % dim;
                let mut v = SparseVec::from_entries(dim, entries);
                v.l2_normalize();
                xs.push(v);
                ys.push(y);
            }
            (xs, ys)
        };
        let (source, source_labels) = make(n, 0);
        let (validation, validation_labels) = make(n / 4, 0);
        let (target, _) = make(n, 3);
        let items = (0..7).map(|k| SparseVec::one_hot(7, Some(k))).collect();
        TrainData {
            source,
            source_labels,
            validation,
            validation_labels,
            target,
            items,
        }
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            seed: 5,
            weights: LossWeights {
                lambda_item: 0.0,
                lambda_ir: 0.0,
                ..LossWeights::default()
            },
            weight_decay_grid: vec![1e-4],
            ..TrainConfig::default()
        }
    }

    fn run(data: &TrainData, cfg: &TrainConfig) -> TrainOutcome {
        let (m, s) = initial_models(data, cfg).unwrap();
        train(m, s, data, cfg).unwrap()
    }

    #[test]
    fn toy_task_beats_uniform_predictor() {
        let data = toy(200, 1);
        let mut cfg = small_config();
        cfg.weights = LossWeights::task_only();
        let out = run(&data, &cfg);
        let ce = ValidationMetrics::compute(&out.model, &data.source, &data.source_labels)
            .unwrap()
            .ce
            .unwrap();
        assert!(ce < 7f64.ln(), "mean training CE {ce}");
    }

    #[test]
    fn fixed_seed_gives_identical_trace() {
        let data = toy(100, 2);
        let mut cfg = small_config();
        cfg.epochs = 2;
        let a = run(&data, &cfg);
        let b = run(&data, &cfg);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.checkpoints, b.checkpoints);
    }

    #[test]
    fn stronger_weight_decay_shrinks_weights() {
        let data = toy(100, 3);
        let mut cfg = small_config();
        cfg.epochs = 3;
        cfg.weights.weight_decay = 1e-1;
        let strong = run(&data, &cfg).model.weight_sq_norm();
        cfg.weights.weight_decay = 1e-4;
        let weak = run(&data, &cfg).model.weight_sq_norm();
        assert!(strong < weak, "{strong} vs {weak}");
    }

    #[test]
    fn joint_and_frozen_autoencoder_modes_run() {
        let data = toy(64, 4);
        let mut cfg = small_config();
        cfg.epochs = 1;
        cfg.weights = LossWeights::default();
        cfg.sdae_pretrain_epochs = 1;
        for joint in [true, false] {
            cfg.joint_sdae = joint;
            let out = run(&data, &cfg);
            assert!(out.trace.iter().all(|p| p.item > 0.0));
            assert_eq!(out.trace.iter().any(|p| p.ir > 0.0), joint);
        }
    }

    #[test]
    fn checkpoint_metrics_reproduce_from_snapshots() {
        let data = toy(64, 6);
        let mut cfg = small_config();
        cfg.epochs = 2;
        let out = run(&data, &cfg);
        for (i, c) in out.checkpoints.iter().enumerate() {
            let m = out.model_at(i).unwrap();
            let again = ValidationMetrics::compute(&m, &data.validation, &data.validation_labels).unwrap();
            assert_eq!(again, c.metrics);
        }
    }

    #[test]
    fn batch_order_depends_only_on_seed_and_epoch() {
        assert_eq!(epoch_order(1, 3, 50, 40), epoch_order(1, 3, 50, 40));
        assert_ne!(epoch_order(1, 3, 50, 40).0, epoch_order(1, 4, 50, 40).0);
    }

    #[test]
    fn empty_data_errors() {
        let mut data = toy(10, 7);
        let cfg = small_config();
        let (m, s) = initial_models(&data, &cfg).unwrap();
        data.source.clear();
        data.source_labels.clear();
        assert!(train(m, s, &data, &cfg).is_err());
    }
}
