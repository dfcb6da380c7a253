//! The combined training objective
//!
//! `E = L_task + α L_recon + β L_diff + γ L_sim + λ_item L_item + λ_IR L_IR + wd ‖W‖²`
//!
//! evaluated on one source and one target batch, with a hand-written
//! backward pass. Every term is an unnormalized sum over its batch.

use serde::{Deserialize, Serialize};

use super::losses::{check_anchor, difference_loss_grads};
use super::model::{Batch, DsnModel};
use crate::data::Domain;
use crate::nn::{loss, GradCheckOptions, GrlMode, LossGraph, Matrix, Mlp, MlpCache, Mode, Param, Rng};
use crate::sdae::{corrupt_matrix, SdaeForward, SdaeModel, SdaeStreams};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda_item: f64,
    pub lambda_ir: f64,
    pub weight_decay: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1e-3,
            beta: 1e-2,
            gamma: 100.0,
            lambda_item: 1e-2,
            lambda_ir: 100.0,
            weight_decay: 1e-4,
        }
    }
}

impl LossWeights {
    /// Every coefficient zero: `E = L_task`.
    pub fn task_only() -> Self {
        LossWeights {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            lambda_item: 0.0,
            lambda_ir: 0.0,
            weight_decay: 0.0,
        }
    }

    /// The same weights with the domain adaptation terms (difference and
    /// similarity) switched off.
    pub fn without_adaptation(mut self) -> Self {
        self.beta = 0.0;
        self.gamma = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda_item", self.lambda_item),
            ("lambda_ir", self.lambda_ir),
            ("weight_decay", self.weight_decay),
        ];
        for (name, v) in all {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Unweighted term values and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub task: f64,
    pub recon: f64,
    pub difference: f64,
    pub similarity: f64,
    pub item: f64,
    pub ir: f64,
    /// Sum of squared weight-matrix entries.
    pub weight_norm: f64,
    pub total: f64,
}

pub struct ObjectiveInputs<'a> {
    pub source: &'a Batch,
    pub target: &'a Batch,
    /// Sorted class subset for the sampled softmax; `None` uses every class.
    pub candidates: Option<&'a [usize]>,
    /// Item feature rows of the source labels (row i for label i); required
    /// when an autoencoder takes part in the objective.
    pub label_items: Option<&'a Matrix>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveOptions {
    pub grl: GrlMode,
    /// Skip the forward computation of zero-weighted terms (reported as 0).
    pub skip_inactive: bool,
}

impl Default for ObjectiveOptions {
    fn default() -> Self {
        ObjectiveOptions {
            grl: GrlMode::Reverse,
            skip_inactive: false,
        }
    }
}

/// One random stream per stochastic sub-computation, so that skipping a
/// term never shifts the draws of another.
#[derive(Clone, Debug)]
pub struct ObjectiveStreams {
    pub shared_source: Rng,
    pub shared_target: Rng,
    pub private_source: Rng,
    pub private_target: Rng,
    pub decoder_source: Rng,
    pub decoder_target: Rng,
    pub classifier: Rng,
    pub discriminator_source: Rng,
    pub discriminator_target: Rng,
    pub sdae: SdaeStreams,
}

impl ObjectiveStreams {
    pub fn new(root: &Rng) -> Self {
        ObjectiveStreams {
            shared_source: root.fork("dsn.shared.source"),
            shared_target: root.fork("dsn.shared.target"),
            private_source: root.fork("dsn.private.source"),
            private_target: root.fork("dsn.private.target"),
            decoder_source: root.fork("dsn.decoder.source"),
            decoder_target: root.fork("dsn.decoder.target"),
            classifier: root.fork("dsn.classifier"),
            discriminator_source: root.fork("dsn.discriminator.source"),
            discriminator_target: root.fork("dsn.discriminator.target"),
            sdae: SdaeStreams::new(root),
        }
    }
}

/// Where the item codes of source labels come from.
pub enum ItemCodes<'a> {
    /// Fixed codes carried by the source batch.
    Frozen,
    /// Codes computed by an autoencoder trained jointly with the network.
    Joint(&'a SdaeModel),
}

struct DomainTape {
    domain: Domain,
    shared: MlpCache,
    private: Option<MlpCache>,
    decoder: Option<MlpCache>,
    discriminator: Option<MlpCache>,
    h_c: Matrix,
    h_p: Option<Matrix>,
    /// `dL_recon / dx̂`
    d_recon: Option<Matrix>,
    /// `dL_sim / dz` at the discriminator logit.
    d_logit: Option<Matrix>,
}

struct TaskTape {
    classifier: MlpCache,
    u: Matrix,
    candidates: Vec<usize>,
    d_logits: Matrix,
}

struct ItemTape {
    labels: Vec<usize>,
    /// `v_{y_i} - h_i`
    residual: Matrix,
    encoder: Option<MlpCache>,
}

/// Everything the backward pass needs from a forward pass.
pub struct Tape {
    source: DomainTape,
    target: DomainTape,
    task: TaskTape,
    item: Option<ItemTape>,
    ir: Option<(SdaeForward, Matrix)>,
    grl: GrlMode,
}

fn mode(rng: Option<&mut Rng>) -> Mode<'_> {
    rng.into()
}

fn streams_for(
    streams: Option<&mut ObjectiveStreams>,
    domain: Domain,
) -> (Option<&mut Rng>, Option<&mut Rng>, Option<&mut Rng>, Option<&mut Rng>) {
    match streams {
        None => (None, None, None, None),
        Some(s) => match domain {
            Domain::Source => (
                Some(&mut s.shared_source),
                Some(&mut s.private_source),
                Some(&mut s.decoder_source),
                Some(&mut s.discriminator_source),
            ),
            Domain::Target => (
                Some(&mut s.shared_target),
                Some(&mut s.private_target),
                Some(&mut s.decoder_target),
                Some(&mut s.discriminator_target),
            ),
        },
    }
}

fn domain_forward(
    model: &DsnModel,
    batch: &Batch,
    domain: Domain,
    weights: &LossWeights,
    skip: bool,
    streams: Option<&mut ObjectiveStreams>,
    parts: &mut LossComponents,
) -> Result<DomainTape> {
    batch.check(domain)?;
    let (s_shared, s_private, s_decoder, s_disc) = streams_for(streams, domain);
    let (h_c, shared) = model.shared_encoder.forward(&batch.inputs, mode(s_shared))?;

    let need_private = !skip || weights.alpha != 0.0 || weights.beta != 0.0;
    let (mut h_p, mut private) = (None, None);
    if need_private {
        let (h, c) = model.private_encoder(domain).forward(&batch.inputs, mode(s_private))?;
        h_p = Some(h);
        private = Some(c);
    }

    let (mut decoder, mut d_recon) = (None, None);
    if !skip || weights.alpha != 0.0 {
        let sum = h_c.add(h_p.as_ref().expect("private code computed"));
        let (x_hat, c) = model.decoder.forward(&sum, mode(s_decoder))?;
        let (l, g) = loss::squared_error(&x_hat, &batch.inputs);
        parts.recon += l;
        decoder = Some(c);
        d_recon = Some(g);
    }

    if let Some(h_p) = &h_p {
        if !skip || weights.beta != 0.0 {
            parts.difference += h_c.matmul_t(h_p).frobenius_sq();
        }
    }

    let (mut discriminator, mut d_logit) = (None, None);
    if !skip || weights.gamma != 0.0 {
        // forward through the reversal layer is the identity
        let (z, c) = model.discriminator.forward(&h_c, mode(s_disc))?;
        let (l, _, g) = loss::bce_on_logits(z.as_slice(), &batch.domain_labels());
        parts.similarity += l;
        discriminator = Some(c);
        d_logit = Some(Matrix::from_vec(g.len(), 1, g)?);
    }

    Ok(DomainTape {
        domain,
        shared,
        private,
        decoder,
        discriminator,
        h_c,
        h_p,
        d_recon,
        d_logit,
    })
}

fn candidate_positions(candidates: &[usize], labels: &[usize], classes: usize) -> Result<Vec<usize>> {
    if candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("candidates must be strictly increasing".into()));
    }
    if let Some(&last) = candidates.last() {
        if last >= classes {
            return Err(Error::LabelOutOfRange { label: last, classes });
        }
    }
    labels
        .iter()
        .map(|&y| {
            if y >= classes {
                return Err(Error::LabelOutOfRange { label: y, classes });
            }
            candidates
                .binary_search(&y)
                .map_err(|_| Error::Config(format!("label {y} missing from the candidate set")))
        })
        .collect()
}

/// Forward pass of the objective; returns the components and a tape for
/// [`backward_objective`]. `streams` drives dropout and corruption; `None`
/// evaluates the deterministic inference-mode objective.
pub fn forward_objective(
    model: &DsnModel,
    codes: ItemCodes<'_>,
    inputs: &ObjectiveInputs<'_>,
    weights: &LossWeights,
    opts: &ObjectiveOptions,
    mut streams: Option<&mut ObjectiveStreams>,
) -> Result<(LossComponents, Tape)> {
    weights.validate()?;
    let skip = opts.skip_inactive;
    let mut parts = LossComponents::default();
    let source = domain_forward(
        model,
        inputs.source,
        Domain::Source,
        weights,
        skip,
        streams.as_deref_mut(),
        &mut parts,
    )?;
    let target = domain_forward(
        model,
        inputs.target,
        Domain::Target,
        weights,
        skip,
        streams.as_deref_mut(),
        &mut parts,
    )?;

    let labels = inputs.source.labels.as_ref().expect("checked source batch");
    let classes = model.classes();
    let all: Vec<usize>;
    let candidates = match inputs.candidates {
        Some(c) => c,
        None => {
            all = (0..classes).collect();
            &all
        }
    };
    let positions = candidate_positions(candidates, labels, classes)?;
    let (u, classifier) = model
        .classifier
        .forward(&source.h_c, mode(streams.as_deref_mut().map(|s| &mut s.classifier)))?;
    let v_c = model.softmax_weights.value.select_rows(candidates);
    let logits = u.matmul_t(&v_c);
    let (task, d_logits) = loss::softmax_ce_batch(&logits, &positions)?;
    parts.task = task;
    let task = TaskTape {
        classifier,
        u,
        candidates: candidates.to_vec(),
        d_logits,
    };

    let joint = match codes {
        ItemCodes::Joint(s) => Some(s),
        ItemCodes::Frozen => None,
    };
    let sdae_input = || {
        inputs
            .label_items
            .ok_or_else(|| Error::Config("the autoencoder terms need label item features".into()))
    };

    let mut item = None;
    if !skip || weights.lambda_item != 0.0 {
        let (h, encoder) = match joint {
            Some(s) => {
                // anchors are the clean, noise-free codes
                let (h, c) = s.encode_with_cache(sdae_input()?, Mode::Inference)?;
                (h, Some(c))
            }
            None => match &inputs.source.item_codes {
                Some(h) => (h.clone(), None),
                None if weights.lambda_item == 0.0 => (Matrix::zeros(0, 0), None),
                None => return Err(Error::Config("item anchoring needs item codes".into())),
            },
        };
        if h.rows() > 0 {
            let v = &model.softmax_weights.value;
            check_anchor(v, labels, &h)?;
            let residual = v.select_rows(labels).sub(&h);
            parts.item = residual.frobenius_sq();
            item = Some(ItemTape {
                labels: labels.clone(),
                residual,
                encoder,
            });
        }
    }

    let mut ir = None;
    if let Some(s) = joint {
        if !skip || weights.lambda_ir != 0.0 {
            let clean = sdae_input()?;
            let sdae_streams = streams.as_deref_mut().map(|st| &mut st.sdae);
            let fwd = match sdae_streams {
                Some(st) => {
                    let noisy = corrupt_matrix(clean, s.input_corruption, &mut st.corruption)?;
                    s.apply(&noisy, Mode::Train(&mut st.dropout))?
                }
                None => s.apply(clean, Mode::Inference)?,
            };
            let (l, g) = loss::squared_error(&fwd.reconstruction, clean);
            parts.ir = l;
            ir = Some((fwd, g));
        }
    }

    parts.weight_norm = model.weight_sq_norm() + joint.map_or(0.0, |s| s.weight_sq_norm());
    parts.total = parts.task
        + weights.alpha * parts.recon
        + weights.beta * parts.difference
        + weights.gamma * parts.similarity
        + weights.lambda_item * parts.item
        + weights.lambda_ir * parts.ir
        + weights.weight_decay * parts.weight_norm;

    Ok((
        parts,
        Tape {
            source,
            target,
            task,
            item,
            ir,
            grl: opts.grl,
        },
    ))
}

fn scaled(mut m: Matrix, w: f64) -> Matrix {
    m.scale(w);
    m
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(s) => s.axpy(1.0, &g),
        None => *slot = Some(g),
    }
}

fn domain_backward(
    model: &mut DsnModel,
    tape: &DomainTape,
    weights: &LossWeights,
    grl: GrlMode,
    mut d_hc: Option<Matrix>,
) -> Result<()> {
    let mut d_hp: Option<Matrix> = None;
    if weights.alpha != 0.0 {
        if let (Some(cache), Some(g)) = (&tape.decoder, &tape.d_recon) {
            let d_sum = model
                .decoder
                .backward(cache, scaled(g.clone(), weights.alpha), true)
                .expect("input grad requested");
            accumulate(&mut d_hc, d_sum.clone());
            accumulate(&mut d_hp, d_sum);
        }
    }
    if weights.beta != 0.0 {
        if let Some(h_p) = &tape.h_p {
            let (_, dc, dp) = difference_loss_grads(&tape.h_c, h_p)?;
            accumulate(&mut d_hc, scaled(dc, weights.beta));
            accumulate(&mut d_hp, scaled(dp, weights.beta));
        }
    }
    if weights.gamma != 0.0 {
        if let (Some(cache), Some(g)) = (&tape.discriminator, &tape.d_logit) {
            let d_in = model
                .discriminator
                .backward(cache, scaled(g.clone(), weights.gamma), true)
                .expect("input grad requested");
            accumulate(&mut d_hc, grl.backward(d_in));
        }
    }
    if let Some(d) = d_hc {
        model.shared_encoder.backward(&tape.shared, d, false);
    }
    if let (Some(d), Some(cache)) = (d_hp, &tape.private) {
        let enc: &mut Mlp = model.private_encoder_mut(tape.domain);
        enc.backward(cache, d, false);
    }
    Ok(())
}

/// Accumulates `dE/dθ` into every parameter gradient (the discriminator's
/// contribution to the shared encoder passes through the tape's GRL mode).
pub fn backward_objective(
    tape: Tape,
    model: &mut DsnModel,
    mut sdae: Option<&mut SdaeModel>,
    weights: &LossWeights,
) -> Result<()> {
    // task term: logits = U V_cᵀ
    let t = &tape.task;
    let v_c = model.softmax_weights.value.select_rows(&t.candidates);
    let d_u = t.d_logits.matmul(&v_c);
    let d_vc = t.d_logits.t_matmul(&t.u);
    for (r, &c) in t.candidates.iter().enumerate() {
        for (g, d) in model.softmax_weights.grad.row_mut(c).iter_mut().zip(d_vc.row(r)) {
            *g += d;
        }
    }
    let d_hc_task = model
        .classifier
        .backward(&t.classifier, d_u, true)
        .expect("input grad requested");

    if let Some(item) = &tape.item {
        if weights.lambda_item != 0.0 {
            let g = scaled(item.residual.clone(), 2.0 * weights.lambda_item);
            for (i, &y) in item.labels.iter().enumerate() {
                for (acc, d) in model.softmax_weights.grad.row_mut(y).iter_mut().zip(g.row(i)) {
                    *acc += d;
                }
            }
            if let (Some(cache), Some(s)) = (&item.encoder, sdae.as_deref_mut()) {
                s.backward_code(cache, g.neg());
            }
        }
    }

    if let (Some((fwd, g)), Some(s)) = (&tape.ir, sdae.as_deref_mut()) {
        if weights.lambda_ir != 0.0 {
            s.backward(fwd, scaled(g.clone(), weights.lambda_ir), None);
        }
    }

    domain_backward(model, &tape.source, weights, tape.grl, Some(d_hc_task))?;
    domain_backward(model, &tape.target, weights, tape.grl, None)?;

    if weights.weight_decay != 0.0 {
        model.add_weight_decay_grad(weights.weight_decay);
        if let Some(s) = sdae {
            s.add_weight_decay_grad(weights.weight_decay);
        }
    }
    Ok(())
}

/// Forward-only objective value.
pub fn total_loss(
    model: &DsnModel,
    codes: ItemCodes<'_>,
    inputs: &ObjectiveInputs<'_>,
    weights: &LossWeights,
    streams: Option<&mut ObjectiveStreams>,
) -> Result<LossComponents> {
    forward_objective(model, codes, inputs, weights, &ObjectiveOptions::default(), streams).map(|(c, _)| c)
}

fn uniform_rows(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    m.as_mut_slice().iter_mut().for_each(|v| *v = rng.uniform());
    for r in 0..rows {
        let norm = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        m.row_mut(r).iter_mut().for_each(|v| *v /= norm);
    }
    m
}

/// The full objective as a [`LossGraph`]. Each evaluation restarts from a
/// copy of the same streams, so dropout masks and corruption are frozen.
pub struct ObjectiveGraph {
    pub model: DsnModel,
    pub sdae: Option<SdaeModel>,
    pub source: Batch,
    pub target: Batch,
    pub candidates: Option<Vec<usize>>,
    pub label_items: Option<Matrix>,
    pub weights: LossWeights,
    pub options: ObjectiveOptions,
    pub streams: Option<ObjectiveStreams>,
}

impl ObjectiveGraph {
    /// Settings for checking the full objective: a sample of entries per
    /// tensor (the discriminator has a million weights) and a 1e-6 floor,
    /// so entries whose gradient is negligible next to a loss in the
    /// thousands are judged on an absolute error of 1e-10. The step balances
    /// rounding of those thousands against curvature: 1e-4 loses the
    /// discriminator gradients to rounding, 1e-3 the softmax ones to the
    /// second-order term.
    pub fn check_options(seed: u64) -> GradCheckOptions {
        GradCheckOptions {
            eps: 3e-4,
            max_entries_per_param: Some(16),
            abs_floor: 1e-6,
            seed,
        }
    }

    /// Small instance with every term active: 20 input features, 7 classes,
    /// 4 examples per domain and a jointly trained autoencoder over 12-dim
    /// items. Inputs are non-negative unit rows like tf-idf features.
    pub fn toy(seed: u64) -> Result<Self> {
        let root = Rng::new(seed);
        let mut data = root.fork("data");
        let model = DsnModel::new(&super::DsnArch::new(20, 7), &mut root.fork("dsn"))?;
        let sdae = SdaeModel::new(12, &crate::sdae::SdaeArch::default(), &mut root.fork("sdae"))?;
        let mut g = ObjectiveGraph {
            model,
            sdae: Some(sdae),
            source: Batch::source(uniform_rows(4, 20, &mut data), vec![1, 4, 6, 4]),
            target: Batch::target(uniform_rows(4, 20, &mut data)),
            candidates: None,
            label_items: Some(uniform_rows(4, 12, &mut data)),
            weights: LossWeights::default(),
            options: ObjectiveOptions::default(),
            streams: Some(ObjectiveStreams::new(&root.fork("streams"))),
        };
        // Zero biases put every ELU of a fully masked input exactly on its
        // kink; small random biases keep the check on smooth ground.
        let mut b = root.fork("biases");
        g.visit_params(&mut |name, p| {
            if name.ends_with("bias") {
                p.value.as_mut_slice().iter_mut().for_each(|v| *v = 0.1 * b.normal());
            }
        });
        Ok(g)
    }

    pub fn evaluate(&mut self, accumulate: bool) -> Result<LossComponents> {
        let mut streams = self.streams.clone();
        let inputs = ObjectiveInputs {
            source: &self.source,
            target: &self.target,
            candidates: self.candidates.as_deref(),
            label_items: self.label_items.as_ref(),
        };
        let codes = match &self.sdae {
            Some(s) => ItemCodes::Joint(s),
            None => ItemCodes::Frozen,
        };
        let (parts, tape) = forward_objective(&self.model, codes, &inputs, &self.weights, &self.options, streams.as_mut())?;
        if accumulate {
            backward_objective(tape, &mut self.model, self.sdae.as_mut(), &self.weights)?;
        }
        Ok(parts)
    }
}

impl LossGraph for ObjectiveGraph {
    fn loss(&mut self, accumulate: bool) -> Result<f64> {
        self.evaluate(accumulate).map(|p| p.total)
    }

    fn loss_terms(&mut self, accumulate: bool) -> Result<Vec<f64>> {
        let p = self.evaluate(accumulate)?;
        let w = self.weights;
        Ok(vec![
            p.task,
            w.alpha * p.recon,
            w.beta * p.difference,
            w.gamma * p.similarity,
            w.lambda_item * p.item,
            w.lambda_ir * p.ir,
            w.weight_decay * p.weight_norm,
        ])
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.model.visit_params(&mut |name, _, p| f(name, p));
        if let Some(s) = &mut self.sdae {
            s.visit_params(&mut |name, _, p| f(name, p));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    fn toy_graph(seed: u64) -> ObjectiveGraph {
        ObjectiveGraph::toy(seed).unwrap()
    }

    #[test]
    fn zero_weights_leave_task_loss() {
        let mut g = toy_graph(1);
        g.weights = LossWeights::task_only();
        let p = g.evaluate(false).unwrap();
        assert_eq!(p.total, p.task);
        assert!(p.recon > 0.0 && p.similarity > 0.0 && p.ir > 0.0);
    }

    #[test]
    fn total_combines_components() {
        let mut g = toy_graph(2);
        let p = g.evaluate(false).unwrap();
        let w = g.weights;
        let expect = p.task
            + w.alpha * p.recon
            + w.beta * p.difference
            + w.gamma * p.similarity
            + w.lambda_item * p.item
            + w.lambda_ir * p.ir
            + w.weight_decay * p.weight_norm;
        assert_eq!(p.total, expect);
        assert!(p.total.is_finite());
    }

    #[test]
    fn full_objective_gradient_check() {
        for seed in [3, 12] {
            let mut g = toy_graph(seed);
            g.options.grl = GrlMode::Identity;
            let r = grad_check(&mut g, &ObjectiveGraph::check_options(seed)).unwrap();
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn reversal_negates_shared_encoder_gradient_exactly() {
        let grads = |grl| {
            let mut g = toy_graph(4);
            g.weights = LossWeights {
                gamma: 100.0,
                ..LossWeights::task_only()
            };
            g.options.grl = grl;
            // a zero classifier output layer cuts the task path into the encoder
            let last = g.model.classifier.layers().len() - 1;
            g.model.classifier.layers_mut()[last].weight.value.fill(0.0);
            g.model.zero_grad();
            g.evaluate(true).unwrap();
            g.model.shared_encoder.params().map(|(_, p)| p.grad.clone()).collect::<Vec<_>>()
        };
        let rev = grads(GrlMode::Reverse);
        let id = grads(GrlMode::Identity);
        assert!(id.iter().any(|m| m.as_slice().iter().any(|v| *v != 0.0)));
        for (r, i) in rev.iter().zip(&id) {
            assert_eq!(r, &i.neg());
        }
    }

    #[test]
    fn sampled_softmax_with_every_class_matches_full() {
        let mut g = toy_graph(5);
        let full = g.evaluate(false).unwrap().task;
        g.candidates = Some((0..7).collect());
        assert!((g.evaluate(false).unwrap().task - full).abs() < 1e-9);
    }

    fn private_grads(g: &mut ObjectiveGraph, domain: Domain) -> Vec<Matrix> {
        g.model.zero_grad();
        g.evaluate(true).unwrap();
        g.model.private_encoder(domain).params().map(|(_, p)| p.grad.clone()).collect()
    }

    #[test]
    fn private_encoders_only_see_their_own_domain() {
        let mut base = toy_graph(6);
        let mut other_source = toy_graph(6);
        other_source.source.inputs = uniform_rows(4, 20, &mut Rng::new(99));
        assert_eq!(
            private_grads(&mut base, Domain::Target),
            private_grads(&mut other_source, Domain::Target)
        );
        let mut other_target = toy_graph(6);
        other_target.target.inputs = uniform_rows(4, 20, &mut Rng::new(98));
        assert_eq!(
            private_grads(&mut base, Domain::Source),
            private_grads(&mut other_target, Domain::Source)
        );
        assert_ne!(
            private_grads(&mut base, Domain::Source),
            private_grads(&mut other_source, Domain::Source)
        );
    }

    #[test]
    fn wrong_domain_batches_error() {
        let mut g = toy_graph(7);
        std::mem::swap(&mut g.source, &mut g.target);
        assert!(matches!(g.evaluate(false), Err(Error::MixedDomain)));
    }

    #[test]
    fn missing_candidate_label_errors() {
        let mut g = toy_graph(8);
        g.candidates = Some(vec![0, 1, 2]);
        assert!(g.evaluate(false).is_err());
    }
}
