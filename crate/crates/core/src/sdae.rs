//! Stacked denoising autoencoder over item feature vectors.
//!
//! Items are corrupted by mask-out noise (entries zeroed, survivors left
//! unscaled), encoded to a low-dimensional code and decoded back; training
//! minimizes the summed squared reconstruction error against the clean input.
//! The codes anchor the classifier's softmax weights.

use crate::features::SparseVec;
use crate::nn::{loss, Activation, Adam, LossGraph, Matrix, Mlp, MlpCache, Mode, ParamKind, Param, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SdaeArch {
    pub hidden: usize,
    pub code_dim: usize,
    /// Mask-out probability of each input entry during training.
    pub input_corruption: f64,
    pub hidden_dropout: f64,
}

impl Default for SdaeArch {
    fn default() -> Self {
        SdaeArch {
            hidden: 256,
            code_dim: 64,
            input_corruption: 0.9,
            hidden_dropout: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdaeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SdaeTrainConfig {
    fn default() -> Self {
        SdaeTrainConfig {
            epochs: 5,
            batch_size: 128,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub input_corruption: f64,
}

/// Mask-out corruption: each entry is zeroed with probability `rate`.
pub fn corrupt(x: &[f64], rate: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    check_corruption(rate)?;
    Ok(x.iter()
        .map(|&v| if rng.uniform() < rate { 0.0 } else { v })
        .collect())
}

pub fn corrupt_matrix(x: &Matrix, rate: f64, rng: &mut Rng) -> Result<Matrix> {
    check_corruption(rate)?;
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        if rng.uniform() < rate {
            *v = 0.0;
        }
    }
    Ok(out)
}

fn check_corruption(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    Ok(())
}

/// Activations of one autoencoder pass, kept for backpropagation.
pub struct SdaeForward {
    pub code: Matrix,
    pub reconstruction: Matrix,
    encoder_cache: MlpCache,
    decoder_cache: MlpCache,
}

impl SdaeModel {
    pub fn new(item_dim: usize, arch: &SdaeArch, rng: &mut Rng) -> Result<Self> {
        check_corruption(arch.input_corruption)?;
        let encoder = Mlp::new(
            &[item_dim, arch.hidden, arch.code_dim],
            Activation::Elu,
            arch.hidden_dropout,
            rng,
        )?;
        let decoder = Mlp::new(
            &[arch.code_dim, arch.hidden, item_dim],
            Activation::Elu,
            arch.hidden_dropout,
            rng,
        )?;
        Ok(SdaeModel {
            encoder,
            decoder,
            input_corruption: arch.input_corruption,
        })
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp, input_corruption: f64) -> Result<Self> {
        check_corruption(input_corruption)?;
        if encoder.output_dim() != decoder.input_dim() || decoder.output_dim() != encoder.input_dim() {
            return Err(Error::shape("encoder and decoder dims do not mirror each other"));
        }
        Ok(SdaeModel {
            encoder,
            decoder,
            input_corruption,
        })
    }

    pub fn item_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn code_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Encodes an (already corrupted) batch and decodes it. Hidden dropout
    /// fires only in `Mode::Train`.
    pub fn apply(&self, x_corrupted: &Matrix, mut mode: Mode<'_>) -> Result<SdaeForward> {
        let (code, encoder_cache) = self.encoder.forward(x_corrupted, mode.reborrow())?;
        let (reconstruction, decoder_cache) = self.decoder.forward(&code, mode)?;
        Ok(SdaeForward {
            code,
            reconstruction,
            encoder_cache,
            decoder_cache,
        })
    }

    /// Inference-mode code of clean inputs.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.encoder.predict(x)
    }

    /// Accumulates gradients from the reconstruction and, optionally, the code.
    pub fn backward(&mut self, fwd: &SdaeForward, d_reconstruction: Matrix, d_code: Option<&Matrix>) {
        let mut d = self
            .decoder
            .backward(&fwd.decoder_cache, d_reconstruction, true)
            .expect("input grad requested");
        if let Some(extra) = d_code {
            d.axpy(1.0, extra);
        }
        self.encoder.backward(&fwd.encoder_cache, d, false);
    }

    /// Backpropagates a gradient w.r.t. the code of an encoder-only pass.
    pub fn backward_code(&mut self, encoder_cache: &MlpCache, d_code: Matrix) {
        self.encoder.backward(encoder_cache, d_code, false);
    }

    pub fn encode_with_cache(&self, x: &Matrix, mode: Mode<'_>) -> Result<(Matrix, MlpCache)> {
        self.encoder.forward(x, mode)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, ParamKind, &mut Param)) {
        self.encoder.visit_params("sdae.encoder", f);
        self.decoder.visit_params("sdae.decoder", f);
    }

    pub fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.decoder.zero_grad();
    }

    pub fn weight_sq_norm(&self) -> f64 {
        self.encoder.weight_sq_norm() + self.decoder.weight_sq_norm()
    }

    pub fn add_weight_decay_grad(&mut self, coeff: f64) {
        self.encoder.add_weight_decay_grad(coeff);
        self.decoder.add_weight_decay_grad(coeff);
    }

    pub fn adam_step(&mut self, adam: &Adam, t: u64) {
        self.visit_params(&mut |_, _, p| adam.step(p, t));
    }
}

/// Summed squared reconstruction error `Σ ‖x - x̂‖²`.
pub fn reconstruction_loss(x: &Matrix, reconstruction: &Matrix) -> f64 {
    loss::squared_error(reconstruction, x).0
}

/// Stacks sparse rows into a dense batch.
pub fn densify(rows: &[&SparseVec], dim: usize) -> Matrix {
    let mut m = Matrix::zeros(rows.len(), dim);
    for (i, r) in rows.iter().enumerate() {
        r.write_dense(m.row_mut(i));
    }
    m
}

/// Random streams used by autoencoder training steps.
#[derive(Clone, Debug)]
pub struct SdaeStreams {
    pub corruption: Rng,
    pub dropout: Rng,
}

impl SdaeStreams {
    pub fn new(root: &Rng) -> Self {
        SdaeStreams {
            corruption: root.fork("sdae.corruption"),
            dropout: root.fork("sdae.dropout"),
        }
    }
}

/// One corrupted training pass over a clean batch. Accumulates reconstruction
/// gradients scaled by `weight` and returns the summed loss.
pub fn reconstruction_step(
    model: &mut SdaeModel,
    clean: &Matrix,
    streams: &mut SdaeStreams,
    weight: f64,
) -> Result<f64> {
    let noisy = corrupt_matrix(clean, model.input_corruption, &mut streams.corruption)?;
    let fwd = model.apply(&noisy, Mode::Train(&mut streams.dropout))?;
    let (l, mut grad) = loss::squared_error(&fwd.reconstruction, clean);
    if weight != 0.0 {
        grad.scale(weight);
        model.backward(&fwd, grad, None);
    }
    Ok(l)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdaeTrace {
    /// Per-epoch mean of (batch loss / batch size).
    pub epoch_losses: Vec<f64>,
}

/// Pretrains an autoencoder on item vectors with Adam.
pub fn train_sdae(
    items: &[SparseVec],
    arch: &SdaeArch,
    config: &SdaeTrainConfig,
) -> Result<(SdaeModel, SdaeTrace)> {
    let first = items.first().ok_or(Error::Empty("autoencoder training items"))?;
    let dim = first.dim();
    if items.iter().any(|v| v.dim() != dim) {
        return Err(Error::shape("item vectors differ in dimension"));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let root = Rng::new(config.seed);
    let mut model = SdaeModel::new(dim, arch, &mut root.fork("sdae.init"))?;
    let (trace, _) = continue_sdae_training(&mut model, items, config, 0)?;
    Ok((model, trace))
}

/// Runs further epochs on an existing model starting at Adam step `t0`;
/// returns the trace and the last Adam step taken.
pub fn continue_sdae_training(
    model: &mut SdaeModel,
    items: &[SparseVec],
    config: &SdaeTrainConfig,
    t0: u64,
) -> Result<(SdaeTrace, u64)> {
    if items.is_empty() {
        return Err(Error::Empty("autoencoder training items"));
    }
    let dim = model.item_dim();
    let root = Rng::new(config.seed);
    let mut order_rng = root.fork("sdae.order");
    let mut streams = SdaeStreams::new(&root);
    let adam = Adam::with_lr(config.lr);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut t = t0;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order_rng.shuffle(&mut order);
        let mut acc = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let rows: Vec<&SparseVec> = chunk.iter().map(|&i| &items[i]).collect();
            let clean = densify(&rows, dim);
            model.zero_grad();
            let l = reconstruction_step(model, &clean, &mut streams, 1.0)?;
            t += 1;
            model.adam_step(&adam, t);
            acc += l / chunk.len() as f64;
            batches += 1;
        }
        epoch_losses.push(acc / batches as f64);
    }
    Ok((SdaeTrace { epoch_losses }, t))
}

/// Per-item loss of predicting every item by the catalog mean vector.
pub fn mean_predictor_loss(items: &[SparseVec]) -> f64 {
    let Some(first) = items.first() else {
        return 0.0;
    };
    let dim = first.dim();
    let mut mean = vec![0.0; dim];
    for v in items {
        for &(i, w) in v.entries() {
            mean[i] += w;
        }
    }
    let n = items.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mean_sq: f64 = mean.iter().map(|m| m * m).sum();
    items
        .iter()
        .map(|v| {
            // ‖x - μ‖² = ‖μ‖² + Σ_i∈nz (x_i² - 2 x_i μ_i)
            mean_sq
                + v.entries()
                    .iter()
                    .map(|&(i, w)| w * w - 2.0 * w * mean[i])
                    .sum::<f64>()
        })
        .sum::<f64>()
        / n
}

/// Reconstruction loss of a corrupted batch as a [`LossGraph`], with the
/// corruption drawn once and the dropout stream replayed per evaluation.
pub struct SdaeGraph {
    pub model: SdaeModel,
    pub clean: Matrix,
    pub noisy: Matrix,
    pub dropout: Rng,
}

impl SdaeGraph {
    /// A 12 -> 256 -> 64 -> 256 -> 12 autoencoder (default architecture) on
    /// four non-negative items, corruption 0.3 so some inputs survive.
    pub fn toy(seed: u64) -> Result<Self> {
        let root = Rng::new(seed);
        let arch = SdaeArch {
            input_corruption: 0.3,
            ..SdaeArch::default()
        };
        let mut init = root.fork("init");
        let mut model = SdaeModel::new(12, &arch, &mut init)?;
        model.visit_params(&mut |_, kind, p| {
            if kind == ParamKind::Bias {
                p.value.as_mut_slice().iter_mut().for_each(|v| *v = 0.1 * init.normal());
            }
        });
        let mut data = root.fork("data");
        let mut clean = Matrix::zeros(4, 12);
        clean.as_mut_slice().iter_mut().for_each(|v| *v = data.uniform());
        let noisy = corrupt_matrix(&clean, arch.input_corruption, &mut root.fork("corruption"))?;
        Ok(SdaeGraph {
            model,
            clean,
            noisy,
            dropout: root.fork("dropout"),
        })
    }
}

impl LossGraph for SdaeGraph {
    fn loss(&mut self, accumulate: bool) -> Result<f64> {
        let mut rng = self.dropout.clone();
        let fwd = self.model.apply(&self.noisy, Mode::Train(&mut rng))?;
        let (l, grad) = loss::squared_error(&fwd.reconstruction, &self.clean);
        if accumulate {
            self.model.backward(&fwd, grad, None);
        }
        Ok(l)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.model.visit_params(&mut |name, _, p| f(name, p));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;

    #[test]
    fn reconstruction_gradients_match() {
        use crate::nn::{grad_check, GradCheckOptions};
        for seed in [0, 1] {
            let r = grad_check(&mut SdaeGraph::toy(seed).unwrap(), &GradCheckOptions::default()).unwrap();
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn zero_rate_leaves_input_alone() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(corrupt(&x, 0.0, &mut Rng::new(0)).unwrap(), x);
    }

    #[test]
    fn rate_of_one_is_rejected() {
        assert!(corrupt(&[1.0], 1.0, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn all_masks_firing_gives_zero_vector() {
        // Find a seed whose first two draws both fall below the rate.
        let rate = 0.9;
        let seed = (0..1000)
            .find(|&s| {
                let mut r = Rng::new(s);
                r.uniform() < rate && r.uniform() < rate
            })
            .unwrap();
        let out = corrupt(&[4.0, -2.0], rate, &mut Rng::new(seed)).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn surviving_fraction_matches_rate() {
        let mut rng = Rng::new(17);
        let x = vec![1.0; 10];
        let trials = 100_000;
        let mut survivors = 0usize;
        for _ in 0..trials / 10 {
            survivors += corrupt(&x, 0.9, &mut rng).unwrap().iter().filter(|v| **v != 0.0).count();
        }
        let frac = survivors as f64 / trials as f64;
        assert!((frac - 0.1).abs() < 0.01, "surviving fraction {frac}");
    }

    #[test]
    fn code_has_configured_width_and_inference_is_pure() {
        let mut rng = Rng::new(4);
        let model = SdaeModel::new(30, &SdaeArch::default(), &mut rng).unwrap();
        let x = Matrix::filled(3, 30, 0.2);
        let a = model.apply(&x, Mode::Inference).unwrap();
        let b = model.apply(&x, Mode::Inference).unwrap();
        assert_eq!(a.code.cols(), 64);
        assert_eq!(a.reconstruction.cols(), 30);
        assert_eq!(a.code, b.code);
        assert_eq!(a.reconstruction, b.reconstruction);
    }

    #[test]
    fn dim_mismatch_errors() {
        let model = SdaeModel::new(30, &SdaeArch::default(), &mut Rng::new(4)).unwrap();
        assert!(model.apply(&Matrix::zeros(1, 29), Mode::Inference).is_err());
    }

    #[test]
    fn identity_autoencoder_reaches_zero_loss() {
        let mut rng = Rng::new(0);
        let mut enc = Dense::new(1, 1, Activation::Elu, 0.0, &mut rng).unwrap();
        let mut dec = Dense::new(1, 1, Activation::Elu, 0.0, &mut rng).unwrap();
        enc.weight.value = Matrix::row_vector(&[1.0]);
        dec.weight.value = Matrix::row_vector(&[1.0]);
        let model = SdaeModel::from_parts(
            Mlp::from_layers(vec![enc]).unwrap(),
            Mlp::from_layers(vec![dec]).unwrap(),
            0.0,
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![0.5], vec![2.0]]).unwrap();
        let fwd = model.apply(&x, Mode::Inference).unwrap();
        assert_eq!(reconstruction_loss(&x, &fwd.reconstruction), 0.0);
    }

    #[test]
    fn mean_predictor_loss_matches_dense_formula() {
        let items = vec![
            SparseVec::from_entries(3, vec![(0, 1.0)]),
            SparseVec::from_entries(3, vec![(1, 2.0), (2, 1.0)]),
        ];
        // mean = [0.5, 1, 0.5]; losses 0.25+1+0.25 = 1.5 and 0.25+1+0.25 = 1.5
        assert!((mean_predictor_loss(&items) - 1.5).abs() < 1e-12);
    }
}
