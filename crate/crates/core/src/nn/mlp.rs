//! Fully-connected layers and stacks of them.
//!
//! A [`Dense`] layer computes `y = dropout(act(x W + b))` with `W` stored as
//! `(in_dim, out_dim)` so that batches are row-major `(n, in_dim)` matrices.
//! Forward passes return an [`MlpCache`]; backward passes consume it and
//! accumulate into each [`Param::grad`]. One network may be run several times
//! per step (for example on a source and a target batch) as long as each run
//! keeps its own cache.

use super::dropout::{check_rate, dropout_matrix};
use super::{he_init, Activation, Matrix, Param, Rng};
use crate::{Error, Result};

/// Inputs sparser than this go through the sparse product kernels.
const SPARSE_DENSITY: f64 = 0.2;

/// `x W` choosing the sparse kernel for sparse `x`.
fn affine_product(x: &Matrix, w: &Matrix, sparse: bool) -> Matrix {
    let mut z = Matrix::zeros(x.rows(), w.cols());
    if sparse {
        x.sparse_matmul_acc(w, &mut z);
    } else {
        Matrix::gemm(1.0, x, false, w, false, 0.0, &mut z);
    }
    z
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// Forward-pass mode. Dropout only fires in `Train`.
pub enum Mode<'a> {
    Inference,
    Train(&'a mut Rng),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    pub fn reborrow(&mut self) -> Mode<'_> {
        match self {
            Mode::Inference => Mode::Inference,
            Mode::Train(rng) => Mode::Train(rng),
        }
    }
}

impl<'a> From<Option<&'a mut Rng>> for Mode<'a> {
    fn from(rng: Option<&'a mut Rng>) -> Self {
        match rng {
            Some(r) => Mode::Train(r),
            None => Mode::Inference,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    pub activation: Activation,
    /// Dropout rate applied to this layer's activated output.
    pub dropout: f64,
}

impl Dense {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        check_rate(dropout)?;
        Ok(Dense {
            weight: Param::new(he_init(in_dim, in_dim, out_dim, rng)?),
            bias: Param::zeros(1, out_dim),
            activation,
            dropout,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }
}

#[derive(Clone, Debug, Default)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    masks: Vec<Option<Matrix>>,
    /// The first layer used the sparse kernel.
    sparse_input: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// Builds `dims[0] -> dims[1] -> ... -> dims[last]` with ELU hidden units,
    /// `hidden_dropout` after every hidden layer and `output` on the last
    /// layer (which never drops out).
    pub fn new(
        dims: &[usize],
        output: Activation,
        hidden_dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("an MLP needs at least two dims".into()));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                if i == last {
                    Dense::new(w[0], w[1], output, 0.0, rng)
                } else {
                    Dense::new(w[0], w[1], Activation::Elu, hidden_dropout, rng)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("MLP layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(format!(
                    "layer dims do not chain: {} -> {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        for l in &layers {
            check_rate(l.dropout)?;
            if l.bias.shape() != (1, l.out_dim()) {
                return Err(Error::shape("bias must be a 1 x out_dim row"));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Sets every hidden-layer dropout rate (the output layer keeps none).
    pub fn set_hidden_dropout(&mut self, rate: f64) -> Result<()> {
        check_rate(rate)?;
        let last = self.layers.len() - 1;
        for l in &mut self.layers[..last] {
            l.dropout = rate;
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix, mut mode: Mode<'_>) -> Result<(Matrix, MlpCache)> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
            sparse_input: false,
        };
        let mut current = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let sparse = l == 0 && current.density() < SPARSE_DENSITY;
            let mut z = affine_product(&current, &layer.weight.value, sparse);
            z.add_row_vector(layer.bias.value.as_slice());
            let mut a = match layer.activation {
                Activation::Identity => z.clone(),
                act => z.map(|v| act.apply(v)),
            };
            let mask = match (&mut mode, layer.dropout > 0.0) {
                (Mode::Train(rng), true) => Some(dropout_matrix(&mut a, layer.dropout, rng)?),
                _ => None,
            };
            cache.sparse_input |= sparse;
            cache.inputs.push(std::mem::replace(&mut current, a));
            cache.pre.push(z);
            cache.masks.push(mask);
        }
        Ok((current, cache))
    }

    /// Inference-mode forward pass without a cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut current = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let sparse = l == 0 && current.density() < SPARSE_DENSITY;
            let mut z = affine_product(&current, &layer.weight.value, sparse);
            z.add_row_vector(layer.bias.value.as_slice());
            if layer.activation != Activation::Identity {
                let act = layer.activation;
                z.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            current = z;
        }
        Ok(current)
    }

    /// Backpropagates `d_out` (gradient w.r.t. the network output) through a
    /// cached forward pass, accumulating parameter gradients. Returns the
    /// gradient w.r.t. the input when `want_input_grad` is set.
    pub fn backward(
        &mut self,
        cache: &MlpCache,
        d_out: Matrix,
        want_input_grad: bool,
    ) -> Option<Matrix> {
        assert_eq!(cache.pre.len(), self.layers.len(), "cache from another network");
        let mut d = d_out;
        for (l, layer) in self.layers.iter_mut().enumerate().rev() {
            if let Some(mask) = &cache.masks[l] {
                d.hadamard_assign(mask);
            }
            if layer.activation != Activation::Identity {
                let act = layer.activation;
                for (g, z) in d.as_mut_slice().iter_mut().zip(cache.pre[l].as_slice()) {
                    *g *= act.derivative(*z);
                }
            }
            if l == 0 && cache.sparse_input {
                cache.inputs[0].sparse_t_matmul_acc(&d, &mut layer.weight.grad);
            } else {
                Matrix::gemm(1.0, &cache.inputs[l], true, &d, false, 1.0, &mut layer.weight.grad);
            }
            for (b, s) in layer.bias.grad.as_mut_slice().iter_mut().zip(d.col_sums()) {
                *b += s;
            }
            if l > 0 || want_input_grad {
                let mut d_in = Matrix::zeros(d.rows(), layer.in_dim());
                Matrix::gemm(1.0, &d, false, &layer.weight.value, true, 0.0, &mut d_in);
                d = d_in;
            } else {
                return None;
            }
        }
        Some(d)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamKind, &Param)> {
        self.layers
            .iter()
            .flat_map(|l| [(ParamKind::Weight, &l.weight), (ParamKind::Bias, &l.bias)])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (ParamKind, &mut Param)> {
        self.layers.iter_mut().flat_map(|l| {
            [
                (ParamKind::Weight, &mut l.weight),
                (ParamKind::Bias, &mut l.bias),
            ]
        })
    }

    /// Visits parameters as `prefix.<layer>.weight` / `prefix.<layer>.bias`.
    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Param)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(&format!("{prefix}.{i}.weight"), ParamKind::Weight, &mut l.weight);
            f(&format!("{prefix}.{i}.bias"), ParamKind::Bias, &mut l.bias);
        }
    }

    /// Sum of squared entries over weight matrices (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        self.params()
            .filter(|(k, _)| *k == ParamKind::Weight)
            .map(|(_, p)| p.value.frobenius_sq())
            .sum()
    }

    /// Adds `2 * coeff * W` to every weight gradient.
    pub fn add_weight_decay_grad(&mut self, coeff: f64) {
        for (kind, p) in self.params_mut() {
            if kind == ParamKind::Weight {
                let w = p.value.clone();
                p.grad.axpy(2.0 * coeff, &w);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().for_each(|(_, p)| p.zero_grad());
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_chain_and_biases_start_at_zero() {
        let net = Mlp::new(&[5, 8, 3], Activation::Identity, 0.5, &mut Rng::new(1)).unwrap();
        assert_eq!((net.input_dim(), net.output_dim()), (5, 3));
        assert_eq!(net.layers()[0].dropout, 0.5);
        assert_eq!(net.layers()[1].dropout, 0.0);
        assert!(net
            .params()
            .filter(|(k, _)| *k == ParamKind::Bias)
            .all(|(_, p)| p.value.as_slice().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn from_layers_rejects_broken_chain() {
        let mut rng = Rng::new(2);
        let a = Dense::new(4, 6, Activation::Elu, 0.0, &mut rng).unwrap();
        let b = Dense::new(5, 2, Activation::Elu, 0.0, &mut rng).unwrap();
        assert!(Mlp::from_layers(vec![a, b]).is_err());
    }

    #[test]
    fn predict_equals_inference_forward() {
        let net = Mlp::new(&[4, 7, 2], Activation::Elu, 0.5, &mut Rng::new(3)).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, -0.3, 0.7, 1.1], vec![1.0, 0.0, -2.0, 0.5]]).unwrap();
        let (y, _) = net.forward(&x, Mode::Inference).unwrap();
        assert_eq!(y, net.predict(&x).unwrap());
    }

    #[test]
    fn sparse_inputs_take_the_same_values() {
        let mut net = Mlp::new(&[40, 6, 3], Activation::Elu, 0.0, &mut Rng::new(4)).unwrap();
        let mut x = Matrix::zeros(3, 40);
        x.set(0, 5, 0.7);
        x.set(1, 39, -1.2);
        x.set(2, 0, 0.4);
        x.set(2, 17, 0.9);
        let mut dense_net = net.clone();
        let (y, cache) = net.forward(&x, Mode::Inference).unwrap();
        assert!(cache.sparse_input);
        // Force the dense kernel by filling in negligible entries elsewhere.
        let mut xd = x.clone();
        xd.as_mut_slice().iter_mut().filter(|v| **v == 0.0).for_each(|v| *v = 1e-300);
        let (yd, cache_d) = dense_net.forward(&xd, Mode::Inference).unwrap();
        assert!(!cache_d.sparse_input);
        assert!(y.sub(&yd).as_slice().iter().all(|v| v.abs() < 1e-12));
        let g = Matrix::filled(3, 3, 0.3);
        net.backward(&cache, g.clone(), false);
        dense_net.backward(&cache_d, g, false);
        let a = &net.layers()[0].weight.grad;
        let b = &dense_net.layers()[0].weight.grad;
        assert!(a.sub(b).as_slice().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(y, net.predict(&x).unwrap());
    }

    #[test]
    fn wrong_input_width_errors() {
        let net = Mlp::new(&[4, 2], Activation::Elu, 0.0, &mut Rng::new(3)).unwrap();
        assert!(net.predict(&Matrix::zeros(1, 3)).is_err());
    }
}
