use std::sync::Arc;

use crate::data::Domain;
use crate::nn::{he_init, loss, Activation, Adam, Matrix, Mlp, Param, ParamKind, Rng};
use crate::{Error, Result};

/// Layer widths and dropout rates. Listed widths are hidden layers; the
/// outer dimensions are fixed by the data (`input_dim`, `classes`) and by
/// `code_dim`, the width shared by every encoder output, the decoder input,
/// the classifier output and the softmax weight rows.
#[derive(Clone, Debug, PartialEq)]
pub struct DsnArch {
    pub input_dim: usize,
    pub classes: usize,
    pub code_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub classifier_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub encoder_dropout: f64,
    pub decoder_dropout: f64,
    pub classifier_dropout: f64,
    pub discriminator_dropout: f64,
}

impl DsnArch {
    pub fn new(input_dim: usize, classes: usize) -> Self {
        DsnArch {
            input_dim,
            classes,
            code_dim: 64,
            encoder_hidden: vec![256, 128, 128],
            decoder_hidden: vec![128, 128, 256],
            classifier_hidden: vec![256, 256, 256],
            discriminator_hidden: vec![1024, 1024],
            encoder_dropout: 0.75,
            decoder_dropout: 0.5,
            classifier_dropout: 0.5,
            discriminator_dropout: 0.5,
        }
    }

    fn chain(first: usize, hidden: &[usize], last: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(first);
        dims.extend_from_slice(hidden);
        dims.push(last);
        dims
    }
}

/// Parameter values (no gradients or optimizer state) in visit order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSnapshot(pub Vec<Matrix>);

#[derive(Clone, Debug, PartialEq)]
pub struct DsnModel {
    pub shared_encoder: Mlp,
    pub private_source: Mlp,
    pub private_target: Mlp,
    pub decoder: Mlp,
    pub classifier: Mlp,
    pub discriminator: Mlp,
    /// Softmax weights, one `code_dim` row per item.
    pub softmax_weights: Param,
}

/// One homogeneous-domain mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    /// Class labels; present exactly when the batch is from the source domain.
    pub labels: Option<Vec<usize>>,
    pub domains: Vec<Domain>,
    /// Fixed item codes for the labels (row i pairs with label i).
    pub item_codes: Option<Matrix>,
}

impl Batch {
    pub fn source(inputs: Matrix, labels: Vec<usize>) -> Self {
        let n = inputs.rows();
        Batch {
            inputs,
            labels: Some(labels),
            domains: vec![Domain::Source; n],
            item_codes: None,
        }
    }

    pub fn target(inputs: Matrix) -> Self {
        let n = inputs.rows();
        Batch {
            inputs,
            labels: None,
            domains: vec![Domain::Target; n],
            item_codes: None,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    /// Checks homogeneity, label presence and row counts against `domain`.
    pub fn check(&self, domain: Domain) -> Result<()> {
        if self.domains.len() != self.inputs.rows() || self.domains.iter().any(|d| *d != domain) {
            return Err(Error::MixedDomain);
        }
        match (&self.labels, domain) {
            (Some(l), Domain::Source) if l.len() == self.inputs.rows() => {}
            (None, Domain::Target) => {}
            (Some(_), Domain::Source) => return Err(Error::shape("label count differs from batch size")),
            _ => return Err(Error::Config("labels must be present exactly for source batches".into())),
        }
        if let Some(codes) = &self.item_codes {
            if codes.rows() != self.inputs.rows() {
                return Err(Error::shape("item code rows differ from batch size"));
            }
        }
        Ok(())
    }

    pub fn domain_labels(&self) -> Vec<f64> {
        self.domains.iter().map(|d| d.label()).collect()
    }
}

/// All activations of a full forward pass over one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct DsnActivations {
    pub h_c: Matrix,
    pub h_p: Matrix,
    pub reconstruction: Matrix,
    pub u: Matrix,
    /// Full-catalog logits; source batches only.
    pub logits: Option<Matrix>,
    /// Discriminator probability of the target domain.
    pub d_hat: Vec<f64>,
}

impl DsnModel {
    pub fn new(arch: &DsnArch, rng: &mut Rng) -> Result<Self> {
        if arch.input_dim == 0 || arch.classes == 0 || arch.code_dim == 0 {
            return Err(Error::Config("input_dim, classes and code_dim must be positive".into()));
        }
        let enc_dims = DsnArch::chain(arch.input_dim, &arch.encoder_hidden, arch.code_dim);
        let shared_encoder = Mlp::new(&enc_dims, Activation::Elu, arch.encoder_dropout, &mut rng.fork("init.shared"))?;
        let private_source = Mlp::new(&enc_dims, Activation::Elu, arch.encoder_dropout, &mut rng.fork("init.private_source"))?;
        let private_target = Mlp::new(&enc_dims, Activation::Elu, arch.encoder_dropout, &mut rng.fork("init.private_target"))?;
        let decoder = Mlp::new(
            &DsnArch::chain(arch.code_dim, &arch.decoder_hidden, arch.input_dim),
            Activation::Elu,
            arch.decoder_dropout,
            &mut rng.fork("init.decoder"),
        )?;
        let classifier = Mlp::new(
            &DsnArch::chain(arch.code_dim, &arch.classifier_hidden, arch.code_dim),
            Activation::Elu,
            arch.classifier_dropout,
            &mut rng.fork("init.classifier"),
        )?;
        let discriminator = Mlp::new(
            &DsnArch::chain(arch.code_dim, &arch.discriminator_hidden, 1),
            Activation::Identity,
            arch.discriminator_dropout,
            &mut rng.fork("init.discriminator"),
        )?;
        let softmax_weights = Param::new(he_init(
            arch.code_dim,
            arch.classes,
            arch.code_dim,
            &mut rng.fork("init.softmax"),
        )?);
        let model = DsnModel {
            shared_encoder,
            private_source,
            private_target,
            decoder,
            classifier,
            discriminator,
            softmax_weights,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks that all sub-network dimensions fit together.
    pub fn validate(&self) -> Result<()> {
        let code = self.code_dim();
        let input = self.input_dim();
        let ok = [&self.private_source, &self.private_target]
            .iter()
            .all(|e| e.input_dim() == input && e.output_dim() == code)
            && self.decoder.input_dim() == code
            && self.decoder.output_dim() == input
            && self.classifier.input_dim() == code
            && self.classifier.output_dim() == code
            && self.discriminator.input_dim() == code
            && self.discriminator.output_dim() == 1
            && self.softmax_weights.value.cols() == code;
        if !ok {
            return Err(Error::shape("sub-network dimensions do not fit together"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.shared_encoder.input_dim()
    }

    pub fn code_dim(&self) -> usize {
        self.shared_encoder.output_dim()
    }

    pub fn classes(&self) -> usize {
        self.softmax_weights.value.rows()
    }

    pub fn private_encoder(&self, domain: Domain) -> &Mlp {
        match domain {
            Domain::Source => &self.private_source,
            Domain::Target => &self.private_target,
        }
    }

    pub fn private_encoder_mut(&mut self, domain: Domain) -> &mut Mlp {
        match domain {
            Domain::Source => &mut self.private_source,
            Domain::Target => &mut self.private_target,
        }
    }

    /// Full forward pass. With `rng` set, dropout fires as in training
    /// (a single stream is shared by all sub-networks here).
    pub fn forward(&self, batch: &Batch, domain: Domain, mut rng: Option<&mut Rng>) -> Result<DsnActivations> {
        batch.check(domain)?;
        let (h_c, _) = self.shared_encoder.forward(&batch.inputs, rng.as_deref_mut().into())?;
        let (h_p, _) = self.private_encoder(domain).forward(&batch.inputs, rng.as_deref_mut().into())?;
        let (reconstruction, _) = self.decoder.forward(&h_c.add(&h_p), rng.as_deref_mut().into())?;
        let (u, _) = self.classifier.forward(&h_c, rng.as_deref_mut().into())?;
        let logits = match domain {
            Domain::Source => Some(u.matmul_t(&self.softmax_weights.value)),
            Domain::Target => None,
        };
        let (z, _) = self.discriminator.forward(&h_c, rng.as_deref_mut().into())?;
        let d_hat = z.as_slice().iter().map(|&v| loss::sigmoid(v)).collect();
        Ok(DsnActivations {
            h_c,
            h_p,
            reconstruction,
            u,
            logits,
            d_hat,
        })
    }

    /// User representation `u = G(E_c(x))` at inference.
    pub fn user_embedding(&self, x: &Matrix) -> Result<Matrix> {
        let h_c = self.shared_encoder.predict(x)?;
        self.classifier.predict(&h_c)
    }

    /// Inference logits over the whole catalog, `(n, classes)`.
    pub fn scores(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.user_embedding(x)?.matmul_t(&self.softmax_weights.value))
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, ParamKind, &mut Param)) {
        self.shared_encoder.visit_params("shared_encoder", f);
        self.private_source.visit_params("private_source", f);
        self.private_target.visit_params("private_target", f);
        self.decoder.visit_params("decoder", f);
        self.classifier.visit_params("classifier", f);
        self.discriminator.visit_params("discriminator", f);
        f("softmax_weights", ParamKind::Weight, &mut self.softmax_weights);
    }

    fn networks(&self) -> [&Mlp; 6] {
        [
            &self.shared_encoder,
            &self.private_source,
            &self.private_target,
            &self.decoder,
            &self.classifier,
            &self.discriminator,
        ]
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, _, p| p.zero_grad());
    }

    pub fn adam_step(&mut self, adam: &Adam, t: u64) {
        self.visit_params(&mut |_, _, p| adam.step(p, t));
    }

    pub fn weight_sq_norm(&self) -> f64 {
        self.networks().iter().map(|n| n.weight_sq_norm()).sum::<f64>()
            + self.softmax_weights.value.frobenius_sq()
    }

    pub fn add_weight_decay_grad(&mut self, coeff: f64) {
        self.visit_params(&mut |_, kind, p| {
            if kind == ParamKind::Weight {
                let w = p.value.clone();
                p.grad.axpy(2.0 * coeff, &w);
            }
        });
    }

    pub fn snapshot(&self) -> Arc<ParamSnapshot> {
        let mut values = Vec::new();
        for net in self.networks() {
            values.extend(net.params().map(|(_, p)| p.value.clone()));
        }
        values.push(self.softmax_weights.value.clone());
        Arc::new(ParamSnapshot(values))
    }

    /// Overwrites parameter values from a snapshot of an identically shaped model.
    pub fn restore(&mut self, snapshot: &ParamSnapshot) -> Result<()> {
        let mut expected = 0;
        self.visit_params(&mut |_, _, _| expected += 1);
        if expected != snapshot.0.len() {
            return Err(Error::shape("snapshot has a different parameter count"));
        }
        let mut idx = 0;
        let mut err = None;
        self.visit_params(&mut |_, _, p| {
            let v = &snapshot.0[idx];
            if v.shape() != p.shape() {
                err = Some(Error::shape("snapshot tensor shape differs"));
            } else {
                p.value = v.clone();
            }
            idx += 1;
        });
        err.map_or(Ok(()), Err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (DsnModel, Batch, Batch) {
        let arch = DsnArch::new(20, 7);
        let model = DsnModel::new(&arch, &mut Rng::new(3)).unwrap();
        let mut r = Rng::new(8);
        let xs = Matrix::from_vec(4, 20, (0..80).map(|_| r.uniform()).collect()).unwrap();
        let xt = Matrix::from_vec(4, 20, (0..80).map(|_| r.uniform()).collect()).unwrap();
        (model, Batch::source(xs, vec![0, 3, 6, 3]), Batch::target(xt))
    }

    #[test]
    fn forward_shapes() {
        let (model, src, tgt) = toy();
        let a = model.forward(&src, Domain::Source, None).unwrap();
        assert_eq!(a.h_c.shape(), (4, 64));
        assert_eq!(a.h_p.shape(), (4, 64));
        assert_eq!(a.u.shape(), (4, 64));
        assert_eq!(a.reconstruction.shape(), (4, 20));
        assert_eq!(a.logits.as_ref().unwrap().shape(), (4, 7));
        assert_eq!(a.d_hat.len(), 4);
        let b = model.forward(&tgt, Domain::Target, None).unwrap();
        assert!(b.logits.is_none());
    }

    #[test]
    fn zero_weights_give_zero_codes() {
        let (mut model, src, _) = toy();
        model.visit_params(&mut |_, _, p| p.value.fill(0.0));
        let a = model.forward(&src, Domain::Source, None).unwrap();
        assert!(a.h_c.as_slice().iter().all(|v| *v == 0.0));
        assert!(a.h_p.as_slice().iter().all(|v| *v == 0.0));
        assert!(a.reconstruction.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn inference_is_deterministic() {
        let (model, src, _) = toy();
        assert_eq!(
            model.forward(&src, Domain::Source, None).unwrap(),
            model.forward(&src, Domain::Source, None).unwrap()
        );
    }

    #[test]
    fn mixed_or_mismatched_batches_error() {
        let (model, mut src, tgt) = toy();
        assert!(matches!(model.forward(&tgt, Domain::Source, None), Err(Error::MixedDomain)));
        src.domains[1] = Domain::Target;
        assert!(matches!(model.forward(&src, Domain::Source, None), Err(Error::MixedDomain)));
    }

    #[test]
    fn snapshot_restore_round_trip() {
        let (mut model, src, _) = toy();
        let snap = model.snapshot();
        let before = model.scores(&src.inputs).unwrap();
        model.visit_params(&mut |_, _, p| p.value.fill(0.1));
        model.restore(&snap).unwrap();
        assert_eq!(model.scores(&src.inputs).unwrap(), before);
    }
}
