//! Central-difference verification of analytic gradients.

use super::loss::softmax_ce_batch;
use super::{Activation, Matrix, Mlp, Mode, Param, Rng};
use crate::{Error, Result};

/// A scalar loss over a set of named parameters.
pub trait LossGraph {
    /// Evaluates the loss at the current parameter values. With `accumulate`
    /// set, analytic gradients are added into every [`Param::grad`].
    fn loss(&mut self, accumulate: bool) -> Result<f64>;

    /// The loss split into additive (already weighted) terms. Differencing
    /// each term separately keeps the rounding of a large total out of the
    /// numeric gradient of parameters that only reach small terms.
    fn loss_terms(&mut self, accumulate: bool) -> Result<Vec<f64>> {
        Ok(vec![self.loss(accumulate)?])
    }

    /// Visits every parameter in a stable order.
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param));
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Entries compared in tensors larger than this are a seeded sample of
    /// this many; `None` compares everything.
    pub max_entries_per_param: Option<usize>,
    /// Denominator floor of the relative error, so entries whose true
    /// gradient is ~0 are judged on absolute error.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            max_entries_per_param: None,
            abs_floor: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_entry: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked_entries: usize,
    pub params: usize,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn grad_check<G: LossGraph + ?Sized>(
    graph: &mut G,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(opts.eps > 0.0 && opts.eps <= 1e-2) {
        return Err(Error::Config(format!("eps {} outside (0, 1e-2]", opts.eps)));
    }
    graph.visit_params(&mut |_, p| p.zero_grad());
    let base = graph.loss_terms(true)?;
    let again = graph.loss_terms(false)?;
    if base.len() != again.len() || base.iter().zip(&again).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err(Error::NonDeterministic {
            first: base.iter().sum(),
            second: again.iter().sum(),
        });
    }

    let mut analytic: Vec<(String, Matrix)> = Vec::new();
    graph.visit_params(&mut |name, p| analytic.push((name.to_string(), p.grad.clone())));

    let mut rng = Rng::new(opts.seed).fork("gradcheck");
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_entry: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked_entries: 0,
        params: analytic.len(),
    };

    for (pi, (name, grad)) in analytic.iter().enumerate() {
        let entries: Vec<usize> = match opts.max_entries_per_param {
            Some(cap) if grad.len() > cap => (0..cap).map(|_| rng.below(grad.len())).collect(),
            _ => (0..grad.len()).collect(),
        };
        for entry in entries {
            let original = read_entry(graph, pi, entry);
            write_entry(graph, pi, entry, original + opts.eps);
            let plus = graph.loss_terms(false)?;
            write_entry(graph, pi, entry, original - opts.eps);
            let minus = graph.loss_terms(false)?;
            write_entry(graph, pi, entry, original);

            let numeric = plus
                .iter()
                .zip(&minus)
                .map(|(p, m)| (p - m) / (2.0 * opts.eps))
                .sum::<f64>();
            let a = grad.as_slice()[entry];
            let err = relative_error(a, numeric, opts.abs_floor);
            report.checked_entries += 1;
            if err > report.max_rel_error || !err.is_finite() {
                report.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
                report.worst_param = name.clone();
                report.worst_entry = entry;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn read_entry<G: LossGraph + ?Sized>(graph: &mut G, target: usize, entry: usize) -> f64 {
    let mut idx = 0;
    let mut out = 0.0;
    graph.visit_params(&mut |_, p| {
        if idx == target {
            out = p.value.as_slice()[entry];
        }
        idx += 1;
    });
    out
}

fn write_entry<G: LossGraph + ?Sized>(graph: &mut G, target: usize, entry: usize, value: f64) {
    let mut idx = 0;
    graph.visit_params(&mut |_, p| {
        if idx == target {
            p.value.as_mut_slice()[entry] = value;
        }
        idx += 1;
    });
}

/// Summed softmax cross-entropy of an MLP classifier with frozen dropout
/// masks (each evaluation replays the same dropout stream).
pub struct SoftmaxMlpGraph {
    pub mlp: Mlp,
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub dropout: Rng,
}

impl SoftmaxMlpGraph {
    /// A 20 -> 16 -> 16 -> 7 ELU network with dropout 0.5 on four examples.
    pub fn toy(seed: u64) -> Result<Self> {
        let root = Rng::new(seed);
        let mut init = root.fork("init");
        let mut mlp = Mlp::new(&[20, 16, 16, 7], Activation::Identity, 0.5, &mut init)?;
        for l in mlp.layers_mut() {
            l.bias.value.as_mut_slice().iter_mut().for_each(|v| *v = 0.1 * init.normal());
        }
        let mut data = root.fork("data");
        let mut inputs = Matrix::zeros(4, 20);
        inputs.as_mut_slice().iter_mut().for_each(|v| *v = data.uniform());
        Ok(SoftmaxMlpGraph {
            mlp,
            inputs,
            labels: vec![1, 4, 6, 4],
            dropout: root.fork("dropout"),
        })
    }
}

impl LossGraph for SoftmaxMlpGraph {
    fn loss(&mut self, accumulate: bool) -> Result<f64> {
        let mut rng = self.dropout.clone();
        let (logits, cache) = self.mlp.forward(&self.inputs, Mode::Train(&mut rng))?;
        let (l, d) = softmax_ce_batch(&logits, &self.labels)?;
        if accumulate {
            self.mlp.backward(&cache, d, false);
        }
        Ok(l)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.mlp.visit_params("mlp", &mut |name, _, p| f(name, p));
    }
}
