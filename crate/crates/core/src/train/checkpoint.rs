use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dsn::{DsnModel, ParamSnapshot};
use crate::eval::RankMetrics;
use crate::features::SparseVec;
use crate::nn::loss;
use crate::sdae::densify;
use crate::{Error, Result};

/// Recall cutoffs stored with every checkpoint.
pub const CHECKPOINT_KS: [usize; 4] = [1, 10, 50, 100];

/// Rows scored per dense block during evaluation.
pub const SCORE_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    CrossEntropy,
    NdcgAt100,
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::CrossEntropy => "cross_entropy",
            Selection::NdcgAt100 => "ndcg_at_100",
        })
    }
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross_entropy" | "ce" => Ok(Selection::CrossEntropy),
            "ndcg_at_100" | "ndcg@100" => Ok(Selection::NdcgAt100),
            _ => Err(Error::Config(format!("unknown selection criterion `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    /// Mean softmax cross-entropy per validation example.
    pub ce: Option<f64>,
    pub ndcg_at_100: Option<f64>,
    pub recall: BTreeMap<usize, f64>,
}

impl ValidationMetrics {
    /// Full-softmax metrics of `model` on a validation split.
    pub fn compute(model: &DsnModel, inputs: &[SparseVec], labels: &[usize]) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::shape("one validation input per label is required"));
        }
        let mut ce = 0.0;
        let mut ranks = Vec::with_capacity(labels.len());
        for (rows, ys) in inputs.chunks(SCORE_CHUNK).zip(labels.chunks(SCORE_CHUNK)) {
            let refs: Vec<&SparseVec> = rows.iter().collect();
            let scores = model.scores(&densify(&refs, model.input_dim()))?;
            for (r, &y) in ys.iter().enumerate() {
                ce += loss::softmax_ce(scores.row(r), y)?.0;
            }
            ranks.extend(RankMetrics::label_ranks(&scores, ys)?);
        }
        let m = RankMetrics::from_ranks(&ranks, &CHECKPOINT_KS)?;
        Ok(ValidationMetrics {
            ce: Some(ce / labels.len() as f64),
            ndcg_at_100: Some(m.ndcg[&100]),
            recall: CHECKPOINT_KS.iter().map(|k| (*k, m.recall[k])).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub epoch: usize,
    pub snapshot: Arc<ParamSnapshot>,
    pub metrics: ValidationMetrics,
}

impl Checkpoint {
    /// `step ce ndcg@100 recall@1 recall@10 recall@50 recall@100`, tab separated.
    pub fn index_line(&self) -> String {
        let f = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.9}"));
        let mut s = format!("{}\t{}\t{}", self.step, f(self.metrics.ce), f(self.metrics.ndcg_at_100));
        for k in CHECKPOINT_KS {
            s.push('\t');
            s.push_str(&f(self.metrics.recall.get(&k).copied()));
        }
        s
    }
}

pub const CHECKPOINT_INDEX_HEADER: &str = "step\tce\tndcg@100\trecall@1\trecall@10\trecall@50\trecall@100";

/// Index of the best checkpoint: lowest cross-entropy or highest nDCG@100,
/// earliest on ties.
pub fn select_model(checkpoints: &[Checkpoint], criterion: Selection) -> Result<usize> {
    if checkpoints.is_empty() {
        return Err(Error::Empty("checkpoints"));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in checkpoints.iter().enumerate() {
        let v = match criterion {
            Selection::CrossEntropy => c.metrics.ce.ok_or(Error::MissingMetric("ce"))?,
            Selection::NdcgAt100 => -c.metrics.ndcg_at_100.ok_or(Error::MissingMetric("ndcg@100"))?,
        };
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    Ok(best.expect("non-empty").0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt(step: u64, ce: Option<f64>, ndcg: Option<f64>) -> Checkpoint {
        Checkpoint {
            step,
            epoch: step as usize,
            snapshot: Arc::new(ParamSnapshot(Vec::new())),
            metrics: ValidationMetrics {
                ce,
                ndcg_at_100: ndcg,
                recall: BTreeMap::new(),
            },
        }
    }

    #[test]
    fn selection_rules() {
        let one = [ckpt(1, Some(3.0), Some(0.2))];
        assert_eq!(select_model(&one, Selection::CrossEntropy).unwrap(), 0);
        let ce: Vec<_> = [2.0, 1.5, 1.7].iter().enumerate().map(|(i, &c)| ckpt(i as u64, Some(c), Some(0.0))).collect();
        assert_eq!(select_model(&ce, Selection::CrossEntropy).unwrap(), 1);
        let nd: Vec<_> = [0.1, 0.3, 0.3].iter().enumerate().map(|(i, &n)| ckpt(i as u64, Some(1.0), Some(n))).collect();
        assert_eq!(select_model(&nd, Selection::NdcgAt100).unwrap(), 1);
    }

    #[test]
    fn missing_metric_or_empty_errors() {
        assert!(select_model(&[], Selection::CrossEntropy).is_err());
        assert!(matches!(
            select_model(&[ckpt(0, None, Some(0.1))], Selection::CrossEntropy),
            Err(Error::MissingMetric("ce"))
        ));
    }

    #[test]
    fn criterion_names_parse() {
        for s in [Selection::CrossEntropy, Selection::NdcgAt100] {
            assert_eq!(s.to_string().parse::<Selection>().unwrap(), s);
        }
    }
}
