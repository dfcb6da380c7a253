//! Ranking metrics, empirical target risk and the popularity baseline.
//!
//! Every test instance has exactly one relevant item (its label), so a hit
//! at 1-based rank `k` contributes 1 to Recall@K and `1 / log2(k + 1)` to
//! nDCG@K; no ideal-DCG normalizer is needed.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nn::Matrix;
use crate::serve;
use crate::{Error, Result};

/// Cutoffs reported by default.
pub const DEFAULT_KS: [usize; 4] = [1, 10, 50, 100];

fn check_k(k: usize) -> Result<()> {
    if k < 1 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    Ok(())
}

fn check_lengths<L>(ranked: &[L], labels: &[usize]) -> Result<()> {
    if ranked.len() != labels.len() {
        return Err(Error::shape("one ranked list per label is required"));
    }
    if labels.is_empty() {
        return Err(Error::Empty("evaluation instances"));
    }
    Ok(())
}

fn hit_rank(list: &[usize], label: usize, k: usize) -> Option<usize> {
    list.iter().take(k).position(|&i| i == label).map(|p| p + 1)
}

/// Discounted gain of a single hit at 1-based `rank`.
pub fn gain(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

pub fn recall_at_k<L: AsRef<[usize]>>(ranked: &[L], labels: &[usize], k: usize) -> Result<f64> {
    check_k(k)?;
    check_lengths(ranked, labels)?;
    let hits = ranked
        .iter()
        .zip(labels)
        .filter(|(l, &y)| hit_rank(l.as_ref(), y, k).is_some())
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn ndcg_at_k<L: AsRef<[usize]>>(ranked: &[L], labels: &[usize], k: usize) -> Result<f64> {
    check_k(k)?;
    check_lengths(ranked, labels)?;
    let total: f64 = ranked
        .iter()
        .zip(labels)
        .filter_map(|(l, &y)| hit_rank(l.as_ref(), y, k))
        .fold(0.0, |acc, r| acc + gain(r));
    Ok(total / labels.len() as f64)
}

/// Fraction of instances whose top-ranked item is not the label.
pub fn empirical_target_risk<L: AsRef<[usize]>>(ranked: &[L], labels: &[usize]) -> Result<f64> {
    Ok(1.0 - recall_at_k(ranked, labels, 1)?)
}

/// All `classes` items by descending label frequency, ties by ascending index.
pub fn popularity_baseline(train_labels: &[usize], classes: usize) -> Result<Vec<usize>> {
    if train_labels.is_empty() {
        return Err(Error::Empty("training labels"));
    }
    let mut counts = vec![0usize; classes];
    for &y in train_labels {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        counts[y] += 1;
    }
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    Ok(order)
}

/// Per-K metrics computed from label ranks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub n: usize,
}

impl RankMetrics {
    /// Metrics from the 1-based rank of every instance's label.
    pub fn from_ranks(ranks: &[usize], ks: &[usize]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::Empty("evaluation instances"));
        }
        let n = ranks.len() as f64;
        let mut recall = BTreeMap::new();
        let mut ndcg = BTreeMap::new();
        for &k in ks {
            check_k(k)?;
            let hits = ranks.iter().filter(|&&r| r <= k);
            recall.insert(k, hits.clone().count() as f64 / n);
            ndcg.insert(k, hits.fold(0.0, |acc, &r| acc + gain(r)) / n);
        }
        Ok(RankMetrics {
            recall,
            ndcg,
            n: ranks.len(),
        })
    }

    /// Label ranks under the serving order of each score row.
    pub fn label_ranks(scores: &Matrix, labels: &[usize]) -> Result<Vec<usize>> {
        if scores.rows() != labels.len() {
            return Err(Error::shape("one score row per label is required"));
        }
        labels
            .iter()
            .enumerate()
            .map(|(r, &y)| {
                if y >= scores.cols() {
                    return Err(Error::LabelOutOfRange {
                        label: y,
                        classes: scores.cols(),
                    });
                }
                Ok(serve::rank_of(scores.row(r), y))
            })
            .collect()
    }

    /// Ranks of labels in one fixed list shared by every instance.
    pub fn fixed_list_ranks(list: &[usize], labels: &[usize]) -> Vec<usize> {
        let mut pos = vec![usize::MAX; list.iter().max().map_or(0, |m| m + 1)];
        for (p, &i) in list.iter().enumerate() {
            pos[i] = p + 1;
        }
        labels.iter().map(|&y| pos.get(y).copied().unwrap_or(usize::MAX)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "I-DSN")]
    IDsn,
    #[serde(rename = "DSN")]
    Dsn,
    #[serde(rename = "NN")]
    Nn,
    #[serde(rename = "POP")]
    Pop,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::IDsn, Method::Dsn, Method::Nn, Method::Pop];

    pub fn tag(self) -> &'static str {
        match self {
            Method::IDsn => "I-DSN",
            Method::Dsn => "DSN",
            Method::Nn => "NN",
            Method::Pop => "POP",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected I-DSN, DSN, NN or POP)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub seed: u64,
    pub n_test: usize,
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub empirical_target_risk: f64,
}

impl EvalReport {
    pub fn from_ranks(method: Method, seed: u64, ranks: &[usize], ks: &[usize]) -> Result<Self> {
        let mut all: Vec<usize> = ks.to_vec();
        all.push(1);
        all.sort_unstable();
        all.dedup();
        let m = RankMetrics::from_ranks(ranks, &all)?;
        let risk = 1.0 - m.recall[&1];
        let keep = |map: BTreeMap<usize, f64>| map.into_iter().filter(|(k, _)| ks.contains(k)).collect();
        Ok(EvalReport {
            method,
            seed,
            n_test: m.n,
            recall: keep(m.recall),
            ndcg: keep(m.ndcg),
            empirical_target_risk: risk,
        })
    }

    /// Human-readable block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method: {}", self.method);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "n_test: {}", self.n_test);
        for (k, v) in &self.recall {
            let _ = writeln!(s, "recall@{k}: {v:.6}");
        }
        for (k, v) in &self.ndcg {
            let _ = writeln!(s, "ndcg@{k}: {v:.6}");
        }
        let _ = writeln!(s, "empirical_target_risk: {:.6}", self.empirical_target_risk);
        s
    }

    /// Rows of the flat `method, K, metric, value, seed` table.
    pub fn table_rows(&self) -> Vec<String> {
        let mut rows = Vec::new();
        for (k, v) in &self.recall {
            rows.push(format!("{}\t{k}\trecall\t{v:.6}\t{}", self.method, self.seed));
        }
        for (k, v) in &self.ndcg {
            rows.push(format!("{}\t{k}\tndcg\t{v:.6}\t{}", self.method, self.seed));
        }
        rows.push(format!(
            "{}\t1\ttarget_risk\t{:.6}\t{}",
            self.method, self.empirical_target_risk, self.seed
        ));
        rows
    }
}

pub const TABLE_HEADER: &str = "method\tK\tmetric\tvalue\tseed";

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_instance_cases() {
        assert_eq!(recall_at_k(&[vec![3, 1, 2]], &[3], 1).unwrap(), 1.0);
        let mut list: Vec<usize> = (0..60).collect();
        list.swap(0, 50);
        assert_eq!(recall_at_k(&[list.clone()], &[0], 50).unwrap(), 0.0);
        assert_eq!(ndcg_at_k(&[vec![3, 1, 2]], &[3], 5).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&[vec![5, 4, 3]], &[3], 3).unwrap(), 0.5);
        assert_eq!(ndcg_at_k(&[vec![5, 4, 3]], &[3], 2).unwrap(), 0.0);
        assert!(recall_at_k(&[vec![1]], &[1], 0).is_err());
        assert!(ndcg_at_k(&[vec![1]], &[1], 0).is_err());
    }

    #[test]
    fn risk_extremes() {
        assert_eq!(empirical_target_risk(&[vec![1, 2], vec![2, 1]], &[1, 2]).unwrap(), 0.0);
        assert_eq!(empirical_target_risk(&[vec![1, 2], vec![2, 1]], &[2, 1]).unwrap(), 1.0);
    }

    #[test]
    fn popularity_cases() {
        assert_eq!(popularity_baseline(&[0, 0, 0, 1], 2).unwrap(), vec![0, 1]);
        assert_eq!(popularity_baseline(&[1, 0, 1, 0], 2).unwrap(), vec![0, 1]);
        assert_eq!(popularity_baseline(&[2, 2, 0], 4).unwrap(), vec![2, 0, 1, 3]);
        assert!(popularity_baseline(&[], 4).is_err());
        let pop = popularity_baseline(&[0, 1, 2, 2], 3).unwrap();
        let lists = vec![pop.clone(); 3];
        assert_eq!(recall_at_k(&lists, &[0, 1, 2], 3).unwrap(), 1.0);
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("svd".parse::<Method>().is_err());
    }

    #[test]
    fn report_risk_is_one_minus_recall_at_one() {
        let r = EvalReport::from_ranks(Method::Nn, 3, &[1, 2, 5, 1, 120], &[10, 100]).unwrap();
        assert_eq!(r.empirical_target_risk, 1.0 - 0.4);
        assert_eq!(r.recall.keys().copied().collect::<Vec<_>>(), vec![10, 100]);
        assert_eq!(r.table_rows().len(), 5);
    }

    fn ranking() -> impl Strategy<Value = (Vec<usize>, usize)> {
        (1usize..40).prop_flat_map(|n| {
            (Just((0..n).collect::<Vec<usize>>()).prop_shuffle(), 0..n)
        })
    }

    proptest! {
        #[test]
        fn metrics_monotone_and_bounded(cases in prop::collection::vec(ranking(), 1..20)) {
            let lists: Vec<Vec<usize>> = cases.iter().map(|c| c.0.clone()).collect();
            let labels: Vec<usize> = cases.iter().map(|c| c.1).collect();
            let mut prev = (0.0, 0.0);
            for k in 1..45 {
                let r = recall_at_k(&lists, &labels, k).unwrap();
                let n = ndcg_at_k(&lists, &labels, k).unwrap();
                prop_assert!(r >= prev.0 && n >= prev.1);
                prop_assert!(n <= r + 1e-15);
                prop_assert!((0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&n));
                prev = (r, n);
            }
            prop_assert_eq!(prev.0, 1.0);
        }

        #[test]
        fn metrics_ignore_monotone_score_transforms(scores in prop::collection::vec(-5.0f64..5.0, 2..30), label_seed in 0usize..1000) {
            let label = label_seed % scores.len();
            let a = Matrix::from_vec(1, scores.len(), scores.clone()).unwrap();
            let b = Matrix::from_vec(1, scores.len(), scores.iter().map(|s| 3.0 * s.exp() + 1.0).collect()).unwrap();
            prop_assert_eq!(
                RankMetrics::label_ranks(&a, &[label]).unwrap(),
                RankMetrics::label_ranks(&b, &[label]).unwrap()
            );
        }
    }
}
