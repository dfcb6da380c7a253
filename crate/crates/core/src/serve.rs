//! Exact dot-product top-K recommendation.
//!
//! Items are ordered by descending score with ties broken by ascending item
//! index. The evaluation metrics use the same ordering (see [`outranks`]).

use std::cmp::Ordering;

use crate::dsn::DsnModel;
use crate::nn::Matrix;
use crate::{Error, Result};

/// Ranking order of `(index, score)` pairs: higher score first, then lower index.
pub fn ranking_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Whether item `j` is ranked ahead of item `i`.
#[inline]
pub fn outranks(j: usize, score_j: f64, i: usize, score_i: f64) -> bool {
    ranking_order((j, score_j), (i, score_i)) == Ordering::Less
}

/// 1-based rank of `item` among `scores`.
pub fn rank_of(scores: &[f64], item: usize) -> usize {
    let s = scores[item];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &sj)| outranks(j, sj, item, s))
        .count()
}

/// The `k` best `(index, score)` pairs in ranking order; all items when `k >= len`.
pub fn top_k(scores: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
    if k == 0 {
        return Vec::new();
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, |a, b| ranking_order(*a, *b));
        all.truncate(k);
    }
    all.sort_unstable_by(|a, b| ranking_order(*a, *b));
    all
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recommendation {
    /// `(item index, score)` in ranking order.
    pub items: Vec<(usize, f64)>,
    /// Set when more items were requested than the catalog holds.
    pub truncated: bool,
}

/// Top-K source items for each row of `histories` (user feature vectors),
/// scored by `v_k · u` with `u = G(E_c(x))`.
pub fn recommend_topk(model: &DsnModel, histories: &Matrix, k: usize) -> Result<Vec<Recommendation>> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let scores = model.scores(histories)?;
    let truncated = k > model.classes();
    Ok((0..scores.rows())
        .map(|r| Recommendation {
            items: top_k(scores.row(r), k),
            truncated,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsn::DsnArch;
    use crate::nn::{loss, Rng};

    #[test]
    fn ties_go_to_lower_index() {
        let t = top_k(&[0.5, 0.9, 0.5, 0.9], 4);
        let ids: Vec<usize> = t.iter().map(|p| p.0).collect();
        assert_eq!(ids, vec![1, 3, 0, 2]);
        assert_eq!(rank_of(&[0.5, 0.9, 0.5, 0.9], 2), 4);
        assert_eq!(rank_of(&[0.5, 0.9, 0.5, 0.9], 3), 2);
    }

    #[test]
    fn partial_selection_matches_full_sort() {
        let mut rng = Rng::new(1);
        let scores: Vec<f64> = (0..300).map(|_| (rng.uniform() * 20.0).floor()).collect();
        let full = top_k(&scores, 300);
        for k in [1, 7, 50, 299] {
            assert_eq!(top_k(&scores, k), full[..k].to_vec());
        }
        for (pos, (i, _)) in full.iter().enumerate() {
            assert_eq!(rank_of(&scores, *i), pos + 1);
        }
    }

    #[test]
    fn dot_product_top1_is_softmax_argmax() {
        let model = DsnModel::new(&DsnArch::new(15, 9), &mut Rng::new(2)).unwrap();
        let mut rng = Rng::new(3);
        let x = Matrix::from_vec(5, 15, (0..75).map(|_| rng.uniform()).collect()).unwrap();
        let recs = recommend_topk(&model, &x, 9).unwrap();
        let logits = model.scores(&x).unwrap();
        for (r, rec) in recs.iter().enumerate() {
            let p = loss::softmax(logits.row(r));
            let best = (0..9).max_by(|&a, &b| p[a].total_cmp(&p[b]).then(b.cmp(&a))).unwrap();
            assert_eq!(rec.items[0].0, best);
            let mut ids: Vec<usize> = rec.items.iter().map(|p| p.0).collect();
            ids.sort_unstable();
            assert_eq!(ids, (0..9).collect::<Vec<_>>());
            assert!(!rec.truncated);
        }
        assert!(recommend_topk(&model, &x, 20).unwrap()[0].truncated);
        assert!(recommend_topk(&model, &x, 0).is_err());
    }
}
