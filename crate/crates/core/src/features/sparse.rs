/// Sparse feature vector with strictly increasing indices below `dim`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SparseVec {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVec {
    pub fn zeros(dim: usize) -> Self {
        SparseVec {
            dim,
            entries: Vec::new(),
        }
    }

    /// Sorts entries, merges duplicate indices by summation and drops zeros.
    ///
    /// # Panics
    /// If an index is out of range or a weight is not finite.
    pub fn from_entries(dim: usize, mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|(i, _)| *i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            assert!(i < dim, "index {i} out of range for dim {dim}");
            assert!(w.is_finite(), "non-finite weight");
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += w,
                _ => merged.push((i, w)),
            }
        }
        merged.retain(|(_, w)| *w != 0.0);
        SparseVec {
            dim,
            entries: merged,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn l2_normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.entries.iter_mut().for_each(|(_, w)| *w /= n);
        }
    }

    /// Writes the dense form into `out` (which must have length `dim`).
    pub fn write_dense(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.dim);
        out.fill(0.0);
        for &(i, w) in &self.entries {
            out[i] = w;
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.write_dense(&mut out);
        out
    }

    /// Concatenates blocks, offsetting each block's indices.
    pub fn concat(blocks: &[SparseVec]) -> SparseVec {
        let mut offset = 0;
        let mut entries = Vec::new();
        for b in blocks {
            entries.extend(b.entries.iter().map(|&(i, w)| (i + offset, w)));
            offset += b.dim;
        }
        SparseVec {
            dim: offset,
            entries,
        }
    }

    pub fn one_hot(dim: usize, index: Option<usize>) -> SparseVec {
        match index {
            Some(i) if i < dim => SparseVec {
                dim,
                entries: vec![(i, 1.0)],
            },
            _ => SparseVec::zeros(dim),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn from_entries_keeps_invariants(raw in proptest::collection::vec((0usize..50, -5.0f64..5.0), 0..40)) {
            let v = SparseVec::from_entries(50, raw.clone());
            prop_assert!(v.entries().windows(2).all(|w| w[0].0 < w[1].0));
            let dense = v.to_dense();
            let mut expected = vec![0.0; 50];
            for (i, w) in raw { expected[i] += w; }
            for (a, b) in dense.iter().zip(&expected) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn normalized_norm_is_zero_or_one(raw in proptest::collection::vec((0usize..20, 0.0f64..3.0), 0..10)) {
            let mut v = SparseVec::from_entries(20, raw);
            v.l2_normalize();
            let n = v.norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn concat_offsets_indices() {
        let a = SparseVec::from_entries(3, vec![(2, 1.0)]);
        let b = SparseVec::one_hot(4, Some(1));
        let c = SparseVec::concat(&[a, b]);
        assert_eq!(c.dim(), 7);
        assert_eq!(c.entries(), &[(2, 1.0), (4, 1.0)]);
    }
}
