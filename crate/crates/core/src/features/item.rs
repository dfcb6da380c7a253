use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{vectorize_text, SparseVec, Tokenizer, Vocabulary};
use crate::data::ItemRecord;
use crate::{Error, Result};

/// Category labels seen in the training catalog, indexed in sorted order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct CategorySet {
    labels: Vec<String>,
}

impl CategorySet {
    pub fn from_items<'a>(items: impl IntoIterator<Item = &'a ItemRecord>) -> Self {
        let labels: BTreeSet<String> = items.into_iter().map(|i| i.category.clone()).collect();
        CategorySet {
            labels: labels.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    /// One label per line.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.labels.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let labels: Vec<String> = text.lines().filter(|l| !l.is_empty()).map(String::from).collect();
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: "category labels must be sorted and unique".into(),
            });
        }
        Ok(CategorySet { labels })
    }
}

/// One-hot cardinalities for the hour, minute and second of an item's playtime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaytimeBuckets {
    pub hours: usize,
    pub minutes: usize,
    pub seconds: usize,
}

impl Default for PlaytimeBuckets {
    fn default() -> Self {
        PlaytimeBuckets {
            hours: 24,
            minutes: 60,
            seconds: 60,
        }
    }
}

impl PlaytimeBuckets {
    pub fn dim(&self) -> usize {
        self.hours + self.minutes + self.seconds
    }

    /// `(hour, minute, second)` bucket indices; values past the last bucket
    /// land in the last bucket.
    pub fn indices(&self, playtime_seconds: u64) -> (usize, usize, usize) {
        let h = (playtime_seconds / 3600) as usize;
        let m = ((playtime_seconds / 60) % 60) as usize;
        let s = (playtime_seconds % 60) as usize;
        (
            h.min(self.hours.saturating_sub(1)),
            m.min(self.minutes.saturating_sub(1)),
            s.min(self.seconds.saturating_sub(1)),
        )
    }
}

/// Item feature layout:
/// `[tf-idf text | category one-hot | hour one-hot | minute one-hot | second one-hot]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemFeaturizer {
    pub text_vocab: Vocabulary,
    pub categories: CategorySet,
    pub buckets: PlaytimeBuckets,
}

impl ItemFeaturizer {
    pub fn dim(&self) -> usize {
        self.text_vocab.len() + self.categories.len() + self.buckets.dim()
    }

    pub fn text_tokens(item: &ItemRecord, tokenizer: &dyn Tokenizer) -> Vec<String> {
        item.text_fields()
            .iter()
            .flat_map(|f| tokenizer.tokenize(f))
            .collect()
    }

    pub fn vectorize(&self, item: &ItemRecord, tokenizer: &dyn Tokenizer) -> Result<SparseVec> {
        if item.playtime_seconds < 0 {
            return Err(Error::NegativePlaytime(item.playtime_seconds, item.item_id.clone()));
        }
        let text = vectorize_text(&Self::text_tokens(item, tokenizer), &self.text_vocab);
        let category = SparseVec::one_hot(self.categories.len(), self.categories.index_of(&item.category));
        let (h, m, s) = self.buckets.indices(item.playtime_seconds as u64);
        Ok(SparseVec::concat(&[
            text,
            category,
            SparseVec::one_hot(self.buckets.hours, Some(h)),
            SparseVec::one_hot(self.buckets.minutes, Some(m)),
            SparseVec::one_hot(self.buckets.seconds, Some(s)),
        ]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_vocabulary, SimpleTokenizer};

    fn record(id: &str, category: &str, playtime: i64) -> ItemRecord {
        ItemRecord {
            item_id: id.into(),
            title: "space opera".into(),
            category: category.into(),
            description: "a long voyage".into(),
            cast: "someone".into(),
            playtime_seconds: playtime,
        }
    }

    fn featurizer(items: &[ItemRecord]) -> ItemFeaturizer {
        let docs: Vec<Vec<String>> = items
            .iter()
            .map(|i| ItemFeaturizer::text_tokens(i, &SimpleTokenizer))
            .collect();
        ItemFeaturizer {
            text_vocab: build_vocabulary(&docs, 20_000).unwrap(),
            categories: CategorySet::from_items(items),
            buckets: PlaytimeBuckets::default(),
        }
    }

    #[test]
    fn playtime_3661_sets_one_one_one() {
        let items = [record("a", "film", 3661)];
        let f = featurizer(&items);
        let v = f.vectorize(&items[0], &SimpleTokenizer).unwrap();
        let base = f.text_vocab.len() + f.categories.len();
        assert_eq!(v.get(base + 1), 1.0);
        assert_eq!(v.get(base + 24 + 1), 1.0);
        assert_eq!(v.get(base + 24 + 60 + 1), 1.0);
        assert_eq!(v.dim(), f.dim());
    }

    #[test]
    fn unknown_category_leaves_block_empty() {
        let items = [record("a", "film", 10), record("b", "music", 10)];
        let f = featurizer(&items);
        let v = f.vectorize(&record("c", "sports", 10), &SimpleTokenizer).unwrap();
        let base = f.text_vocab.len();
        assert!((base..base + f.categories.len()).all(|i| v.get(i) == 0.0));
    }

    #[test]
    fn negative_playtime_errors() {
        let items = [record("a", "film", 10)];
        let f = featurizer(&items);
        assert!(matches!(
            f.vectorize(&record("x", "film", -1), &SimpleTokenizer),
            Err(Error::NegativePlaytime(-1, _))
        ));
    }

    #[test]
    fn dimension_is_constant() {
        let items = [record("a", "film", 10), record("b", "music", 7200)];
        let f = featurizer(&items);
        for it in &items {
            assert_eq!(f.vectorize(it, &SimpleTokenizer).unwrap().dim(), f.dim());
        }
    }
}
