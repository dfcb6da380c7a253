use std::path::Path;

use crate::config::FeatureConfig;
use crate::data::{self, Catalog, LabeledExample, UserHistory};
use crate::features::{
    build_vocabulary, history_tokens, vectorize_text, CategorySet, ItemFeaturizer, SimpleTokenizer, SparseVec,
    Vocabulary,
};
use crate::nn::Rng;
use crate::synth::{self, SynthTask};
use crate::train::TrainData;
use crate::{Error, Result};

/// Parsed catalogs and histories of one experiment.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub source_catalog: Catalog,
    pub target_catalog: Catalog,
    pub source: Vec<LabeledExample>,
    pub target: Vec<UserHistory>,
    pub test: Vec<LabeledExample>,
}

impl Corpus {
    pub fn from_task(task: &SynthTask) -> Result<Corpus> {
        Ok(Corpus {
            source_catalog: task.source_catalog.clone(),
            target_catalog: task.target_catalog.clone(),
            source: task.source_examples()?,
            target: task.target_histories()?,
            test: task.test_examples()?,
        })
    }

    /// Reads the catalog and log files written by the generator.
    pub fn read(dir: &Path) -> Result<Corpus> {
        let source_catalog = Catalog::read_jsonl(&dir.join(synth::SOURCE_CATALOG_FILE))?;
        let target_catalog = Catalog::read_jsonl(&dir.join(synth::TARGET_CATALOG_FILE))?;
        let source = data::source_examples(&data::read_log(&dir.join(synth::SOURCE_LOG_FILE))?, &source_catalog)?;
        let target = data::target_histories(&data::read_log(&dir.join(synth::TARGET_LOG_FILE))?, &target_catalog)?;
        let test = data::common_user_examples(
            &data::read_log(&dir.join(synth::TEST_LOG_FILE))?,
            &source_catalog,
            &target_catalog,
        )?;
        if source.is_empty() || target.is_empty() {
            return Err(Error::Empty("source or target histories"));
        }
        Ok(Corpus {
            source_catalog,
            target_catalog,
            source,
            target,
            test,
        })
    }

    fn catalog_of(&self, h: &UserHistory) -> &Catalog {
        match h.domain {
            data::Domain::Source => &self.source_catalog,
            data::Domain::Target => &self.target_catalog,
        }
    }

    pub fn user_tokens(&self, h: &UserHistory) -> Result<Vec<String>> {
        history_tokens(h, self.catalog_of(h), &SimpleTokenizer)
    }
}

/// Uniform user-level split of `n` labeled users: `(train, validation)`,
/// both in ascending order.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).fork("split").shuffle(&mut order);
    let n_val = ((n as f64 * fraction).round() as usize).max(1).min(n.saturating_sub(1));
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Vocabularies fitted on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSpace {
    pub user_vocab: Vocabulary,
    pub items: ItemFeaturizer,
}

impl FeatureSpace {
    /// User vocabulary over training source histories and all unlabeled
    /// target histories; item vocabulary over the source catalog.
    pub fn build(corpus: &Corpus, train_users: &[usize], cfg: &FeatureConfig) -> Result<FeatureSpace> {
        let mut docs = Vec::with_capacity(train_users.len() + corpus.target.len());
        for &i in train_users {
            docs.push(corpus.user_tokens(&corpus.source[i].history)?);
        }
        for h in &corpus.target {
            docs.push(corpus.user_tokens(h)?);
        }
        let user_vocab = build_vocabulary(&docs, cfg.user_vocab)?;
        let item_docs: Vec<Vec<String>> = corpus
            .source_catalog
            .items()
            .iter()
            .map(|i| ItemFeaturizer::text_tokens(i, &SimpleTokenizer))
            .collect();
        let items = ItemFeaturizer {
            text_vocab: build_vocabulary(&item_docs, cfg.item_vocab)?,
            categories: CategorySet::from_items(corpus.source_catalog.items()),
            buckets: cfg.buckets(),
        };
        Ok(FeatureSpace { user_vocab, items })
    }

    pub fn user_vector(&self, corpus: &Corpus, h: &UserHistory) -> Result<SparseVec> {
        Ok(vectorize_text(&corpus.user_tokens(h)?, &self.user_vocab))
    }

    pub fn item_vectors(&self, catalog: &Catalog) -> Result<Vec<SparseVec>> {
        catalog
            .items()
            .iter()
            .map(|i| self.items.vectorize(i, &SimpleTokenizer))
            .collect()
    }
}

/// Feature vectors of every split.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub data: TrainData,
    pub test: Vec<SparseVec>,
    pub test_labels: Vec<usize>,
}

pub fn prepare(corpus: &Corpus, space: &FeatureSpace, train_users: &[usize], validation_users: &[usize]) -> Result<Prepared> {
    let users = |idx: &[usize]| -> Result<(Vec<SparseVec>, Vec<usize>)> {
        let mut xs = Vec::with_capacity(idx.len());
        let mut ys = Vec::with_capacity(idx.len());
        for &i in idx {
            let e = &corpus.source[i];
            xs.push(space.user_vector(corpus, &e.history)?);
            ys.push(e.label);
        }
        Ok((xs, ys))
    };
    let (source, source_labels) = users(train_users)?;
    let (validation, validation_labels) = users(validation_users)?;
    let target = corpus
        .target
        .iter()
        .map(|h| space.user_vector(corpus, h))
        .collect::<Result<Vec<_>>>()?;
    let test = corpus
        .test
        .iter()
        .map(|e| space.user_vector(corpus, &e.history))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        data: TrainData {
            source,
            source_labels,
            validation,
            validation_labels,
            target,
            items: space.item_vectors(&corpus.source_catalog)?,
        },
        test,
        test_labels: corpus.test.iter().map(|e| e.label).collect(),
    })
}

/// Split, features and vectors in one call.
pub fn featurize(corpus: &Corpus, cfg: &FeatureConfig, seed: u64) -> Result<(FeatureSpace, Prepared)> {
    let (train, val) = validation_split(corpus.source.len(), cfg.validation_fraction, seed);
    let space = FeatureSpace::build(corpus, &train, cfg)?;
    let prepared = prepare(corpus, &space, &train, &val)?;
    Ok((space, prepared))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_a_partition() {
        let (t, v) = validation_split(101, 0.2, 7);
        assert_eq!(v.len(), 20);
        let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(validation_split(101, 0.2, 7), (t, v));
        assert_ne!(validation_split(101, 0.2, 8).1, validation_split(101, 0.2, 7).1);
    }
}
