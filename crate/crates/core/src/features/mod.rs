//! TF-IDF feature pipeline for user histories and item records.

mod item;
mod sparse;
mod tokenize;
mod vocab;

pub use item::{CategorySet, ItemFeaturizer, PlaytimeBuckets};
pub use sparse::SparseVec;
pub use tokenize::{SimpleTokenizer, Tokenizer};
pub use vocab::{build_vocabulary, vectorize_text, Vocabulary};

use crate::data::{Catalog, UserHistory};
use crate::Result;

/// Tokens of the document formed by all text fields (including the category
/// label) of every item in a history.
pub fn history_tokens(
    history: &UserHistory,
    catalog: &Catalog,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    for id in history.item_ids() {
        let item = catalog.get(catalog.resolve(id)?);
        tokens.extend(tokenizer.tokenize(&item.title));
        tokens.extend(tokenizer.tokenize(&item.category));
        tokens.extend(tokenizer.tokenize(&item.description));
        tokens.extend(tokenizer.tokenize(&item.cast));
    }
    Ok(tokens)
}
