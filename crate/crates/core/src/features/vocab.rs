//! TF-IDF vocabularies.
//!
//! Weights use raw term counts and the smoothed inverse document frequency
//! `idf = ln((1 + N) / (1 + df)) + 1`. Terms are ranked for retention by the
//! sum of their tf-idf weight over all documents, ties broken by ascending
//! term; the retained terms are indexed in rank order.
//!
//! Vocabulary files are line-delimited: a header `#total_docs<TAB>N<TAB>capacity<TAB>V`
//! followed by `term<TAB>index<TAB>df` lines.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::SparseVec;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    df: Vec<usize>,
    idf: Vec<f64>,
    total_docs: usize,
    capacity: usize,
}

pub fn smoothed_idf(total_docs: usize, df: usize) -> f64 {
    ((1.0 + total_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

pub fn build_vocabulary<S: AsRef<str>>(documents: &[Vec<S>], capacity: usize) -> Result<Vocabulary> {
    if capacity == 0 {
        return Err(Error::Config("vocabulary capacity must be at least 1".into()));
    }
    if documents.is_empty() {
        return Err(Error::Empty("vocabulary corpus"));
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    let mut count: HashMap<&str, usize> = HashMap::new();
    for doc in documents {
        let mut seen: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
        for t in &seen {
            *count.entry(t).or_default() += 1;
        }
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    if df.is_empty() {
        return Err(Error::Empty("vocabulary corpus has no tokens"));
    }
    let n = documents.len();
    let mut ranked: Vec<(&str, f64)> = df
        .iter()
        .map(|(&t, &d)| (t, count[t] as f64 * smoothed_idf(n, d)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(capacity);

    let entries = ranked
        .into_iter()
        .map(|(t, _)| (t.to_string(), df[t]))
        .collect();
    Vocabulary::from_parts(entries, n, capacity)
}

impl Vocabulary {
    /// `(term, df)` pairs in index order.
    pub fn from_parts(entries: Vec<(String, usize)>, total_docs: usize, capacity: usize) -> Result<Self> {
        if entries.len() > capacity {
            return Err(Error::Config(format!(
                "{} terms exceed capacity {capacity}",
                entries.len()
            )));
        }
        let mut index = HashMap::with_capacity(entries.len());
        let mut terms = Vec::with_capacity(entries.len());
        let mut df = Vec::with_capacity(entries.len());
        for (i, (term, d)) in entries.into_iter().enumerate() {
            if d == 0 || d > total_docs {
                return Err(Error::Config(format!("term `{term}` has invalid df {d}")));
            }
            if index.insert(term.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate term `{term}`")));
            }
            terms.push(term);
            df.push(d);
        }
        let idf = df.iter().map(|&d| smoothed_idf(total_docs, d)).collect();
        Ok(Vocabulary {
            terms,
            index,
            df,
            idf,
            total_docs,
            capacity,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_docs(&self) -> usize {
        self.total_docs
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn df(&self, index: usize) -> usize {
        self.df[index]
    }

    pub fn idf(&self, index: usize) -> f64 {
        self.idf[index]
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "#total_docs\t{}\tcapacity\t{}", self.total_docs, self.capacity).map_err(io)?;
        for (i, term) in self.terms.iter().enumerate() {
            writeln!(w, "{term}\t{i}\t{}", self.df[i]).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let perr = |line: usize, msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.to_string(),
        };
        let (_, header) = lines.next().ok_or_else(|| perr(1, "missing header"))?;
        let header = header.map_err(|e| Error::io(path, e))?;
        let h: Vec<&str> = header.split('\t').collect();
        if h.len() != 4 || h[0] != "#total_docs" || h[2] != "capacity" {
            return Err(perr(1, "malformed header"));
        }
        let total_docs = h[1].parse().map_err(|_| perr(1, "bad total_docs"))?;
        let capacity = h[3].parse().map_err(|_| perr(1, "bad capacity"))?;
        let mut entries = Vec::new();
        for (n, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(perr(n + 1, "expected term, index, df"));
            }
            let idx: usize = f[1].parse().map_err(|_| perr(n + 1, "bad index"))?;
            if idx != entries.len() {
                return Err(perr(n + 1, "indices must be dense and in order"));
            }
            let df = f[2].parse().map_err(|_| perr(n + 1, "bad df"))?;
            entries.push((f[0].to_string(), df));
        }
        Vocabulary::from_parts(entries, total_docs, capacity)
    }
}

/// L2-normalized tf-idf vector of a token list; out-of-vocabulary tokens
/// are dropped and an empty document gives the zero vector.
pub fn vectorize_text<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> SparseVec {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for t in tokens {
        if let Some(i) = vocab.index_of(t.as_ref()) {
            *counts.entry(i).or_default() += 1;
        }
    }
    let entries = counts
        .into_iter()
        .map(|(i, c)| (i, c as f64 * vocab.idf(i)))
        .collect();
    let mut v = SparseVec::from_entries(vocab.len(), entries);
    v.l2_normalize();
    v
}
