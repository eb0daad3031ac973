//! Lexical tf-idf document store.
//!
//! Tokens are maximal runs of alphanumeric characters, lowercased. For a
//! query with tokens `t1..tn` (duplicates kept), a document scores
//! `sum_i tf(ti, d) * idf(ti)` with `tf` the raw token count in the document
//! text and `idf(t) = ln((N + 1) / (df(t) + 1)) + 1`. Results are ordered by
//! score descending then id ascending; zero-score documents are dropped.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::MemoryError;

pub type KnowledgeStore = BTreeMap<String, Arc<KnowledgeBase>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into(), tags: Vec::new() }
    }

    /// Parses a file body: an optional first line `tags: a,b` then the text.
    pub fn from_file_body(id: impl Into<String>, body: &str) -> Self {
        let (tags, text) = match body.split_once('\n') {
            Some((first, rest)) if first.trim_start().starts_with("tags:") => {
                let list = first.trim_start().trim_start_matches("tags:");
                let tags = list.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect();
                (tags, rest)
            }
            _ => (Vec::new(), body),
        };
        Self { id: id.into(), text: text.to_string(), tags }
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<'a> {
    pub doc: &'a Document,
    pub score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    pub name: String,
    docs: Vec<Document>,
    /// token -> (document index, term count)
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl KnowledgeBase {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn ingest(&mut self, doc: Document) -> Result<(), MemoryError> {
        if self.docs.iter().any(|d| d.id == doc.id) {
            return Err(MemoryError::DuplicateDocument { kb: self.name.clone(), id: doc.id });
        }
        let idx = self.docs.len();
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokenize(&doc.text) {
            *counts.entry(t).or_default() += 1;
        }
        for (t, n) in counts {
            self.postings.entry(t).or_default().push((idx, n));
        }
        self.docs.push(doc);
        Ok(())
    }

    /// Loads every regular, non-hidden file in `dir` (sorted by name); the
    /// file stem is the document id.
    pub fn from_dir(name: impl Into<String>, dir: &Path) -> Result<Self, MemoryError> {
        let io = |e: std::io::Error| MemoryError::Io(format!("{}: {e}", dir.display()));
        let mut kb = Self::new(name);
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .filter(|p| !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')))
            .collect();
        paths.sort();
        for path in paths {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let body = std::fs::read_to_string(&path).map_err(io)?;
            kb.ingest(Document::from_file_body(id, &body))?;
        }
        Ok(kb)
    }

    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Hit<'_>>, MemoryError> {
        let tokens = tokenize(query);
        if tokens.is_empty() {
            return Err(MemoryError::EmptyQuery);
        }
        let n = self.docs.len() as f64;
        let mut scores = vec![0.0f64; self.docs.len()];
        for t in &tokens {
            let Some(postings) = self.postings.get(t) else { continue };
            let df = postings.len() as f64;
            let idf = ((n + 1.0) / (df + 1.0)).ln() + 1.0;
            for &(idx, tf) in postings {
                scores[idx] += f64::from(tf) * idf;
            }
        }
        let mut hits: Vec<Hit<'_>> = scores
            .into_iter()
            .enumerate()
            .filter(|(_, s)| *s > 0.0)
            .map(|(i, score)| Hit { doc: &self.docs[i], score })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc.id.cmp(&b.doc.id)));
        hits.truncate(k);
        Ok(hits)
    }
}
