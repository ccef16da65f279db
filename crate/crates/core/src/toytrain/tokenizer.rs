use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::sha256_hex;

pub const DEFAULT_MAX_VOCAB: usize = 4096;

/// Lowercased alphanumeric runs.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase)
}

/// Word-level vocabulary. Ids are assigned by descending corpus frequency,
/// ties broken lexicographically; out-of-vocabulary words are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    tokens: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, usize>,
}

impl Tokenizer {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_vocab: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for w in words(t) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_vocab);
        Self::from_tokens(ranked.into_iter().map(|(w, _)| w).collect())
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.ids.get(word).copied()
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        words(text).filter_map(|w| self.id(&w)).collect()
    }

    /// Sparse L1-normalized token counts, sorted by id. Empty when no word
    /// is in the vocabulary.
    pub fn distribution(&self, text: &str) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        let mut total = 0usize;
        for id in self.encode(text) {
            *counts.entry(id).or_default() += 1;
            total += 1;
        }
        counts.into_iter().map(|(id, c)| (id, c as f64 / total as f64)).collect()
    }

    /// SHA-256 over the newline-joined token list.
    pub fn hash(&self) -> String {
        sha256_hex(self.tokens.join("\n").as_bytes())
    }
}
