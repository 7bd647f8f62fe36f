use std::collections::HashMap;

use crate::error::{Error, Result};

/// Bijection between item tokens and dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItemVocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl ItemVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary in first-appearance order.
    pub fn from_tokens<T: AsRef<str>>(tokens: impl IntoIterator<Item = T>) -> Self {
        let mut vocab = Self::new();
        for t in tokens {
            vocab.insert(t.as_ref());
        }
        vocab
    }

    /// Returns the index of `token`, inserting it if new.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Result<&str> {
        self.tokens
            .get(index)
            .map(String::as_str)
            .ok_or(Error::IndexOutOfRange {
                what: "vocabulary",
                index,
                len: self.tokens.len(),
            })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}
