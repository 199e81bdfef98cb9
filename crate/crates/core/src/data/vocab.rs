use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD: usize = 0;
pub const MASK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const SEP: usize = 4;

pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[MASK]", "[BOS]", "[EOS]", "[SEP]"];

/// Closed vocabulary. Ids 0..5 are always the reserved special tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Self { tokens: Vec::new(), index: HashMap::new() };
        for t in SPECIAL_TOKENS {
            v.add(t);
        }
        v
    }

    /// Builds a vocabulary from a stored token list, which must start with
    /// the reserved special tokens in order.
    pub fn from_tokens(tokens: Vec<String>) -> Option<Self> {
        if tokens.len() < SPECIAL_TOKENS.len() || tokens.iter().zip(SPECIAL_TOKENS).any(|(a, b)| a != b) {
            return None;
        }
        Some(Self::from(tokens))
    }

    pub fn add(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
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

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

pub fn is_special(id: usize) -> bool {
    id < SPECIAL_TOKENS.len()
}

/// Positions that may be masked and ranked: everything except structural
/// tokens. `[MASK]` itself stays maskable since it occupies a content slot.
pub fn is_maskable(id: usize) -> bool {
    !matches!(id, PAD | BOS | EOS | SEP)
}

/// Positions that take part in attention (content tokens, masked or not).
pub fn is_attendable(id: usize) -> bool {
    is_maskable(id)
}
