//! Word-level vocabulary with fixed structural markers.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const INSTRUCTION_START: TokenId = 1;
pub const ACTION_START: TokenId = 2;
pub const OBSERVATION_START: TokenId = 3;
pub const END_OF_ACTION: TokenId = 4;
pub const END_OF_EPISODE: TokenId = 5;

/// Marker strings, in id order. They always occupy ids `0..6`.
pub const SPECIAL_TOKENS: [&str; 6] = ["<pad>", "<inst>", "<act>", "<obs>", "<eoa>", "<eoe>"];

/// Dense mapping between symbol strings and token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from the special markers followed by `words`.
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(words.into_iter().map(Into::into));
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::InvalidInput(format!("bad vocabulary token {tok:?}")));
            }
            if index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn lookup(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn detokenize(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn contains_id(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    /// True for the markers that only the sequence layout may place.
    pub fn is_structural(id: TokenId) -> bool {
        id < SPECIAL_TOKENS.len() as TokenId && id != END_OF_ACTION
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Whitespace tokenization; every word must be known.
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace()
            .map(|w| {
                self.lookup(w)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown token {w:?}")))
            })
            .collect()
    }

    pub fn tokenize_words<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<TokenId>> {
        words
            .iter()
            .map(|w| {
                let w = w.as_ref();
                self.lookup(w)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown token {w:?}")))
            })
            .collect()
    }

    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.detokenize(id).unwrap_or("<?>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Stable 64-bit fingerprint of the ordered token list.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        for tok in &self.tokens {
            hasher.update(tok.as_bytes());
            hasher.update([0u8]);
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense_and_round_trip() {
        let v = Vocabulary::new(["go", "look", "red"]).unwrap();
        assert_eq!(v.len(), 9);
        for id in 0..v.len() as TokenId {
            assert_eq!(v.lookup(v.detokenize(id).unwrap()), Some(id));
        }
    }

    #[test]
    fn specials_are_distinct_members() {
        let v = Vocabulary::new(Vec::<String>::new()).unwrap();
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            assert_eq!(v.lookup(s), Some(i as TokenId));
        }
        assert_eq!(v.lookup("<eoa>"), Some(END_OF_ACTION));
    }

    #[test]
    fn duplicates_rejected() {
        assert!(Vocabulary::new(["a", "a"]).is_err());
        assert!(Vocabulary::new(["<act>"]).is_err());
        assert!(Vocabulary::new(["two words"]).is_err());
    }

    #[test]
    fn tokenize_unknown_word_fails() {
        let v = Vocabulary::new(["a", "b"]).unwrap();
        assert_eq!(v.tokenize("a b a").unwrap(), vec![6, 7, 6]);
        assert!(v.tokenize("a c").is_err());
    }

    #[test]
    fn fingerprint_depends_on_order() {
        let a = Vocabulary::new(["x", "y"]).unwrap();
        let b = Vocabulary::new(["y", "x"]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }
}
