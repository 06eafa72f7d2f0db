//! Vocabulary, whitespace tokenization and NFC normalization.
//!
//! The first four vocabulary entries are always the special tokens, in the
//! order PAD, BOS, EOS, UNK. Every other token follows in id order.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for TokenId {
    fn from(id: u32) -> Self {
        TokenId(id)
    }
}

pub type TokenSeq = Vec<TokenId>;

pub const PAD: TokenId = TokenId(0);
pub const BOS: TokenId = TokenId(1);
pub const EOS: TokenId = TokenId(2);
pub const UNK: TokenId = TokenId(3);

pub const DEFAULT_SPECIALS: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// NFC-normalize `text`.
pub fn normalize(text: &str) -> String {
    text.nfc().collect()
}

/// Bijective token/id map. Immutable after construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Build a vocabulary from the complete token list, specials first.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(|t| normalize(t.as_ref())).collect();
        if tokens.len() < DEFAULT_SPECIALS.len() {
            return Err(Error::Vocabulary(format!(
                "expected at least {} entries (PAD, BOS, EOS, UNK), got {}",
                DEFAULT_SPECIALS.len(),
                tokens.len()
            )));
        }
        if tokens.len() > u32::MAX as usize {
            return Err(Error::Vocabulary("too many tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Vocabulary(format!(
                    "token {i} ({tok:?}) is empty or contains whitespace"
                )));
            }
            if index.insert(tok.clone(), TokenId(i as u32)).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Default specials followed by `words`.
    pub fn with_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: Vec<String> = words.into_iter().map(|w| w.as_ref().to_owned()).collect();
        Self::from_tokens(DEFAULT_SPECIALS.iter().map(|s| s.to_string()).chain(words))
    }

    /// One token per line; the line number is the id.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r')))
    }

    pub fn to_file_contents(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
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

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id.index()).map(String::as_str)
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id.index() < self.tokens.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = TokenId> {
        (0..self.tokens.len() as u32).map(TokenId)
    }

    /// Whitespace tokenization after NFC normalization. Unknown tokens map
    /// to UNK; no BOS/EOS is added.
    pub fn tokenize(&self, text: &str) -> TokenSeq {
        normalize(text)
            .split_whitespace()
            .map(|w| self.id(w).unwrap_or(UNK))
            .collect()
    }

    /// Join tokens with single spaces, dropping PAD, BOS and EOS.
    pub fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            let tok = self.token(id).ok_or(Error::InvalidTokenId(id))?;
            if id != PAD && id != BOS && id != EOS {
                words.push(tok);
            }
        }
        Ok(words.join(" "))
    }
}
