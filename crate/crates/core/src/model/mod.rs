//! The conditional translation model port.
//!
//! A backend only answers one question: given the source and the target
//! prefix so far, what is the distribution over the next token? Sequence
//! scores and every search strategy are built on top of that.

mod table;

#[cfg(feature = "remote")]
mod remote;

pub use table::{TableEntry, TableModel, TableModelBuilder};

#[cfg(feature = "remote")]
pub use remote::{RemoteModel, MODEL_URL_ENV};

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::text::{TokenId, TokenSeq, Vocabulary, BOS, EOS};

/// Tolerance on the total mass of a [`NextTokenDistribution`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Probabilities over the whole vocabulary, indexed by token id.
#[derive(Clone, Debug, PartialEq)]
pub struct NextTokenDistribution {
    probs: Vec<f64>,
}

impl NextTokenDistribution {
    /// Takes `probs` as is; every entry must be in [0, 1] and the total
    /// must be within [`NORMALIZATION_TOLERANCE`] of 1.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Distribution("empty".into()));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Distribution(format!("entry {i} = {p} outside [0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Distribution(format!("mass sums to {total}")));
        }
        Ok(NextTokenDistribution { probs })
    }

    /// Normalize non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::Distribution(format!(
                "weight {i} = {w} is negative or not finite"
            )));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Distribution("all weights are zero".into()));
        }
        Ok(NextTokenDistribution {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Normalize log-probabilities (or unnormalized log-weights) with the
    /// max-shift trick, so very negative values do not underflow to an
    /// all-zero vector. `-inf` entries become exact zeros.
    pub fn from_logprobs(logprobs: &[f64]) -> Result<Self> {
        if logprobs.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(Error::Distribution("log-probabilities contain NaN or +inf".into()));
        }
        let max = logprobs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Distribution("every log-probability is -inf".into()));
        }
        Self::from_weights(logprobs.iter().map(|l| (l - max).exp()).collect())
    }

    pub fn uniform(len: usize) -> Self {
        NextTokenDistribution {
            probs: vec![1.0 / len as f64; len],
        }
    }

    /// Uniform over `support`, zero elsewhere.
    pub fn uniform_over(len: usize, support: &[TokenId]) -> Result<Self> {
        let mut w = vec![0.0; len];
        for id in support {
            *w.get_mut(id.index()).ok_or(Error::InvalidTokenId(*id))? = 1.0;
        }
        Self::from_weights(w)
    }

    /// Point mass on `id`.
    pub fn certain(len: usize, id: TokenId) -> Result<Self> {
        Self::uniform_over(len, &[id])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.probs.get(id.index()).copied().unwrap_or(0.0)
    }

    pub fn log_prob(&self, id: TokenId) -> f64 {
        self.prob(id).ln()
    }

    /// Tokens with non-zero mass, in id order.
    pub fn support(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, p)| (TokenId(i as u32), *p))
    }

    /// All token ids, most probable first; equal probabilities keep the
    /// lower id first.
    pub fn ranked(&self) -> Vec<TokenId> {
        let mut ids: Vec<TokenId> = (0..self.probs.len() as u32).map(TokenId).collect();
        ids.sort_by(|a, b| self.probs[b.index()].total_cmp(&self.probs[a.index()]).then(a.cmp(b)));
        ids
    }

    /// Most probable token, lower id on ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate().skip(1) {
            if *p > self.probs[best] {
                best = i;
            }
        }
        TokenId(best as u32)
    }

    /// Keep only tokens where `keep` is true and renormalize. Returns `None`
    /// if no mass survives.
    pub fn restrict(&self, mut keep: impl FnMut(TokenId) -> bool) -> Option<Self> {
        let weights: Vec<f64> = self
            .probs
            .iter()
            .enumerate()
            .map(|(i, p)| if keep(TokenId(i as u32)) { *p } else { 0.0 })
            .collect();
        Self::from_weights(weights).ok()
    }

    /// Total variation distance to another distribution of the same length.
    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self.probs.iter().zip(other).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// A source of next-token distributions.
///
/// Implementations must be safe to call concurrently.
pub trait ConditionalModel: Send + Sync {
    fn vocab(&self) -> &Vocabulary;

    /// Distribution of the token following `prefix`, which must start with
    /// BOS. Deterministic for fixed inputs.
    fn next_token(&self, source: &[TokenId], prefix: &[TokenId]) -> Result<NextTokenDistribution>;
}

impl<M: ConditionalModel + ?Sized> ConditionalModel for &M {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }

    fn next_token(&self, source: &[TokenId], prefix: &[TokenId]) -> Result<NextTokenDistribution> {
        (**self).next_token(source, prefix)
    }
}

impl<M: ConditionalModel + ?Sized> ConditionalModel for Box<M> {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }

    fn next_token(&self, source: &[TokenId], prefix: &[TokenId]) -> Result<NextTokenDistribution> {
        (**self).next_token(source, prefix)
    }
}

/// Sum of per-step log-probabilities of `target` (BOS ... EOS). A zero
/// probability step yields `-inf`.
pub fn sequence_logprob(model: &impl ConditionalModel, source: &[TokenId], target: &[TokenId]) -> Result<f64> {
    if target.len() < 2 || target[0] != BOS || target[target.len() - 1] != EOS {
        return Err(Error::IncompleteTarget);
    }
    let mut total = 0.0;
    for t in 1..target.len() {
        let step = model.next_token(source, &target[..t])?.log_prob(target[t]);
        if step == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += step;
    }
    Ok(total)
}

pub const MAX_ENUMERATION_VOCAB: usize = 8;
pub const MAX_ENUMERATION_LEN: usize = 6;

/// Order for scored sequences: higher score first, then lexicographic ids.
pub fn cmp_scored(a: (&[TokenId], f64), b: (&[TokenId], f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Every EOS-terminated sequence with non-zero probability and at most
/// `max_len` ids (BOS included), ranked by [`cmp_scored`].
///
/// This is exhaustive and exponential; it exists to check the search
/// strategies.
pub fn enumerate_ranked_sequences(
    model: &impl ConditionalModel,
    source: &[TokenId],
    max_len: usize,
) -> Result<Vec<(TokenSeq, f64)>> {
    let v = model.vocab().len();
    if v > MAX_ENUMERATION_VOCAB {
        return Err(Error::EnumerationGuard(format!(
            "vocabulary size {v} exceeds {MAX_ENUMERATION_VOCAB}"
        )));
    }
    if max_len > MAX_ENUMERATION_LEN {
        return Err(Error::EnumerationGuard(format!(
            "max_len {max_len} exceeds {MAX_ENUMERATION_LEN}"
        )));
    }
    let mut out = Vec::new();
    if max_len >= 2 {
        let mut prefix = vec![BOS];
        expand(model, source, max_len, &mut prefix, 0.0, &mut out)?;
    }
    out.sort_by(|a, b| cmp_scored((&a.0, a.1), (&b.0, b.1)));
    Ok(out)
}

fn expand(
    model: &impl ConditionalModel,
    source: &[TokenId],
    max_len: usize,
    prefix: &mut TokenSeq,
    score: f64,
    out: &mut Vec<(TokenSeq, f64)>,
) -> Result<()> {
    let dist = model.next_token(source, prefix)?;
    for (id, p) in dist.support() {
        let s = score + p.ln();
        prefix.push(id);
        if id == EOS {
            out.push((prefix.clone(), s));
        } else if prefix.len() < max_len {
            expand(model, source, max_len, prefix, s, out)?;
        }
        prefix.pop();
    }
    Ok(())
}
