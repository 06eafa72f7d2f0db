//! Corpus-level BLEU-4 with a single reference per hypothesis.
//!
//! Sentences are NFC-normalized and split on whitespace. Clipped n-gram
//! matches and totals are summed over the corpus before the precisions are
//! taken; no smoothing is applied, so any zero precision gives a score of 0.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::text::normalize;

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for corpus BLEU. Merging is associative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn from_pair(hyp: &str, reference: &str) -> Self {
        let (h, r) = (normalize(hyp), normalize(reference));
        let h: Vec<&str> = h.split_whitespace().collect();
        let r: Vec<&str> = r.split_whitespace().collect();
        let mut s = BleuStats {
            hyp_len: h.len(),
            ref_len: r.len(),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(&r, n);
            for (gram, count) in ngram_counts(&h, n) {
                s.matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
                s.totals[n - 1] += count;
            }
        }
        s
    }

    pub fn merge(mut self, other: Self) -> Self {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        self
    }

    pub fn report(&self) -> BleuReport {
        let precisions: [f64; MAX_ORDER] = std::array::from_fn(|n| {
            if self.totals[n] == 0 {
                0.0
            } else {
                self.matches[n] as f64 / self.totals[n] as f64
            }
        });
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let brevity_penalty = if c >= r {
            1.0
        } else if c == 0.0 {
            0.0
        } else {
            (1.0 - r / c).exp()
        };
        let score = if precisions.contains(&0.0) {
            0.0
        } else {
            let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
            100.0 * brevity_penalty * log_mean.exp()
        };
        BleuReport {
            score,
            precisions,
            brevity_penalty,
            hyp_len: self.hyp_len,
            ref_len: self.ref_len,
            stats: *self,
        }
    }
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BleuReport {
    /// In [0, 100].
    pub score: f64,
    /// Modified n-gram precisions for n = 1..=4.
    pub precisions: [f64; MAX_ORDER],
    /// exp(1 - r/c) when the hypotheses are shorter than the references,
    /// else 1. Zero for an empty hypothesis side.
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    pub stats: BleuStats,
}

pub fn corpus_bleu<H: AsRef<str> + Sync, R: AsRef<str> + Sync>(hyps: &[H], refs: &[R]) -> Result<BleuReport> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let pair = |(h, r): (&H, &R)| BleuStats::from_pair(h.as_ref(), r.as_ref());

    #[cfg(feature = "parallel")]
    let stats = {
        use rayon::prelude::*;
        hyps.par_iter()
            .zip(refs.par_iter())
            .map(pair)
            .reduce(BleuStats::default, BleuStats::merge)
    };
    #[cfg(not(feature = "parallel"))]
    let stats = hyps
        .iter()
        .zip(refs)
        .map(pair)
        .fold(BleuStats::default(), BleuStats::merge);

    Ok(stats.report())
}

/// Lines of a UTF-8 file without their terminators. A trailing newline
/// does not produce an empty final entry; CRLF endings are accepted.
pub fn read_lines(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(split_lines(&text))
}

pub fn split_lines(text: &str) -> Vec<String> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if text.is_empty() {
        return Vec::new();
    }
    body.split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_owned())
        .collect()
}
