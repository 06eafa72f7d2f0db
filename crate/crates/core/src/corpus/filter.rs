use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ParallelRecord;
use crate::error::{Error, Result};
use crate::text::normalize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    /// Similarity band plus top-n cap.
    Sim,
    /// Uniform sample of n records.
    Random,
    /// Keep everything.
    All,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Sim => "sim",
            FilterKind::Random => "random",
            FilterKind::All => "all",
        })
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(FilterKind::Sim),
            "random" => Ok(FilterKind::Random),
            "all" => Ok(FilterKind::All),
            other => Err(Error::Config(format!(
                "unknown filter policy '{other}' (expected sim, random or all)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub kind: FilterKind,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub seed: u64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            kind: FilterKind::Sim,
            lo: 0.70,
            hi: 0.99,
            n: 1_000_000,
            seed: 0,
        }
    }
}

impl FilterPolicy {
    pub fn with_kind(kind: FilterKind) -> Self {
        FilterPolicy {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0 <= self.lo && self.lo <= self.hi && self.hi <= 1.0) {
            return Err(Error::Config(format!(
                "similarity band must satisfy -1 <= lo <= hi <= 1, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.n == 0 {
            return Err(Error::Config("selection cap n must be at least 1".into()));
        }
        Ok(())
    }
}

/// Why records were dropped.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub input: usize,
    pub kept: usize,
    pub rejected_band: usize,
    pub rejected_identical: usize,
    pub over_cap: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<ParallelRecord>,
    pub stats: FilterStats,
}

/// Keep records with `lo <= sim <= hi` whose source and target differ, then
/// the `n` most similar of those (lower line number first on ties), sorted
/// by descending similarity.
pub fn filter_sim(records: Vec<ParallelRecord>, policy: &FilterPolicy) -> Result<FilterOutcome> {
    policy.validate()?;
    let mut stats = FilterStats {
        input: records.len(),
        ..Default::default()
    };
    let mut kept = Vec::new();
    for r in records {
        let sim = r.sim.ok_or(Error::Unscored(r.line_no))?;
        if normalize(&r.source) == normalize(&r.target) {
            stats.rejected_identical += 1;
        } else if sim < policy.lo || sim > policy.hi {
            stats.rejected_band += 1;
        } else {
            kept.push(r);
        }
    }
    kept.sort_by(|a, b| {
        b.sim
            .unwrap_or_default()
            .partial_cmp(&a.sim.unwrap_or_default())
            .unwrap_or(Ordering::Equal)
            .then(a.line_no.cmp(&b.line_no))
    });
    stats.over_cap = kept.len().saturating_sub(policy.n);
    kept.truncate(policy.n);
    stats.kept = kept.len();
    Ok(FilterOutcome { kept, stats })
}

/// Uniform sample without replacement of `min(n, len)` records, in their
/// original order.
pub fn filter_random(records: Vec<ParallelRecord>, policy: &FilterPolicy) -> Result<FilterOutcome> {
    policy.validate()?;
    let input = records.len();
    let kept = if policy.n >= input {
        records
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
        let mut picked = rand::seq::index::sample(&mut rng, input, policy.n).into_vec();
        picked.sort_unstable();
        let mut slots: Vec<Option<ParallelRecord>> = records.into_iter().map(Some).collect();
        picked.into_iter().filter_map(|i| slots[i].take()).collect()
    };
    Ok(FilterOutcome {
        stats: FilterStats {
            input,
            kept: kept.len(),
            over_cap: input - kept.len(),
            ..Default::default()
        },
        kept,
    })
}

pub fn filter_all(records: Vec<ParallelRecord>) -> FilterOutcome {
    FilterOutcome {
        stats: FilterStats {
            input: records.len(),
            kept: records.len(),
            ..Default::default()
        },
        kept: records,
    }
}

pub fn apply_filter(records: Vec<ParallelRecord>, policy: &FilterPolicy) -> Result<FilterOutcome> {
    match policy.kind {
        FilterKind::Sim => filter_sim(records, policy),
        FilterKind::Random => filter_random(records, policy),
        FilterKind::All => {
            policy.validate()?;
            Ok(filter_all(records))
        }
    }
}
