use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::filter::{FilterPolicy, FilterStats};
use super::{write_tsv_file, ParallelRecord};
use crate::error::{Error, Result};

/// Low-resource pools larger than this after holding out 200 + 200 get
/// 200-sentence dev/test splits; smaller pools get 100.
pub const LOW_RESOURCE_THRESHOLD: usize = 15_000;
const LOW_LARGE_HOLDOUT: usize = 200;
const LOW_SMALL_HOLDOUT: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceClass {
    High,
    Low,
}

impl fmt::Display for ResourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResourceClass::High => "high",
            ResourceClass::Low => "low",
        })
    }
}

impl FromStr for ResourceClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "high" => Ok(ResourceClass::High),
            "low" => Ok(ResourceClass::Low),
            other => Err(Error::Config(format!(
                "unknown resource class '{other}' (expected high or low)"
            ))),
        }
    }
}

/// Dev/test sizes apply to high-resource pairs; low-resource sizes follow
/// the pool-size rule in [`holdout_sizes`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub dev_size: usize,
    pub test_size: usize,
    pub train_cap: Option<usize>,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            dev_size: 2000,
            test_size: 2000,
            train_cap: Some(1_000_000),
            seed: 0,
        }
    }
}

/// `(dev, test)` sizes for a pool of `pool` records.
pub fn holdout_sizes(pool: usize, class: ResourceClass, spec: &SplitSpec) -> (usize, usize) {
    match class {
        ResourceClass::High => (spec.dev_size, spec.test_size),
        ResourceClass::Low => {
            let remaining = pool.saturating_sub(2 * LOW_LARGE_HOLDOUT);
            if remaining > LOW_RESOURCE_THRESHOLD {
                (LOW_LARGE_HOLDOUT, LOW_LARGE_HOLDOUT)
            } else {
                (LOW_SMALL_HOLDOUT, LOW_SMALL_HOLDOUT)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Vec<ParallelRecord>,
    pub dev: Vec<ParallelRecord>,
    pub test: Vec<ParallelRecord>,
    /// Exact (source, target) repeats dropped before splitting.
    pub duplicates_removed: usize,
}

/// Hold out dev and test uniformly at random, then take train from what is
/// left, in input order, up to `train_cap`. Every split keeps the input
/// order. Duplicate pairs are removed first so no pair lands in two splits.
pub fn make_splits(records: Vec<ParallelRecord>, spec: &SplitSpec, class: ResourceClass) -> Result<Splits> {
    let before = records.len();
    let mut seen = HashSet::with_capacity(records.len());
    let records: Vec<ParallelRecord> = records
        .into_iter()
        .filter(|r| seen.insert((r.source.clone(), r.target.clone())))
        .collect();
    drop(seen);
    let duplicates_removed = before - records.len();

    let (dev_size, test_size) = holdout_sizes(records.len(), class, spec);
    let needed = dev_size + test_size + 1;
    if records.len() < needed {
        return Err(Error::InsufficientRecords {
            needed,
            available: records.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let picked = rand::seq::index::sample(&mut rng, records.len(), dev_size + test_size).into_vec();
    // 0 = train, 1 = dev, 2 = test
    let mut slot = vec![0u8; records.len()];
    for (k, i) in picked.into_iter().enumerate() {
        slot[i] = if k < dev_size { 1 } else { 2 };
    }

    let cap = spec.train_cap.unwrap_or(usize::MAX);
    let mut splits = Splits {
        train: Vec::with_capacity((records.len() - dev_size - test_size).min(cap)),
        dev: Vec::with_capacity(dev_size),
        test: Vec::with_capacity(test_size),
        duplicates_removed,
    };
    for (r, s) in records.into_iter().zip(slot) {
        match s {
            1 => splits.dev.push(r),
            2 => splits.test.push(r),
            _ if splits.train.len() < cap => splits.train.push(r),
            _ => {}
        }
    }
    Ok(splits)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub filter: Option<u64>,
    pub split: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub malformed_lines: usize,
    pub rejected_band: usize,
    pub rejected_identical: usize,
    pub over_cap: usize,
    pub duplicates: usize,
}

/// Written next to the split files as `<pair>.manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub pair: String,
    pub resource_class: ResourceClass,
    pub counts: SplitCounts,
    pub policy: Option<FilterPolicy>,
    pub split: SplitSpec,
    pub seeds: Seeds,
    pub skipped: SkipCounts,
}

impl SplitManifest {
    pub fn new(pair: &str, class: ResourceClass, splits: &Splits, spec: &SplitSpec) -> Self {
        SplitManifest {
            pair: pair.to_owned(),
            resource_class: class,
            counts: SplitCounts {
                train: splits.train.len(),
                dev: splits.dev.len(),
                test: splits.test.len(),
            },
            policy: None,
            split: spec.clone(),
            seeds: Seeds {
                filter: None,
                split: spec.seed,
            },
            skipped: SkipCounts {
                duplicates: splits.duplicates_removed,
                ..Default::default()
            },
        }
    }

    pub fn with_policy(mut self, policy: &FilterPolicy, stats: &FilterStats) -> Self {
        self.seeds.filter = Some(policy.seed);
        self.policy = Some(policy.clone());
        self.skipped.rejected_band = stats.rejected_band;
        self.skipped.rejected_identical = stats.rejected_identical;
        self.skipped.over_cap = stats.over_cap;
        self
    }

    pub fn with_malformed(mut self, lines: usize) -> Self {
        self.skipped.malformed_lines = lines;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPaths {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub manifest: PathBuf,
}

/// Write `<pair>.{train,dev,test}.tsv` and `<pair>.manifest.json` into
/// `dir`, creating it if needed.
pub fn write_splits(
    dir: impl AsRef<Path>,
    pair: &str,
    splits: &Splits,
    manifest: &SplitManifest,
) -> Result<SplitPaths> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = |suffix: &str| dir.join(format!("{pair}.{suffix}"));
    let paths = SplitPaths {
        train: write_tsv_file(file("train.tsv"), &splits.train, false)?,
        dev: write_tsv_file(file("dev.tsv"), &splits.dev, false)?,
        test: write_tsv_file(file("test.tsv"), &splits.test, false)?,
        manifest: file("manifest.json"),
    };
    let mut json = serde_json::to_string_pretty(manifest)?;
    json.push('\n');
    fs::write(&paths.manifest, json).map_err(|e| Error::io(&paths.manifest, e))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> Vec<ParallelRecord> {
        (0..n)
            .map(|i| ParallelRecord::new(format!("s{i}"), format!("t{i}"), i + 1))
            .collect()
    }

    #[test]
    fn low_resource_rule_boundary() {
        let spec = SplitSpec::default();
        assert_eq!(holdout_sizes(15_401, ResourceClass::Low, &spec), (200, 200));
        assert_eq!(holdout_sizes(15_400, ResourceClass::Low, &spec), (100, 100));
        assert_eq!(holdout_sizes(19_900, ResourceClass::Low, &spec), (200, 200));
        assert_eq!(holdout_sizes(1_400, ResourceClass::Low, &spec), (100, 100));
        assert_eq!(holdout_sizes(5, ResourceClass::High, &spec), (2000, 2000));
    }

    #[test]
    fn splits_are_disjoint_and_ordered() {
        let spec = SplitSpec {
            seed: 5,
            ..Default::default()
        };
        let s = make_splits(pool(1_400), &spec, ResourceClass::Low).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (1_200, 100, 100));
        let mut lines: Vec<usize> = s.train.iter().chain(&s.dev).chain(&s.test).map(|r| r.line_no).collect();
        for part in [&s.train, &s.dev, &s.test] {
            assert!(part.windows(2).all(|w| w[0].line_no < w[1].line_no));
        }
        lines.sort_unstable();
        lines.dedup();
        assert_eq!(lines.len(), 1_400);
    }

    #[test]
    fn train_cap_applies_after_holdout() {
        let spec = SplitSpec {
            dev_size: 3,
            test_size: 2,
            train_cap: Some(4),
            seed: 1,
        };
        let s = make_splits(pool(20), &spec, ResourceClass::High).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (4, 3, 2));
        let held: Vec<usize> = s.dev.iter().chain(&s.test).map(|r| r.line_no).collect();
        assert!(s.train.iter().all(|r| !held.contains(&r.line_no)));
    }

    #[test]
    fn duplicates_never_cross_splits() {
        let mut recs = pool(10);
        recs.extend(pool(10).into_iter().map(|mut r| {
            r.line_no += 10;
            r
        }));
        let spec = SplitSpec {
            dev_size: 2,
            test_size: 2,
            train_cap: None,
            seed: 3,
        };
        let s = make_splits(recs, &spec, ResourceClass::High).unwrap();
        assert_eq!(s.duplicates_removed, 10);
        assert_eq!(s.train.len() + s.dev.len() + s.test.len(), 10);
    }

    #[test]
    fn too_few_records() {
        let spec = SplitSpec {
            dev_size: 2,
            test_size: 2,
            ..Default::default()
        };
        assert!(matches!(
            make_splits(pool(4), &spec, ResourceClass::High),
            Err(Error::InsufficientRecords {
                needed: 5,
                available: 4
            })
        ));
        assert!(make_splits(pool(5), &spec, ResourceClass::High).is_ok());
    }

    #[test]
    fn seed_controls_selection() {
        let spec = |seed| SplitSpec {
            dev_size: 5,
            test_size: 5,
            train_cap: None,
            seed,
        };
        let a = make_splits(pool(100), &spec(1), ResourceClass::High).unwrap();
        assert_eq!(a, make_splits(pool(100), &spec(1), ResourceClass::High).unwrap());
        assert_ne!(
            a.dev,
            make_splits(pool(100), &spec(2), ResourceClass::High).unwrap().dev
        );
    }

    #[test]
    fn writes_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SplitSpec {
            dev_size: 1,
            test_size: 1,
            train_cap: None,
            seed: 0,
        };
        let s = make_splits(pool(5), &spec, ResourceClass::High).unwrap();
        let m = SplitManifest::new("en-ar", ResourceClass::High, &s, &spec).with_malformed(2);
        let paths = write_splits(dir.path().join("out"), "en-ar", &s, &m).unwrap();
        assert_eq!(fs::read_to_string(&paths.train).unwrap().lines().count(), 3);
        assert!(paths.dev.ends_with("en-ar.dev.tsv"));
        let back: SplitManifest = serde_json::from_str(&fs::read_to_string(&paths.manifest).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(
            back.counts,
            SplitCounts {
                train: 3,
                dev: 1,
                test: 1
            }
        );
        assert_eq!(back.skipped.malformed_lines, 2);
    }
}
