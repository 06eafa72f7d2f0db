//! Bitext curation: ingest a TSV of sentence pairs, score each pair by
//! cross-lingual similarity, filter, and cut train/dev/test splits.

mod filter;
mod split;

pub use filter::{
    apply_filter, filter_all, filter_random, filter_sim, FilterKind, FilterOutcome, FilterPolicy, FilterStats,
};
pub use split::{
    holdout_sizes, make_splits, write_splits, ResourceClass, SplitCounts, SplitManifest, SplitPaths, SplitSpec, Splits,
    LOW_RESOURCE_THRESHOLD,
};

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::{cosine_similarity, EmbeddingProvider};
use crate::error::{Error, Result};

/// One sentence pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParallelRecord {
    pub source: String,
    pub target: String,
    pub sim: Option<f64>,
    /// 1-based line in the originating file.
    pub line_no: usize,
}

impl ParallelRecord {
    pub fn new(source: impl Into<String>, target: impl Into<String>, line_no: usize) -> Self {
        ParallelRecord {
            source: source.into(),
            target: target.into(),
            sim: None,
            line_no,
        }
    }

    pub fn with_sim(mut self, sim: f64) -> Self {
        self.sim = Some(sim);
        self
    }
}

/// Streams records from `source<TAB>target` lines. A third column, if
/// present, must be a similarity score in [-1, 1]. Anything else (missing
/// tab, extra columns, empty side, invalid UTF-8, blank line) is counted in
/// [`skipped`](Self::skipped) and passed over.
pub struct BitextReader<R> {
    inner: R,
    buf: Vec<u8>,
    lines: usize,
    skipped: usize,
}

impl<R: BufRead> BitextReader<R> {
    pub fn new(inner: R) -> Self {
        BitextReader {
            inner,
            buf: Vec::new(),
            lines: 0,
            skipped: 0,
        }
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }
}

impl BitextReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(BitextReader::new(BufReader::new(f)))
    }
}

fn parse_line(line: &str, line_no: usize) -> Option<ParallelRecord> {
    let mut cols = line.split('\t');
    let source = cols.next()?.trim();
    let target = cols.next()?.trim();
    let sim = match cols.next() {
        None => None,
        Some(s) => {
            let v: f64 = s.trim().parse().ok()?;
            if !(-1.0..=1.0).contains(&v) {
                return None;
            }
            Some(v)
        }
    };
    if cols.next().is_some() || source.is_empty() || target.is_empty() {
        return None;
    }
    Some(ParallelRecord {
        source: source.to_owned(),
        target: target.to_owned(),
        sim,
        line_no,
    })
}

impl<R: BufRead> Iterator for BitextReader<R> {
    type Item = io::Result<ParallelRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e)),
            }
            self.lines += 1;
            let mut bytes = &self.buf[..];
            if let Some(rest) = bytes.strip_suffix(b"\n") {
                bytes = rest;
            }
            if let Some(rest) = bytes.strip_suffix(b"\r") {
                bytes = rest;
            }
            match std::str::from_utf8(bytes).ok().and_then(|l| parse_line(l, self.lines)) {
                Some(r) => return Some(Ok(r)),
                None => self.skipped += 1,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub records: Vec<ParallelRecord>,
    pub lines: usize,
    pub skipped: usize,
}

/// Read a whole bitext file. Fails if more than 10% of its lines are
/// malformed.
pub fn ingest_bitext(path: impl AsRef<Path>) -> Result<Ingested> {
    let path = path.as_ref();
    let mut reader = BitextReader::open(path)?;
    let records = reader
        .by_ref()
        .collect::<io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))?;
    let (lines, skipped) = (reader.lines(), reader.skipped());
    if skipped * 10 > lines {
        return Err(Error::TooManyMalformed {
            path: path.to_owned(),
            skipped,
            total: lines,
        });
    }
    Ok(Ingested {
        records,
        lines,
        skipped,
    })
}

const SCORE_CHUNK: usize = 64;

/// Set `sim` on every record to the cosine of the source and target
/// embeddings. Order is preserved; scoring twice gives the same result.
pub fn score_pairs(
    records: Vec<ParallelRecord>,
    provider: &impl EmbeddingProvider,
    src_lang: &str,
    tgt_lang: &str,
) -> Result<Vec<ParallelRecord>> {
    for lang in [src_lang, tgt_lang] {
        if !provider.supports(lang) {
            return Err(Error::ScoringUnsupported(lang.to_owned()));
        }
    }
    let score_chunk = |chunk: &[ParallelRecord]| -> Result<Vec<ParallelRecord>> {
        let sources: Vec<&str> = chunk.iter().map(|r| r.source.as_str()).collect();
        let targets: Vec<&str> = chunk.iter().map(|r| r.target.as_str()).collect();
        let es = provider.embed_batch(&sources, src_lang).map_err(unsupported)?;
        let et = provider.embed_batch(&targets, tgt_lang).map_err(unsupported)?;
        chunk
            .iter()
            .zip(es.iter().zip(&et))
            .map(|(r, (s, t))| Ok(r.clone().with_sim(cosine_similarity(s, t)?)))
            .collect()
    };

    #[cfg(feature = "parallel")]
    let scored: Vec<Result<Vec<ParallelRecord>>> = {
        use rayon::prelude::*;
        records.par_chunks(SCORE_CHUNK).map(score_chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let scored: Vec<Result<Vec<ParallelRecord>>> = records.chunks(SCORE_CHUNK).map(score_chunk).collect();

    let mut out = Vec::with_capacity(records.len());
    for chunk in scored {
        out.extend(chunk?);
    }
    Ok(out)
}

fn unsupported(e: Error) -> Error {
    match e {
        Error::UnsupportedLanguage(l) => Error::ScoringUnsupported(l),
        other => other,
    }
}

/// Write `source<TAB>target` lines, plus the similarity to six decimals
/// when `with_sim` is set.
pub fn write_tsv(records: &[ParallelRecord], with_sim: bool, out: &mut impl Write) -> io::Result<()> {
    for r in records {
        match (with_sim, r.sim) {
            (true, Some(s)) => writeln!(out, "{}\t{}\t{:.6}", r.source, r.target, s)?,
            (true, None) => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidInput,
                    format!("record at line {} has no similarity score", r.line_no),
                ))
            }
            (false, _) => writeln!(out, "{}\t{}", r.source, r.target)?,
        }
    }
    Ok(())
}

pub fn write_tsv_file(path: impl AsRef<Path>, records: &[ParallelRecord], with_sim: bool) -> Result<PathBuf> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = io::BufWriter::new(f);
    write_tsv(records, with_sim, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;
    Ok(path.to_owned())
}

/// Everything needed to go from a raw bitext file to split files.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub pair: String,
    pub src_lang: String,
    pub tgt_lang: String,
    pub policy: FilterPolicy,
    pub split: SplitSpec,
    pub resource_class: ResourceClass,
}

/// Ingest, score (for the `sim` policy), filter, split and write.
pub fn run_pipeline(
    input: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    provider: &impl EmbeddingProvider,
    cfg: &PipelineConfig,
) -> Result<(SplitPaths, SplitManifest)> {
    let ingested = ingest_bitext(input)?;
    let records = match cfg.policy.kind {
        FilterKind::Sim => score_pairs(ingested.records, provider, &cfg.src_lang, &cfg.tgt_lang)?,
        FilterKind::Random | FilterKind::All => ingested.records,
    };
    let filtered = apply_filter(records, &cfg.policy)?;
    let splits = make_splits(filtered.kept, &cfg.split, cfg.resource_class)?;
    let manifest = SplitManifest::new(&cfg.pair, cfg.resource_class, &splits, &cfg.split)
        .with_policy(&cfg.policy, &filtered.stats)
        .with_malformed(ingested.skipped);
    let paths = write_splits(out_dir, &cfg.pair, &splits, &manifest)?;
    Ok((paths, manifest))
}
