//! Model and embedding-provider construction from command-line options.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mutarjem::embed::{EmbeddingProvider, EmbeddingVector, LocalNgramProvider, RemoteEmbedder};
use mutarjem::http::ClientOptions;
use mutarjem::model::{ConditionalModel, NextTokenDistribution, RemoteModel, TableModel};
use mutarjem::text::{TokenId, Vocabulary};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::{EmbedArgs, ModelArgs};

/// The small English to Arabic table model used when no model is given.
pub const TOY_MODEL_JSON: &str = include_str!("../assets/toy_model.json");

pub enum Backend {
    Table(TableModel),
    Remote(RemoteModel),
}

impl ConditionalModel for Backend {
    fn vocab(&self) -> &Vocabulary {
        match self {
            Backend::Table(m) => m.vocab(),
            Backend::Remote(m) => m.vocab(),
        }
    }

    fn next_token(&self, source: &[TokenId], prefix: &[TokenId]) -> mutarjem::Result<NextTokenDistribution> {
        match self {
            Backend::Table(m) => m.next_token(source, prefix),
            Backend::Remote(m) => m.next_token(source, prefix),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RemoteMetadata {
    endpoint: String,
    vocab_size: usize,
    vocab_file: String,
}

fn hex_digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn model_cache_dir(cache_dir: &Path, endpoint: &str) -> PathBuf {
    cache_dir.join("models").join(&hex_digest(&[endpoint])[..16])
}

/// Resolve the vocabulary of a served model: from `--vocab` (and then
/// remember it under the cache directory), or from an earlier cached copy.
fn remote_vocab(endpoint: &str, vocab: Option<&Path>, cache_dir: Option<&Path>) -> Result<Vocabulary> {
    let cached = cache_dir.map(|c| model_cache_dir(c, endpoint));
    if let Some(path) = vocab {
        let v = Vocabulary::from_file(path)?;
        if let Some(dir) = cached {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            fs::write(dir.join("vocab.txt"), v.to_file_contents())?;
            let meta = RemoteMetadata {
                endpoint: endpoint.to_owned(),
                vocab_size: v.len(),
                vocab_file: "vocab.txt".to_owned(),
            };
            fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
        }
        return Ok(v);
    }
    if let Some(dir) = cached {
        let meta_path = dir.join("metadata.json");
        if meta_path.exists() {
            let meta: RemoteMetadata = serde_json::from_str(&fs::read_to_string(&meta_path)?)
                .with_context(|| format!("reading {}", meta_path.display()))?;
            let v = Vocabulary::from_file(dir.join(&meta.vocab_file))?;
            if v.len() != meta.vocab_size {
                bail!("cached vocabulary for {endpoint} is corrupt; pass --vocab again");
            }
            log::info!("using cached vocabulary for {endpoint}");
            return Ok(v);
        }
    }
    bail!("--model_url needs --vocab (or a cache directory that already holds it)")
}

/// Build the model and a human-readable description of where it came from.
pub fn load_model(args: &ModelArgs, cache_dir: Option<&Path>) -> Result<(Backend, String)> {
    match (&args.model, &args.model_url) {
        (Some(_), Some(_)) => bail!("give either --model or --model_url, not both"),
        (Some(path), None) => {
            let m = TableModel::from_file(path)?;
            Ok((Backend::Table(m), path.display().to_string()))
        }
        (None, Some(url)) => {
            let vocab = remote_vocab(url, args.vocab.as_deref(), cache_dir)?;
            let opts = ClientOptions {
                pool_size: args.pool_size,
                ..ClientOptions::default()
            };
            Ok((Backend::Remote(RemoteModel::new(url, vocab, opts)), url.clone()))
        }
        (None, None) => {
            let m = TableModel::from_json(TOY_MODEL_JSON).context("built-in toy model")?;
            Ok((Backend::Table(m), "built-in toy model (en-ar)".to_owned()))
        }
    }
}

/// Memoizes another provider's vectors on disk, keyed by a hash of the
/// provider name, language and text.
pub struct CachedEmbedder<P> {
    inner: P,
    name: String,
    dir: PathBuf,
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn new(inner: P, cache_dir: &Path) -> Result<Self> {
        let dir = cache_dir.join("embeddings");
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(CachedEmbedder {
            name: inner.name(),
            inner,
            dir,
        })
    }

    fn path(&self, text: &str, lang: &str) -> PathBuf {
        self.dir.join(format!("{}.json", hex_digest(&[&self.name, lang, text])))
    }

    fn load(&self, text: &str, lang: &str) -> Option<EmbeddingVector> {
        let raw = fs::read_to_string(self.path(text, lang)).ok()?;
        let values: Vec<f64> = serde_json::from_str(&raw).ok()?;
        EmbeddingVector::new(values).ok()
    }

    fn store(&self, text: &str, lang: &str, v: &EmbeddingVector) {
        let path = self.path(text, lang);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let written = serde_json::to_string(v.values())
            .map_err(std::io::Error::other)
            .and_then(|s| fs::write(&tmp, s))
            .and_then(|_| fs::rename(&tmp, &path));
        if let Err(e) = written {
            log::warn!("could not cache embedding at {}: {e}", path.display());
        }
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn supports(&self, lang: &str) -> bool {
        self.inner.supports(lang)
    }

    fn embed(&self, text: &str, lang: &str) -> mutarjem::Result<EmbeddingVector> {
        if let Some(v) = self.load(text, lang) {
            return Ok(v);
        }
        let v = self.inner.embed(text, lang)?;
        self.store(text, lang, &v);
        Ok(v)
    }

    fn embed_batch(&self, texts: &[&str], lang: &str) -> mutarjem::Result<Vec<EmbeddingVector>> {
        let mut out: Vec<Option<EmbeddingVector>> = texts.iter().map(|t| self.load(t, lang)).collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let batch: Vec<&str> = missing.iter().map(|&i| texts[i]).collect();
            let fresh = self.inner.embed_batch(&batch, lang)?;
            for (&i, v) in missing.iter().zip(fresh) {
                self.store(texts[i], lang, &v);
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }
}

/// The embedding provider selected by `--embed_url`, wrapped in a disk
/// cache when `--cache_dir` is set.
pub fn embedding_provider(args: &EmbedArgs) -> Result<Box<dyn EmbeddingProvider>> {
    let base: Box<dyn EmbeddingProvider> = match &args.embed_url {
        Some(url) => Box::new(RemoteEmbedder::new(url, ClientOptions::default())),
        None => Box::new(LocalNgramProvider::default()),
    };
    Ok(match &args.cache_dir {
        Some(dir) => Box::new(CachedEmbedder::new(base, dir)?),
        None => base,
    })
}
