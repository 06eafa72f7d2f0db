//! Sentence embeddings and cosine similarity for bitext scoring.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::text::normalize;

#[cfg(feature = "remote")]
pub use remote::{RemoteEmbedder, EMBED_URL_ENV, MAX_BATCH};

/// Tolerance on the L2 norm of provider output.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch { left: 0, right: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Distribution("embedding has non-finite entries".into()));
        }
        Ok(EmbeddingVector { values })
    }

    /// Scale to unit length.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let v = Self::new(values)?;
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(EmbeddingVector {
            values: v.values.into_iter().map(|x| x / norm).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        EmbeddingVector {
            values: self.values.iter().map(|x| x * factor).collect(),
        }
    }
}

/// Cosine of the angle between `u` and `v`, clamped to [-1, 1].
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// A sentence encoder. Implementations must be deterministic per
/// `(text, lang)`, emit unit vectors and allow concurrent calls.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier, used as part of cache keys.
    fn name(&self) -> String;

    fn supports(&self, lang: &str) -> bool;

    fn embed(&self, text: &str, lang: &str) -> Result<EmbeddingVector>;

    fn embed_batch(&self, texts: &[&str], lang: &str) -> Result<Vec<EmbeddingVector>> {
        texts.iter().map(|t| self.embed(t, lang)).collect()
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn name(&self) -> String {
        (**self).name()
    }
    fn supports(&self, lang: &str) -> bool {
        (**self).supports(lang)
    }
    fn embed(&self, text: &str, lang: &str) -> Result<EmbeddingVector> {
        (**self).embed(text, lang)
    }
    fn embed_batch(&self, texts: &[&str], lang: &str) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts, lang)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn supports(&self, lang: &str) -> bool {
        (**self).supports(lang)
    }
    fn embed(&self, text: &str, lang: &str) -> Result<EmbeddingVector> {
        (**self).embed(text, lang)
    }
    fn embed_batch(&self, texts: &[&str], lang: &str) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts, lang)
    }
}

/// Languages without similarity support in the multilingual encoder the
/// local provider stands in for.
pub const LOW_RESOURCE_LANGS: [&str; 4] = ["ceb", "gd", "tmh", "yo"];

const START: char = '\u{2}';
const END: char = '\u{3}';

/// Hashed character-trigram term frequencies, L2-normalized.
///
/// All languages share one space, so identical text in two languages scores
/// 1.0. Strings with no trigram in common score 0.0 unless two of their
/// trigrams land in the same bucket.
#[derive(Clone, Debug)]
pub struct LocalNgramProvider {
    dim: usize,
    n: usize,
    unsupported: BTreeSet<String>,
}

impl Default for LocalNgramProvider {
    fn default() -> Self {
        LocalNgramProvider {
            dim: 256,
            n: 3,
            unsupported: LOW_RESOURCE_LANGS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl LocalNgramProvider {
    pub fn new(dim: usize, n: usize) -> Self {
        assert!(dim > 0 && n > 0, "dim and n must be positive");
        LocalNgramProvider {
            dim,
            n,
            ..Default::default()
        }
    }

    pub fn with_unsupported<I, S>(mut self, langs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.unsupported = langs.into_iter().map(Into::into).collect();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Bucket indices of the boundary-padded character n-grams of `text`.
    pub fn buckets(&self, text: &str) -> Vec<usize> {
        let chars: Vec<char> = std::iter::once(START)
            .chain(normalize(text.trim()).chars())
            .chain(std::iter::once(END))
            .collect();
        let n = self.n.min(chars.len());
        chars
            .windows(n)
            .map(|w| {
                let gram: String = w.iter().collect();
                (fnv1a(gram.as_bytes()) % self.dim as u64) as usize
            })
            .collect()
    }
}

impl EmbeddingProvider for LocalNgramProvider {
    fn name(&self) -> String {
        format!("local-ngram-{}-{}", self.n, self.dim)
    }

    fn supports(&self, lang: &str) -> bool {
        !self.unsupported.contains(lang)
    }

    fn embed(&self, text: &str, lang: &str) -> Result<EmbeddingVector> {
        if !self.supports(lang) {
            return Err(Error::UnsupportedLanguage(lang.to_owned()));
        }
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let mut counts = vec![0.0; self.dim];
        for b in self.buckets(text) {
            counts[b] += 1.0;
        }
        EmbeddingVector::normalized(counts)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(feature = "remote")]
mod remote {
    use serde::{Deserialize, Serialize};
    use ureq::Agent;

    use super::{EmbeddingProvider, EmbeddingVector, UNIT_NORM_TOLERANCE};
    use crate::error::{Error, Result};
    use crate::http::{self, ClientOptions, Failure};

    pub const EMBED_URL_ENV: &str = "MUTARJEM_EMBED_URL";
    pub const MAX_BATCH: usize = 64;

    #[derive(Serialize)]
    struct EmbedRequest<'a> {
        texts: &'a [&'a str],
        lang: &'a str,
    }

    #[derive(Deserialize)]
    struct EmbedResponse {
        vectors: Vec<Vec<f64>>,
        dim: usize,
    }

    /// Client for `POST /v1/embed`. Requests carry at most [`MAX_BATCH`]
    /// texts. A 422 response means the language is not supported.
    pub struct RemoteEmbedder {
        endpoint: String,
        url: String,
        agent: Agent,
        retries: usize,
    }

    impl RemoteEmbedder {
        pub fn new(endpoint: &str, opts: ClientOptions) -> Self {
            let endpoint = endpoint.trim_end_matches('/').to_owned();
            RemoteEmbedder {
                url: format!("{endpoint}/v1/embed"),
                endpoint,
                agent: http::agent(&opts),
                retries: opts.retries,
            }
        }

        fn protocol(&self, cause: String) -> Error {
            Error::Protocol {
                endpoint: self.endpoint.clone(),
                cause,
            }
        }
    }

    impl EmbeddingProvider for RemoteEmbedder {
        fn name(&self) -> String {
            format!("remote:{}", self.endpoint)
        }

        fn supports(&self, _lang: &str) -> bool {
            true
        }

        fn embed(&self, text: &str, lang: &str) -> Result<EmbeddingVector> {
            Ok(self.embed_batch(&[text], lang)?.remove(0))
        }

        fn embed_batch(&self, texts: &[&str], lang: &str) -> Result<Vec<EmbeddingVector>> {
            if texts.iter().any(|t| t.trim().is_empty()) {
                return Err(Error::EmptyText);
            }
            let mut out = Vec::with_capacity(texts.len());
            for chunk in texts.chunks(MAX_BATCH) {
                let req = EmbedRequest { texts: chunk, lang };
                let resp: EmbedResponse = match http::post_json(&self.agent, &self.url, &req, self.retries) {
                    Ok(r) => r,
                    Err(Failure::Status(422)) => return Err(Error::UnsupportedLanguage(lang.to_owned())),
                    Err(f) => return Err(f.into_error(&self.endpoint)),
                };
                if resp.vectors.len() != chunk.len() {
                    return Err(self.protocol(format!(
                        "sent {} texts, got {} vectors",
                        chunk.len(),
                        resp.vectors.len()
                    )));
                }
                for v in resp.vectors {
                    if v.len() != resp.dim {
                        return Err(self.protocol(format!("vector of length {} for dim {}", v.len(), resp.dim)));
                    }
                    let v = EmbeddingVector::new(v).map_err(|e| self.protocol(e.to_string()))?;
                    if (v.norm() - 1.0).abs() > UNIT_NORM_TOLERANCE {
                        log::debug!("renormalizing embedding with norm {}", v.norm());
                    }
                    out.push(
                        EmbeddingVector::normalized(v.values().to_vec()).map_err(|e| self.protocol(e.to_string()))?,
                    );
                }
            }
            Ok(out)
        }
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec2(a: f64, b: f64) -> EmbeddingVector {
        EmbeddingVector::new(vec![a, b]).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let u = vec2(1.0, 0.0);
        assert_eq!(cosine_similarity(&u, &u).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&u, &vec2(0.0, 1.0)).unwrap(), 0.0);
        assert!((cosine_similarity(&u, &vec2(0.6, 0.8)).unwrap() - 0.6).abs() < 1e-15);
        assert!((cosine_similarity(&u, &vec2(-1.0, 0.0)).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        let u = vec2(1.0, 0.0);
        let w = EmbeddingVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            cosine_similarity(&u, &w),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(cosine_similarity(&u, &vec2(0.0, 0.0)), Err(Error::ZeroVector)));
    }

    #[test]
    fn local_provider_contract() {
        let p = LocalNgramProvider::default();
        let a = p.embed("ab", "en").unwrap();
        assert_eq!(a, p.embed("ab", "en").unwrap());
        assert!((a.norm() - 1.0).abs() < UNIT_NORM_TOLERANCE);
        assert!((cosine_similarity(&a, &p.embed("ab", "ar").unwrap()).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(a.dim(), 256);
    }

    #[test]
    fn local_provider_disjoint_strings_score_zero() {
        let p = LocalNgramProvider::default();
        let pairs = [("abc", "xyz"), ("cat", "قط"), ("hello", "мир")];
        for (s, t) in pairs {
            let (bs, bt) = (p.buckets(s), p.buckets(t));
            assert!(bs.iter().all(|b| !bt.contains(b)), "bucket collision for {s:?}/{t:?}");
            let sim = cosine_similarity(&p.embed(s, "en").unwrap(), &p.embed(t, "ar").unwrap()).unwrap();
            assert_eq!(sim, 0.0);
        }
    }

    #[test]
    fn local_provider_rejects_unsupported_and_empty() {
        let p = LocalNgramProvider::default();
        assert!(matches!(p.embed("x", "yo"), Err(Error::UnsupportedLanguage(l)) if l == "yo"));
        assert!(matches!(p.embed("  ", "en"), Err(Error::EmptyText)));
        let open = LocalNgramProvider::default().with_unsupported(Vec::<String>::new());
        assert!(open.embed("x", "yo").is_ok());
    }

    #[test]
    fn single_character_text_embeds() {
        let p = LocalNgramProvider::default();
        assert_eq!(p.buckets("a").len(), 1);
        assert!(p.embed("a", "en").is_ok());
    }

    fn arb_vec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 8).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(u in arb_vec(), v in arb_vec(), alpha in 0.01f64..100.0) {
            let (u, v) = (EmbeddingVector::new(u).unwrap(), EmbeddingVector::new(v).unwrap());
            let c = cosine_similarity(&u, &v).unwrap();
            prop_assert_eq!(c, cosine_similarity(&v, &u).unwrap());
            prop_assert!((cosine_similarity(&u.scaled(alpha), &v).unwrap() - c).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&c));
        }

        #[test]
        fn local_self_similarity_is_one(s in "\\PC{1,40}") {
            prop_assume!(!s.trim().is_empty());
            let p = LocalNgramProvider::default();
            let e = p.embed(&s, "en").unwrap();
            prop_assert!((e.norm() - 1.0).abs() < UNIT_NORM_TOLERANCE);
            prop_assert!((cosine_similarity(&e, &e).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
