use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ConditionalModel, NextTokenDistribution};
use crate::error::{Error, Result};
use crate::text::{TokenId, Vocabulary, BOS, EOS, UNK};

/// Source key matching any source sentence.
pub const ANY_SOURCE: &str = "*";

pub const MAX_ORDER: usize = 3;

/// Tolerance applied to probabilities read from a table file before they
/// are renormalized exactly.
const LOAD_TOLERANCE: f64 = 1e-6;

/// A lookup-table model keyed on `(source sentence, last n prefix ids)`.
///
/// The source key is the detokenized source, or `"*"` for any source. An
/// exact source match wins over `"*"`. Contexts not in the table get the
/// default distribution.
#[derive(Clone, Debug)]
pub struct TableModel {
    vocab: Vocabulary,
    order: usize,
    tables: HashMap<(String, Vec<TokenId>), NextTokenDistribution>,
    default: NextTokenDistribution,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableEntry {
    pub source: String,
    pub prefix: Vec<TokenId>,
    pub probs: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableFile {
    vocab: Vec<String>,
    order: usize,
    #[serde(default)]
    entries: Vec<TableEntry>,
    default: BTreeMap<String, f64>,
}

impl TableModel {
    pub fn builder(vocab: Vocabulary, order: usize) -> TableModelBuilder {
        let default = NextTokenDistribution::uniform_over(vocab.len(), &vocab.ids().skip(1).collect::<Vec<_>>())
            .expect("vocabulary has at least four tokens");
        TableModelBuilder {
            model: TableModel {
                vocab,
                order,
                tables: HashMap::new(),
                default,
            },
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(json)?;
        let vocab = Vocabulary::from_tokens(&file.vocab)?;
        let default = dist_from_map(&vocab, &file.default)?;
        let mut b = TableModel::builder(vocab, file.order).default(default);
        for e in &file.entries {
            let dist = dist_from_map(&b.model.vocab, &e.probs)?;
            let source = if e.source == ANY_SOURCE {
                None
            } else {
                Some(e.source.as_str())
            };
            b = b.entry(source, &e.prefix, dist);
        }
        b.build()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Serialize in the same layout `from_json` reads. Entries are sorted so
    /// the output is stable.
    pub fn to_json(&self) -> String {
        let mut entries: Vec<TableEntry> = self
            .tables
            .iter()
            .map(|((source, prefix), d)| TableEntry {
                source: source.clone(),
                prefix: prefix.clone(),
                probs: dist_to_map(&self.vocab, d),
            })
            .collect();
        entries.sort_by(|a, b| (&a.source, &a.prefix).cmp(&(&b.source, &b.prefix)));
        let file = TableFile {
            vocab: self.vocab.tokens().to_vec(),
            order: self.order,
            entries,
            default: dist_to_map(&self.vocab, &self.default),
        };
        serde_json::to_string_pretty(&file).expect("table model serializes")
    }

    /// A model with a random distribution for every reachable context.
    ///
    /// Mass goes to EOS, UNK and the ordinary words; EOS always keeps a
    /// non-trivial share so generation terminates. Weights are skewed
    /// (cubed uniforms) so that greedy and beam search often disagree.
    pub fn random(vocab: Vocabulary, order: usize, rng: &mut impl Rng) -> Result<Self> {
        let emit: Vec<TokenId> = std::iter::once(UNK).chain(vocab.ids().skip(4)).collect();
        let v = vocab.len();
        let draw = |rng: &mut dyn rand::RngCore| {
            let mut w = vec![0.0; v];
            for id in &emit {
                w[id.index()] = rng.random::<f64>().powi(3);
            }
            w[EOS.index()] = 0.05 + rng.random::<f64>().powi(3);
            NextTokenDistribution::from_weights(w).expect("positive EOS weight")
        };
        let mut contexts: Vec<Vec<TokenId>> = Vec::new();
        // prefixes shorter than the order still start with BOS
        let mut frontier: Vec<Vec<TokenId>> = vec![vec![BOS]];
        for k in 1..=order {
            contexts.extend(frontier.iter().cloned());
            if k == order {
                break;
            }
            frontier = frontier
                .iter()
                .flat_map(|c| emit.iter().map(move |t| [c.as_slice(), &[*t]].concat()))
                .collect();
        }
        let mut full: Vec<Vec<TokenId>> = vec![Vec::new()];
        for _ in 0..order {
            full = full
                .iter()
                .flat_map(|c| emit.iter().map(move |t| [c.as_slice(), &[*t]].concat()))
                .collect();
        }
        contexts.extend(full);

        let default = draw(rng);
        let mut b = TableModel::builder(vocab, order).default(default);
        for c in contexts {
            let d = draw(rng);
            b = b.entry(None, &c, d);
        }
        b.build()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn default_distribution(&self) -> &NextTokenDistribution {
        &self.default
    }

    pub fn entry_count(&self) -> usize {
        self.tables.len()
    }

    fn lookup(&self, source: &str, context: &[TokenId]) -> &NextTokenDistribution {
        let key = (source.to_owned(), context.to_vec());
        if let Some(d) = self.tables.get(&key) {
            return d;
        }
        self.tables
            .get(&(ANY_SOURCE.to_owned(), key.1))
            .unwrap_or(&self.default)
    }
}

impl ConditionalModel for TableModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_token(&self, source: &[TokenId], prefix: &[TokenId]) -> Result<NextTokenDistribution> {
        if prefix.first() != Some(&BOS) {
            return Err(Error::MissingBos);
        }
        let source = self.vocab.detokenize(source)?;
        let context = &prefix[prefix.len().saturating_sub(self.order)..];
        Ok(self.lookup(&source, context).clone())
    }
}

pub struct TableModelBuilder {
    model: TableModel,
}

impl TableModelBuilder {
    pub fn default(mut self, dist: NextTokenDistribution) -> Self {
        self.model.default = dist;
        self
    }

    /// `source = None` matches any source.
    pub fn entry(mut self, source: Option<&str>, prefix: &[TokenId], dist: NextTokenDistribution) -> Self {
        let source = source.map_or_else(|| ANY_SOURCE.to_owned(), crate::text::normalize);
        self.model.tables.insert((source, prefix.to_vec()), dist);
        self
    }

    pub fn build(self) -> Result<TableModel> {
        let m = self.model;
        if m.order == 0 || m.order > MAX_ORDER {
            return Err(Error::ModelTable(format!(
                "order must be in 1..={MAX_ORDER}, got {}",
                m.order
            )));
        }
        let v = m.vocab.len();
        if m.default.len() != v {
            return Err(Error::ModelTable(format!(
                "default distribution has {} entries for a vocabulary of {v}",
                m.default.len()
            )));
        }
        for ((source, prefix), d) in &m.tables {
            if prefix.is_empty() || prefix.len() > m.order {
                return Err(Error::ModelTable(format!(
                    "prefix {prefix:?} for source {source:?} must have 1..={} ids",
                    m.order
                )));
            }
            if let Some(bad) = prefix.iter().find(|id| !m.vocab.contains(**id)) {
                return Err(Error::InvalidTokenId(*bad));
            }
            if d.len() != v {
                return Err(Error::ModelTable(format!(
                    "distribution for {prefix:?} has {} entries for a vocabulary of {v}",
                    d.len()
                )));
            }
        }
        Ok(m)
    }
}

fn dist_from_map(vocab: &Vocabulary, probs: &BTreeMap<String, f64>) -> Result<NextTokenDistribution> {
    let mut w = vec![0.0; vocab.len()];
    for (tok, p) in probs {
        let id = vocab
            .id(&crate::text::normalize(tok))
            .ok_or_else(|| Error::ModelTable(format!("unknown token {tok:?}")))?;
        if !(0.0..=1.0).contains(p) {
            return Err(Error::ModelTable(format!("probability {p} for {tok:?} outside [0, 1]")));
        }
        w[id.index()] = *p;
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > LOAD_TOLERANCE {
        return Err(Error::ModelTable(format!("probabilities sum to {total}, not 1")));
    }
    NextTokenDistribution::from_weights(w)
}

fn dist_to_map(vocab: &Vocabulary, d: &NextTokenDistribution) -> BTreeMap<String, f64> {
    d.support()
        .map(|(id, p)| (vocab.token(id).unwrap_or_default().to_owned(), p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{enumerate_ranked_sequences, sequence_logprob};
    use crate::text::EOS;

    const A: TokenId = TokenId(4);
    const B: TokenId = TokenId(5);

    fn dist(v: &Vocabulary, pairs: &[(TokenId, f64)]) -> NextTokenDistribution {
        let mut w = vec![0.0; v.len()];
        for (id, p) in pairs {
            w[id.index()] = *p;
        }
        NextTokenDistribution::new(w).unwrap()
    }

    fn chain_model() -> TableModel {
        let v = Vocabulary::with_words(["a", "b"]).unwrap();
        let first = dist(&v, &[(A, 0.6), (B, 0.3), (EOS, 0.1)]);
        let after_a = dist(&v, &[(EOS, 0.5), (A, 0.5)]);
        let fallback = dist(&v, &[(EOS, 1.0)]);
        TableModel::builder(v, 1)
            .entry(None, &[BOS], first)
            .entry(None, &[A], after_a)
            .default(fallback)
            .build()
            .unwrap()
    }

    #[test]
    fn lookup_and_fallback() {
        let m = chain_model();
        let d = m.next_token(&[], &[BOS]).unwrap();
        assert_eq!(d.prob(A), 0.6);
        assert_eq!(d.prob(B), 0.3);
        assert_eq!(d.prob(EOS), 0.1);
        let unseen = m.next_token(&[], &[BOS, B]).unwrap();
        assert_eq!(unseen.prob(EOS), 1.0);
        assert!(matches!(m.next_token(&[], &[A]), Err(Error::MissingBos)));
    }

    #[test]
    fn exact_source_beats_wildcard() {
        let v = Vocabulary::with_words(["a", "b"]).unwrap();
        let m = TableModel::builder(v.clone(), 1)
            .entry(None, &[BOS], dist(&v, &[(A, 1.0)]))
            .entry(Some("b"), &[BOS], dist(&v, &[(B, 1.0)]))
            .build()
            .unwrap();
        assert_eq!(m.next_token(&[A], &[BOS]).unwrap().prob(A), 1.0);
        assert_eq!(m.next_token(&[B], &[BOS]).unwrap().prob(B), 1.0);
    }

    #[test]
    fn builder_default_is_uniform_without_pad() {
        let v = Vocabulary::with_words(Vec::<String>::new()).unwrap();
        let m = TableModel::builder(v, 1).build().unwrap();
        assert_eq!(
            m.next_token(&[], &[BOS]).unwrap().probs(),
            &[0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
        );
    }

    #[test]
    fn sequence_logprob_examples() {
        let m = chain_model();
        let lp = sequence_logprob(&m, &[], &[BOS, A, EOS]).unwrap();
        assert!((lp - 0.30f64.ln()).abs() < 1e-12);
        assert_eq!(sequence_logprob(&m, &[], &[BOS, B, A, EOS]).unwrap(), f64::NEG_INFINITY);
        assert!(sequence_logprob(&m, &[], &[BOS, A]).is_err());
    }

    #[test]
    fn order_two_context() {
        let v = Vocabulary::with_words(["a", "b"]).unwrap();
        let m = TableModel::builder(v.clone(), 2)
            .entry(None, &[A, A], dist(&v, &[(EOS, 1.0)]))
            .default(dist(&v, &[(A, 0.5), (EOS, 0.5)]))
            .build()
            .unwrap();
        assert_eq!(m.next_token(&[], &[BOS, A, A]).unwrap().prob(EOS), 1.0);
        assert_eq!(m.next_token(&[], &[BOS, A]).unwrap().prob(EOS), 0.5);
    }

    #[test]
    fn rejects_bad_tables() {
        let v = Vocabulary::with_words(["a"]).unwrap();
        assert!(TableModel::builder(v.clone(), 4).build().is_err());
        assert!(TableModel::builder(v.clone(), 1)
            .entry(None, &[BOS, A], NextTokenDistribution::uniform(v.len()))
            .build()
            .is_err());
        let bad = r#"{"vocab":["<pad>","<s>","</s>","<unk>","a"],"order":1,
            "entries":[],"default":{"a":0.5,"</s>":0.4}}"#;
        assert!(TableModel::from_json(bad).is_err());
        let unknown = r#"{"vocab":["<pad>","<s>","</s>","<unk>","a"],"order":1,
            "entries":[],"default":{"zz":1.0}}"#;
        assert!(TableModel::from_json(unknown).is_err());
    }

    #[test]
    fn json_round_trip_normalizes() {
        let json = r#"{"vocab":["<pad>","<s>","</s>","<unk>","a","b"],"order":1,
            "entries":[{"source":"*","prefix":[1],"probs":{"a":0.6,"b":0.3,"</s>":0.1}}],
            "default":{"</s>":0.9999999}}"#;
        let m = TableModel::from_json(json).unwrap();
        for d in m.tables.values().chain([&m.default]) {
            let total: f64 = d.probs().iter().sum();
            assert!((total - 1.0).abs() <= 1e-9);
        }
        let again = TableModel::from_json(&m.to_json()).unwrap();
        assert_eq!(again.to_json(), m.to_json());
        assert_eq!(
            again.next_token(&[], &[BOS]).unwrap(),
            m.next_token(&[], &[BOS]).unwrap()
        );
    }

    #[test]
    fn enumeration_single_sequence() {
        let v = Vocabulary::with_words(["a"]).unwrap();
        let m = TableModel::builder(v.clone(), 1)
            .default(dist(&v, &[(EOS, 1.0)]))
            .build()
            .unwrap();
        let all = enumerate_ranked_sequences(&m, &[], 5).unwrap();
        assert_eq!(all, vec![(vec![BOS, EOS], 0.0)]);
    }

    #[test]
    fn random_models_are_valid_and_seeded() {
        use rand::SeedableRng;
        let v = Vocabulary::with_words(["a", "b"]).unwrap();
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let m1 = TableModel::random(v.clone(), 2, &mut r1).unwrap();
        let m2 = TableModel::random(v, 2, &mut r2).unwrap();
        assert_eq!(m1.to_json(), m2.to_json());
        // [BOS] + 3 one-token prefixes + 9 full two-token contexts
        assert_eq!(m1.entry_count(), 1 + 3 + 9);
        let d = m1.next_token(&[], &[BOS, A, B]).unwrap();
        assert_eq!(d.prob(crate::text::PAD), 0.0);
        assert!(d.prob(EOS) > 0.0);
    }

    #[test]
    fn enumeration_guard() {
        let v = Vocabulary::with_words(["a", "b", "c", "d", "e"]).unwrap();
        let m = TableModel::builder(v, 1).build().unwrap();
        assert!(matches!(
            enumerate_ranked_sequences(&m, &[], 3),
            Err(Error::EnumerationGuard(_))
        ));
        let small = chain_model();
        assert!(enumerate_ranked_sequences(&small, &[], 7).is_err());
    }
}
