//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function takes and returns plain strings so the page needs
//! no glue beyond what `wasm-bindgen` generates. The `*_json` functions hold
//! the logic and are ordinary Rust, which keeps them testable off the web.

use mutarjem::bleu::{corpus_bleu, split_lines};
use mutarjem::decode::{decode, truncate_top_k, truncate_top_p, DecodeConfig, SearchMethod};
use mutarjem::model::{ConditionalModel, NextTokenDistribution, TableModel};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

const TOY_MODEL: &str = include_str!("../../cli/assets/toy_model.json");

#[derive(Serialize)]
struct Truncation {
    top_k: Vec<f64>,
    top_p: Vec<f64>,
    combined: Vec<f64>,
}

/// Apply top-k, top-p and both in sequence to a list of weights.
/// `top_k = 0` and `top_p = 1` disable the respective step.
pub fn truncate_json(weights: &str, top_k: usize, top_p: f64) -> Result<String, String> {
    let weights: Vec<f64> = serde_json::from_str(weights).map_err(|e| format!("weights: {e}"))?;
    let dist = NextTokenDistribution::from_weights(weights).map_err(|e| e.to_string())?;
    let k = if top_k == 0 { dist.len() } else { top_k.min(dist.len()) };
    let by_k = truncate_top_k(&dist, k).map_err(|e| e.to_string())?;
    let by_p = truncate_top_p(&dist, top_p).map_err(|e| e.to_string())?;
    let both = truncate_top_p(&by_k, top_p).map_err(|e| e.to_string())?;
    let out = Truncation {
        top_k: by_k.probs().to_vec(),
        top_p: by_p.probs().to_vec(),
        combined: both.probs().to_vec(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
#[serde(default)]
struct TranslateRequest {
    text: String,
    method: SearchMethod,
    n_beam: usize,
    top_k: usize,
    top_p: f64,
    no_repeat_ngram_size: usize,
    max_outputs: usize,
    seed: u64,
}

impl Default for TranslateRequest {
    fn default() -> Self {
        let d = DecodeConfig::default();
        TranslateRequest {
            text: String::new(),
            method: d.method,
            n_beam: d.n_beam,
            top_k: d.top_k,
            top_p: d.top_p,
            no_repeat_ngram_size: d.no_repeat_ngram_size,
            max_outputs: d.max_outputs,
            seed: d.seed,
        }
    }
}

#[derive(Serialize)]
struct Translation {
    text: String,
    score: f64,
    ended: bool,
}

/// Decode with the toy English to Arabic model. The request is a JSON
/// object with `text` and any of the decoding options; the answer is a
/// list of `{text, score, ended}`.
pub fn translate_json(request: &str) -> Result<String, String> {
    let req: TranslateRequest = serde_json::from_str(request).map_err(|e| format!("request: {e}"))?;
    let model = TableModel::from_json(TOY_MODEL).map_err(|e| e.to_string())?;
    let cfg = DecodeConfig {
        method: req.method,
        n_beam: req.n_beam,
        top_k: req.top_k,
        top_p: req.top_p,
        no_repeat_ngram_size: req.no_repeat_ngram_size,
        max_outputs: req.max_outputs,
        seq_length: 16,
        seed: req.seed,
        ..DecodeConfig::default()
    };
    let vocab = model.vocab();
    let hyps = decode(&model, &vocab.tokenize(&req.text), &cfg).map_err(|e| e.to_string())?;
    let out = hyps
        .iter()
        .map(|h| {
            Ok(Translation {
                text: vocab.detokenize(&h.ids).map_err(|e| e.to_string())?,
                score: h.score,
                ended: h.ended_by_eos(),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Corpus BLEU of newline-separated hypotheses against references.
pub fn bleu_json(hyps: &str, refs: &str) -> Result<String, String> {
    let report = corpus_bleu(&split_lines(hyps), &split_lines(refs)).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn truncate(weights: &str, top_k: usize, top_p: f64) -> Result<String, JsValue> {
    truncate_json(weights, top_k, top_p).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn translate(request: &str) -> Result<String, JsValue> {
    translate_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn bleu(hyps: &str, refs: &str) -> Result<String, JsValue> {
    bleu_json(hyps, refs).map_err(|e| JsValue::from_str(&e))
}
