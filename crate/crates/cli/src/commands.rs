use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mutarjem::bleu::{corpus_bleu, read_lines};
use mutarjem::corpus::{
    apply_filter, ingest_bitext, make_splits, run_pipeline, score_pairs, write_splits, write_tsv_file, FilterPolicy,
    PipelineConfig, SplitManifest, SplitSpec,
};
use mutarjem::decode::{decode, decode_batch, DecodeConfig, Hypothesis};
use mutarjem::model::ConditionalModel;
use mutarjem::text::Vocabulary;
use serde::Serialize;

use crate::args::{CorpusCommand, DecodeArgs, InteractiveArgs, PolicyArgs, ScoreArgs, SplitArgs, TranslateArgs};
use crate::backend::{embedding_provider, load_model, Backend};

pub const PROMPT: &str = "Type your source text or (q) to STOP:";

/// One entry of the file-mode translation output.
#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct TranslationRecord {
    pub id: usize,
    pub source: String,
    pub targets: Vec<String>,
}

fn prepare(decode: &DecodeArgs, out: &mut impl Write) -> Result<(Backend, DecodeConfig)> {
    let cfg = decode.decode_config();
    cfg.validate().context("invalid decoding options")?;
    let (model, origin) = load_model(&decode.model, decode.cache_dir.as_deref())?;
    writeln!(out, "Loading model from {origin}")?;
    log::info!("model: {origin}; decoding with {cfg:?}");
    Ok((model, cfg))
}

fn render(vocab: &Vocabulary, hyps: &[Hypothesis], max_outputs: usize) -> Result<Vec<String>> {
    hyps.iter()
        .take(max_outputs)
        .map(|h| Ok(vocab.detokenize(&h.ids)?))
        .collect()
}

fn translate_one(model: &Backend, cfg: &DecodeConfig, text: &str) -> Result<Vec<String>> {
    let vocab = model.vocab();
    let hyps = decode(model, &vocab.tokenize(text), cfg)?;
    render(vocab, &hyps, cfg.max_outputs)
}

pub fn interactive(args: &InteractiveArgs, input: &mut impl BufRead, out: &mut impl Write) -> Result<()> {
    writeln!(out, "Mutarjem Interactive CLI")?;
    let (model, cfg) = prepare(&args.decode, out)?;
    let mut line = String::new();
    loop {
        writeln!(out, "{PROMPT}")?;
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        let text = line.trim();
        if text == "q" {
            break;
        }
        if text.is_empty() {
            continue;
        }
        for (i, t) in translate_one(&model, &cfg, text)?.iter().enumerate() {
            writeln!(out, "target{}: {t}", i + 1)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// `<dir>/<stem>.json` next to the input file.
pub fn output_path(input: &Path) -> PathBuf {
    input.with_extension("json")
}

pub fn translate(args: &TranslateArgs, out: &mut impl Write) -> Result<()> {
    writeln!(out, "Mutarjem Translate CLI")?;
    if args.batch_size == 0 {
        bail!("--batch_size must be at least 1");
    }
    let (model, cfg) = prepare(&args.decode, out)?;
    match (&args.text, &args.input_file) {
        (Some(text), None) => {
            let targets = translate_one(&model, &cfg, text)?;
            if cfg.max_outputs == 1 {
                writeln!(out, "target: {}", targets.first().map(String::as_str).unwrap_or(""))?;
            } else {
                for (i, t) in targets.iter().enumerate() {
                    writeln!(out, "target{}: {t}", i + 1)?;
                }
            }
        }
        (None, Some(path)) => {
            writeln!(out, "Translate from {}", path.display())?;
            let records = translate_file(&model, &cfg, path, args.batch_size)?;
            let dest = output_path(path);
            let json = serde_json::to_string_pretty(&records)?;
            std::fs::write(&dest, json + "\n").with_context(|| format!("writing {}", dest.display()))?;
            writeln!(out, "Translation is saved in {}", dest.display())?;
        }
        _ => bail!("translate needs exactly one of --text or --input_file"),
    }
    Ok(())
}

pub fn translate_file(
    model: &Backend,
    cfg: &DecodeConfig,
    path: &Path,
    batch_size: usize,
) -> Result<Vec<TranslationRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let sources: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    let vocab = model.vocab();
    let mut records = Vec::with_capacity(sources.len());
    for (b, chunk) in sources.chunks(batch_size).enumerate() {
        log::info!("batch {} ({} sentences)", b + 1, chunk.len());
        let ids: Vec<_> = chunk.iter().map(|s| vocab.tokenize(s)).collect();
        for (src, result) in chunk.iter().zip(decode_batch(model, &ids, cfg)) {
            let id = records.len();
            let hyps = result.with_context(|| format!("decoding line {}", id + 1))?;
            records.push(TranslationRecord {
                id,
                source: (*src).to_owned(),
                targets: render(vocab, &hyps, cfg.max_outputs)?,
            });
        }
    }
    Ok(records)
}

pub fn score(args: &ScoreArgs, out: &mut impl Write) -> Result<()> {
    writeln!(out, "Mutarjem Score CLI")?;
    writeln!(out, "hyp_file={}", args.hyp_file.display())?;
    writeln!(out, "ref_file={}", args.ref_file.display())?;
    let hyps = read_lines(&args.hyp_file)?;
    let refs = read_lines(&args.ref_file)?;
    if hyps.len() != refs.len() {
        bail!(
            "line count mismatch: {} has {} lines but {} has {}",
            args.hyp_file.display(),
            hyps.len(),
            args.ref_file.display(),
            refs.len()
        );
    }
    let report = corpus_bleu(&hyps, &refs)?;
    log::info!(
        "precisions {:?}, brevity penalty {}, hyp_len {}, ref_len {}",
        report.precisions,
        report.brevity_penalty,
        report.hyp_len,
        report.ref_len
    );
    writeln!(out, "bleu score: {}", report.score)?;
    Ok(())
}

fn policy(p: &PolicyArgs) -> FilterPolicy {
    FilterPolicy {
        kind: p.policy.into(),
        lo: p.lo,
        hi: p.hi,
        n: p.n,
        seed: p.filter_seed,
    }
}

fn split_spec(s: &SplitArgs) -> SplitSpec {
    SplitSpec {
        dev_size: s.dev_size,
        test_size: s.test_size,
        train_cap: (s.train_cap > 0).then_some(s.train_cap),
        seed: s.split_seed,
    }
}

fn report_ingest(path: &Path, lines: usize, skipped: usize) {
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} of {lines} lines as malformed", path.display());
    }
}

pub fn corpus(cmd: &CorpusCommand, out: &mut impl Write) -> Result<()> {
    match cmd {
        CorpusCommand::Score(a) => {
            let ingested = ingest_bitext(&a.input)?;
            report_ingest(&a.input, ingested.lines, ingested.skipped);
            let provider = embedding_provider(&a.embed)?;
            let scored = score_pairs(ingested.records, &provider, &a.embed.src_lang, &a.embed.tgt_lang)?;
            write_tsv_file(&a.output, &scored, true)?;
            writeln!(out, "scored {} pairs into {}", scored.len(), a.output.display())?;
        }
        CorpusCommand::Filter(a) => {
            let ingested = ingest_bitext(&a.input)?;
            report_ingest(&a.input, ingested.lines, ingested.skipped);
            let outcome = apply_filter(ingested.records, &policy(&a.policy))?;
            let with_sim = !outcome.kept.is_empty() && outcome.kept.iter().all(|r| r.sim.is_some());
            write_tsv_file(&a.output, &outcome.kept, with_sim)?;
            writeln!(out, "{}", serde_json::to_string(&outcome.stats)?)?;
            writeln!(out, "kept {} pairs in {}", outcome.kept.len(), a.output.display())?;
        }
        CorpusCommand::Split(a) => {
            let ingested = ingest_bitext(&a.input)?;
            report_ingest(&a.input, ingested.lines, ingested.skipped);
            let spec = split_spec(&a.split);
            let class = a.split.resource.into();
            let splits = make_splits(ingested.records, &spec, class)?;
            let manifest = SplitManifest::new(&a.split.pair, class, &splits, &spec).with_malformed(ingested.skipped);
            let paths = write_splits(&a.split.out_dir, &a.split.pair, &splits, &manifest)?;
            print_splits(out, &manifest, &paths.manifest)?;
        }
        CorpusCommand::Run(a) => {
            let provider = embedding_provider(&a.embed)?;
            let cfg = PipelineConfig {
                pair: a.split.pair.clone(),
                src_lang: a.embed.src_lang.clone(),
                tgt_lang: a.embed.tgt_lang.clone(),
                policy: policy(&a.policy),
                split: split_spec(&a.split),
                resource_class: a.split.resource.into(),
            };
            let (paths, manifest) = run_pipeline(&a.input, &a.split.out_dir, &provider, &cfg)?;
            print_splits(out, &manifest, &paths.manifest)?;
        }
    }
    Ok(())
}

fn print_splits(out: &mut impl Write, m: &SplitManifest, manifest_path: &Path) -> Result<()> {
    writeln!(
        out,
        "train={} dev={} test={}",
        m.counts.train, m.counts.dev, m.counts.test
    )?;
    writeln!(out, "manifest written to {}", manifest_path.display())?;
    Ok(())
}
