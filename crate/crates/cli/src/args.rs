use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mutarjem::corpus::{FilterKind, ResourceClass};
use mutarjem::decode::{DecodeConfig, SearchMethod};

#[derive(Parser, Debug)]
#[command(
    name = "mutarjem",
    version,
    about = "Machine translation into Arabic: decode, evaluate, curate bitext"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Translate sentences typed at a prompt.
    Interactive(InteractiveArgs),
    /// Translate a single text or every line of a file.
    Translate(TranslateArgs),
    /// Corpus BLEU of a hypothesis file against a reference file.
    Score(ScoreArgs),
    /// Bitext curation: similarity scoring, filtering and splits.
    #[command(subcommand)]
    Corpus(CorpusCommand),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum Method {
    Greedy,
    Beam,
    Sampling,
}

impl From<Method> for SearchMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Greedy => SearchMethod::Greedy,
            Method::Beam => SearchMethod::Beam,
            Method::Sampling => SearchMethod::Sampling,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Table model JSON file. Without this or --model_url the built-in toy
    /// English-Arabic model is used.
    #[arg(long = "model", value_name = "FILE")]
    pub model: Option<PathBuf>,

    /// Base URL of a served model (POST /v1/next_token).
    #[arg(long = "model_url", env = "MUTARJEM_MODEL_URL", value_name = "URL")]
    pub model_url: Option<String>,

    /// Vocabulary file shared with the served model.
    #[arg(long = "vocab", value_name = "FILE")]
    pub vocab: Option<PathBuf>,

    /// Idle HTTP connections kept open to the served model.
    #[arg(long = "pool_size", default_value_t = 4)]
    pub pool_size: usize,
}

#[derive(Args, Debug, Clone)]
pub struct DecodeArgs {
    /// Maximum target length in tokens, start token included.
    #[arg(short = 's', long = "seq_length", default_value_t = 256)]
    pub seq_length: usize,

    /// Decoding method.
    #[arg(short = 'm', long = "search_method", value_enum, default_value_t = Method::Greedy)]
    pub search_method: Method,

    /// Beam size for beam search.
    #[arg(long = "n_beam", default_value_t = 5)]
    pub n_beam: usize,

    /// Sample from the k most probable tokens (0 disables).
    #[arg(short = 'k', long = "top_k", default_value_t = 50)]
    pub top_k: usize,

    /// Sample from the smallest set of tokens with cumulative probability
    /// at least p (1.0 disables).
    #[arg(short = 'p', long = "top_p", default_value_t = 0.95)]
    pub top_p: f64,

    /// Forbid repeating any n-gram of this size (0 disables).
    #[arg(long = "no_repeat_ngram_size", default_value_t = 0)]
    pub no_repeat_ngram_size: usize,

    /// Number of hypotheses to output.
    #[arg(short = 'o', long = "max_outputs", default_value_t = 1)]
    pub max_outputs: usize,

    /// Seed for sampling.
    #[arg(long = "seed", default_value_t = 0)]
    pub seed: u64,

    /// Cache directory for remote model metadata and embeddings.
    #[arg(short = 'c', long = "cache_dir", value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,

    /// Write log lines to this file instead of stderr.
    #[arg(short = 'l', long = "logging_file", value_name = "FILE")]
    pub logging_file: Option<PathBuf>,

    #[command(flatten)]
    pub model: ModelArgs,
}

impl DecodeArgs {
    pub fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            method: self.search_method.into(),
            n_beam: self.n_beam,
            top_k: self.top_k,
            top_p: self.top_p,
            no_repeat_ngram_size: self.no_repeat_ngram_size,
            max_outputs: self.max_outputs,
            seq_length: self.seq_length,
            seed: self.seed,
            length_penalty: 0.0,
        }
    }
}

#[derive(Args, Debug)]
pub struct InteractiveArgs {
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    /// Text to translate.
    #[arg(
        short = 't',
        long = "text",
        conflicts_with = "input_file",
        required_unless_present = "input_file"
    )]
    pub text: Option<String>,

    /// File with one source sentence per line; results go to <stem>.json.
    #[arg(short = 'f', long = "input_file", visible_alias = "file", value_name = "FILE")]
    pub input_file: Option<PathBuf>,

    /// Sentences translated per iteration (also accepted as -bs).
    #[arg(long = "batch_size", default_value_t = 8)]
    pub batch_size: usize,

    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Hypothesis file, one translation per line.
    #[arg(short = 'p', long = "hyp_file", value_name = "FILE")]
    pub hyp_file: PathBuf,

    /// Reference file, line-aligned with the hypotheses.
    #[arg(short = 'g', long = "ref_file", value_name = "FILE")]
    pub ref_file: PathBuf,

    #[arg(short = 'l', long = "logging_file", value_name = "FILE")]
    pub logging_file: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum CorpusCommand {
    /// Add a similarity column to a source<TAB>target file.
    Score(CorpusScoreArgs),
    /// Apply a filtering policy.
    Filter(CorpusFilterArgs),
    /// Cut train/dev/test splits and write a manifest.
    Split(CorpusSplitArgs),
    /// Score, filter and split in one go.
    Run(CorpusRunArgs),
}

#[derive(Args, Debug, Clone)]
pub struct EmbedArgs {
    /// Base URL of an embedding service (POST /v1/embed). Defaults to the
    /// local character n-gram encoder.
    #[arg(long = "embed_url", env = "MUTARJEM_EMBED_URL", value_name = "URL")]
    pub embed_url: Option<String>,

    #[arg(short = 'c', long = "cache_dir", value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,

    #[arg(long = "src_lang", default_value = "en")]
    pub src_lang: String,

    #[arg(long = "tgt_lang", default_value = "ar")]
    pub tgt_lang: String,
}

#[derive(Args, Debug, Clone)]
pub struct PolicyArgs {
    #[arg(long = "policy", value_enum, default_value_t = PolicyKind::Sim)]
    pub policy: PolicyKind,

    /// Lower similarity bound (inclusive).
    #[arg(long = "lo", default_value_t = 0.70, allow_hyphen_values = true)]
    pub lo: f64,

    /// Upper similarity bound (inclusive).
    #[arg(long = "hi", default_value_t = 0.99, allow_hyphen_values = true)]
    pub hi: f64,

    /// Maximum number of pairs kept.
    #[arg(short = 'n', long = "max_pairs", default_value_t = 1_000_000)]
    pub n: usize,

    #[arg(long = "filter_seed", default_value_t = 0)]
    pub filter_seed: u64,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum PolicyKind {
    Sim,
    Random,
    All,
}

impl From<PolicyKind> for FilterKind {
    fn from(k: PolicyKind) -> Self {
        match k {
            PolicyKind::Sim => FilterKind::Sim,
            PolicyKind::Random => FilterKind::Random,
            PolicyKind::All => FilterKind::All,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    /// Language pair used in output file names, e.g. en-ar.
    #[arg(long = "pair")]
    pub pair: String,

    #[arg(long = "resource", value_enum, default_value_t = Resource::High)]
    pub resource: Resource,

    /// Dev size for high-resource pairs.
    #[arg(long = "dev_size", default_value_t = 2000)]
    pub dev_size: usize,

    /// Test size for high-resource pairs.
    #[arg(long = "test_size", default_value_t = 2000)]
    pub test_size: usize,

    /// Maximum train size (0 = unlimited).
    #[arg(long = "train_cap", default_value_t = 1_000_000)]
    pub train_cap: usize,

    #[arg(long = "split_seed", default_value_t = 0)]
    pub split_seed: u64,

    #[arg(long = "out_dir", value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum Resource {
    High,
    Low,
}

impl From<Resource> for ResourceClass {
    fn from(r: Resource) -> Self {
        match r {
            Resource::High => ResourceClass::High,
            Resource::Low => ResourceClass::Low,
        }
    }
}

#[derive(Args, Debug)]
pub struct CorpusScoreArgs {
    #[arg(long = "input", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long = "output", value_name = "FILE")]
    pub output: PathBuf,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Args, Debug)]
pub struct CorpusFilterArgs {
    #[arg(long = "input", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long = "output", value_name = "FILE")]
    pub output: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Args, Debug)]
pub struct CorpusSplitArgs {
    #[arg(long = "input", value_name = "FILE")]
    pub input: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Args, Debug)]
pub struct CorpusRunArgs {
    #[arg(long = "input", value_name = "FILE")]
    pub input: PathBuf,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub split: SplitArgs,
}

/// Expand the two-letter short flag `-bs` into `--batch_size`, which clap's
/// single-character shorts cannot express.
pub fn expand_short_aliases<I: IntoIterator<Item = String>>(args: I) -> Vec<String> {
    args.into_iter()
        .map(|a| match a.as_str() {
            "-bs" => "--batch_size".to_owned(),
            _ => match a.strip_prefix("-bs=") {
                Some(v) => format!("--batch_size={v}"),
                None => a,
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        let argv =
            expand_short_aliases(std::iter::once("mutarjem".to_owned()).chain(args.iter().map(|s| s.to_string())));
        Cli::try_parse_from(argv).unwrap()
    }

    #[test]
    fn translate_short_and_long_forms_agree() {
        let long = parse(&[
            "translate",
            "--text",
            "hello",
            "--batch_size",
            "3",
            "--seq_length",
            "9",
            "--search_method",
            "sampling",
            "--top_k",
            "4",
            "--top_p",
            "0.5",
            "--max_outputs",
            "2",
            "--cache_dir",
            "c",
            "--logging_file",
            "l",
        ]);
        let short = parse(&[
            "translate",
            "-t",
            "hello",
            "-bs",
            "3",
            "-s",
            "9",
            "-m",
            "sampling",
            "-k",
            "4",
            "-p",
            "0.5",
            "-o",
            "2",
            "-c",
            "c",
            "-l",
            "l",
        ]);
        assert_eq!(format!("{long:?}"), format!("{short:?}"));
        let Command::Translate(t) = short.command else { panic!() };
        assert_eq!(t.batch_size, 3);
        let cfg = t.decode.decode_config();
        assert_eq!((cfg.top_k, cfg.top_p, cfg.max_outputs, cfg.seq_length), (4, 0.5, 2, 9));
        assert_eq!(cfg.method, SearchMethod::Sampling);
    }

    #[test]
    fn file_aliases() {
        for flag in ["--input_file", "--file", "-f"] {
            let Command::Translate(t) = parse(&["translate", flag, "x.txt"]).command else {
                panic!()
            };
            assert_eq!(t.input_file.unwrap(), PathBuf::from("x.txt"));
        }
    }

    #[test]
    fn p_means_hyp_file_under_score() {
        let Command::Score(s) = parse(&["score", "-p", "h.txt", "-g", "r.txt"]).command else {
            panic!()
        };
        assert_eq!(
            (s.hyp_file, s.ref_file),
            (PathBuf::from("h.txt"), PathBuf::from("r.txt"))
        );
        let Command::Score(s) = parse(&["score", "--hyp_file", "h.txt", "--ref_file", "r.txt"]).command else {
            panic!()
        };
        assert_eq!(s.hyp_file, PathBuf::from("h.txt"));
    }

    #[test]
    fn translate_needs_exactly_one_input() {
        assert!(Cli::try_parse_from(["mutarjem", "translate"]).is_err());
        assert!(Cli::try_parse_from(["mutarjem", "translate", "-t", "a", "-f", "b"]).is_err());
    }

    #[test]
    fn defaults() {
        let Command::Interactive(i) = parse(&["interactive"]).command else {
            panic!()
        };
        assert_eq!(i.decode.decode_config(), DecodeConfig::default());
    }

    #[test]
    fn long_only_flags() {
        let Command::Interactive(i) = parse(&[
            "interactive",
            "--n_beam",
            "7",
            "--no_repeat_ngram_size",
            "2",
            "-m",
            "beam",
        ])
        .command
        else {
            panic!()
        };
        assert_eq!((i.decode.n_beam, i.decode.no_repeat_ngram_size), (7, 2));
    }
}
