//! Command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage error, 3 malformed input
//! or configuration, 4 artifact hash or vocabulary mismatch, 5 desync or
//! corrupt payload, 6 message only partially embedded.

mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::codecs::{bits_to_bytes, bytes_to_bits, CodecKind, SecretKey};
use crate::corpus::{
    count_frequencies, detokenize, merge_frequencies, parse_kappa, tokenize, tokenize_corpus,
    train_ngram, FreqTable, NGramModel, TokenId, TokenScheme, Vocabulary,
};
use crate::error::StegoError;
use crate::lm::bridge::{serve_mock, BridgeProvider};
use crate::lm::{DistributionProvider, NGramProvider};
use crate::metrics::{self, EvalInput};
use crate::pipeline::{EmbedStatus, GenerationRecord, SessionConfig, StegoSession};
use crate::quantize::DEFAULT_PRECISION;
use crate::reformer::{ReformConfig, ReformContext, ReformOrder};
use manifest::{write_atomic, ArtifactRef, Manifest, ProviderRef, StegoFormat, MANIFEST_SCHEMA};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_MALFORMED: u8 = 3;
pub const EXIT_MISMATCH: u8 = 4;
pub const EXIT_DESYNC: u8 = 5;
pub const EXIT_PARTIAL: u8 = 6;

/// Schema version of the `--json` stdout objects.
pub const OUTPUT_SCHEMA: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "stegotext", version, about = "Linguistic steganography toolkit")]
pub struct Cli {
    /// TOML file whose keys mirror the long flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a vocabulary from corpus files
    BuildVocab(BuildVocabArgs),
    /// Count n-gram frequencies of a corpus
    BuildFreq(BuildFreqArgs),
    /// Sum frequency tables built with the same vocabulary and order
    MergeFreq(MergeFreqArgs),
    /// Train the built-in additive-smoothing n-gram model
    TrainLm(TrainLmArgs),
    /// Hide a message in generated text
    Encode(EncodeArgs),
    /// Recover a message from stegotext and its manifest
    Decode(DecodeArgs),
    /// Sample cover text without a message
    Generate(GenerateArgs),
    /// Score a generated corpus against a target corpus
    Evaluate(EvaluateArgs),
    /// Grid over reform strengths, one CSV row per cell
    Sweep(SweepArgs),
    /// Answer the bridge protocol from an n-gram model (stdio or TCP)
    ServeMock(ServeMockArgs),
}

#[derive(Debug, Args)]
struct BuildVocabArgs {
    /// Corpus files, one document per line
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// whitespace or byte
    #[arg(long, default_value = "whitespace")]
    scheme: TokenScheme,
    /// Drop whitespace tokens seen fewer times
    #[arg(long, default_value_t = 1)]
    min_count: u64,
    /// Build without the `</s>` stop token
    #[arg(long)]
    no_eos: bool,
    /// Output file
    #[arg(long)]
    out: PathBuf,
    /// Print a JSON summary on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct BuildFreqArgs {
    /// Corpus files, one document per line
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// Vocabulary file
    #[arg(long)]
    vocab: PathBuf,
    /// N-gram order
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Output file
    #[arg(long)]
    out: PathBuf,
    /// Print a JSON summary on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct MergeFreqArgs {
    /// Frequency tables to sum
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Vocabulary file
    #[arg(long)]
    vocab: PathBuf,
    /// Output file
    #[arg(long)]
    out: PathBuf,
    /// Print a JSON summary on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct TrainLmArgs {
    /// Corpus files, one document per line
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// Vocabulary file
    #[arg(long)]
    vocab: PathBuf,
    /// N-gram order
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Additive smoothing constant, e.g. `1`, `0.5` or `1/2`
    #[arg(long, default_value = "1")]
    kappa: String,
    /// Output file
    #[arg(long)]
    out: PathBuf,
    /// Print a JSON summary on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Args)]
struct ReformArgs {
    /// Scale of the entropy-driven temperature rise
    #[arg(long, default_value_t = 0.01)]
    theta: f64,
    /// Entropy weight inside the temperature term
    #[arg(long, default_value_t = 0.1)]
    c: f64,
    /// Exponent on the target/model frequency ratio
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Temperature at zero entropy
    #[arg(long, default_value_t = 1.0)]
    base_temp: f64,
    /// Defaults to the order of the frequency tables
    #[arg(long)]
    ngram_order: Option<usize>,
    /// Frequency for n-grams absent from a table; defaults to 1 / (total + |V|)
    #[arg(long)]
    epsilon_freq: Option<f64>,
    /// ta-sa (temperature first) or sa-ta
    #[arg(long, default_value = "ta-sa")]
    reform_order: ReformOrder,
    /// Keep only the k most likely tokens
    #[arg(long)]
    top_k: Option<usize>,
    /// Keep the smallest set of tokens with at least this mass
    #[arg(long, default_value_t = 1.0)]
    top_p: f64,
}

impl ReformArgs {
    fn to_config(&self, table_order: usize) -> ReformConfig {
        ReformConfig {
            theta: self.theta,
            c: self.c,
            alpha: self.alpha,
            base_temp: self.base_temp,
            ngram_order: self.ngram_order.unwrap_or(table_order),
            epsilon_freq: self.epsilon_freq,
            order: self.reform_order,
            top_k: self.top_k,
            top_p: self.top_p,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct ProviderArgs {
    /// Built-in n-gram model file
    #[arg(long, conflicts_with_all = ["bridge_tcp", "bridge_cmd"])]
    model: Option<PathBuf>,
    /// Address of a bridge server, e.g. 127.0.0.1:7000
    #[arg(long, conflicts_with = "bridge_cmd")]
    bridge_tcp: Option<String>,
    /// Bridge server command line, split on whitespace, spoken to over stdio
    #[arg(long)]
    bridge_cmd: Option<String>,
    /// Per-request bridge timeout
    #[arg(long, default_value_t = 30_000)]
    bridge_timeout_ms: u64,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    /// 256-bit key, 64 hex digits
    #[arg(long, env = "STEGO_KEY", hide_env_values = true)]
    key: String,
    /// Message file
    #[arg(long, conflicts_with = "msg_hex", required_unless_present = "msg_hex")]
    msg: Option<PathBuf>,
    /// Message as hex
    #[arg(long)]
    msg_hex: Option<String>,
    /// Vocabulary file
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Frequency table of the target corpus
    #[arg(long)]
    target_freq: PathBuf,
    /// Frequency table of text sampled from the model
    #[arg(long)]
    model_freq: PathBuf,
    /// Codec: ac, meteor, discop or adg
    #[arg(long)]
    algo: CodecKind,
    /// Quantization precision in bits (8 to 32)
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision: u32,
    /// Give up after this many tokens
    #[arg(long, default_value_t = 512)]
    max_len: usize,
    /// Text prepended as context, not part of the stegotext
    #[arg(long)]
    prompt: Option<String>,
    /// Session nonce; random when absent
    #[arg(long)]
    nonce: Option<u64>,
    #[command(flatten)]
    reform: ReformArgs,
    /// Stegotext output
    #[arg(long)]
    out: PathBuf,
    /// Defaults to text for whitespace vocabularies and ids otherwise
    #[arg(long, value_enum)]
    format: Option<StegoFormat>,
    /// Defaults to `<out>.manifest.json`
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write the per-step generation record (JSON)
    #[arg(long)]
    records: Option<PathBuf>,
    /// Keep a digest of every quantized step distribution in the record
    #[arg(long)]
    hash_log: bool,
    /// Print a JSON summary on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// 256-bit key, 64 hex digits
    #[arg(long, env = "STEGO_KEY", hide_env_values = true)]
    key: String,
    /// Stegotext file
    #[arg(long)]
    stego: PathBuf,
    /// Session manifest written by encode
    #[arg(long)]
    manifest: PathBuf,
    /// Recovered message output
    #[arg(long)]
    out: PathBuf,
    /// Use this file instead of the vocabulary path recorded in the manifest
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Built-in n-gram model file
    #[arg(long)]
    model: Option<PathBuf>,
    /// Frequency table of the target corpus
    #[arg(long)]
    target_freq: Option<PathBuf>,
    /// Frequency table of text sampled from the model
    #[arg(long)]
    model_freq: Option<PathBuf>,
    #[arg(long)]
    bridge_tcp: Option<String>,
    #[arg(long)]
    bridge_cmd: Option<String>,
    /// Per-request bridge timeout
    #[arg(long, default_value_t = 30_000)]
    bridge_timeout_ms: u64,
    /// Print a JSON summary on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Vocabulary file
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Without both tables only the temperature adjustment runs
    #[arg(long, requires = "model_freq")]
    target_freq: Option<PathBuf>,
    /// Frequency table of text sampled from the model
    #[arg(long, requires = "target_freq")]
    model_freq: Option<PathBuf>,
    #[command(flatten)]
    reform: ReformArgs,
    /// Sampling key; random when absent
    #[arg(long, env = "STEGO_KEY", hide_env_values = true)]
    key: Option<String>,
    /// Tokens per stream
    #[arg(long, default_value_t = 64)]
    len: usize,
    /// Number of streams; stream i uses nonce + i
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long)]
    prompt: Option<String>,
    /// Quantization precision in bits (8 to 32)
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision: u32,
    #[arg(long, default_value_t = 0)]
    nonce: u64,
    /// Corpus output, one stream per line
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    records: Option<PathBuf>,
    /// Print a JSON summary on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Generated corpus, one document per line
    #[arg(long)]
    generated: PathBuf,
    /// Target corpus, one document per line
    #[arg(long)]
    target: PathBuf,
    /// Vocabulary file
    #[arg(long)]
    vocab: PathBuf,
    /// Built-in model used as the perplexity judge
    #[arg(long)]
    model: PathBuf,
    /// Generation records (JSON array) for entropy and embedding rate
    #[arg(long)]
    records: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    distinct: Vec<usize>,
    /// Report JSON output
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a JSON summary on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Vocabulary file
    #[arg(long)]
    vocab: PathBuf,
    /// Built-in n-gram model file
    #[arg(long)]
    model: PathBuf,
    /// Frequency table of the target corpus
    #[arg(long)]
    target_freq: PathBuf,
    /// Frequency table of text sampled from the model
    #[arg(long)]
    model_freq: PathBuf,
    /// Codec: ac, meteor, discop or adg
    #[arg(long, default_value = "discop")]
    algo: CodecKind,
    /// Comma-separated alpha values
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2")]
    alphas: Vec<f64>,
    /// Comma-separated c values
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.5")]
    cs: Vec<f64>,
    /// Scale of the entropy-driven temperature rise
    #[arg(long, default_value_t = 0.01)]
    theta: f64,
    /// Temperature at zero entropy
    #[arg(long, default_value_t = 1.0)]
    base_temp: f64,
    /// Sessions per grid cell
    #[arg(long, default_value_t = 20)]
    sessions: usize,
    /// Random message bits per session
    #[arg(long, default_value_t = 128)]
    msg_bits: usize,
    /// Give up after this many tokens
    #[arg(long, default_value_t = 512)]
    max_len: usize,
    /// Quantization precision in bits (8 to 32)
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision: u32,
    /// Seed for the sweep keys and messages
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output
    #[arg(long)]
    out: PathBuf,
    /// Print a JSON summary on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ServeMockArgs {
    /// Built-in n-gram model file
    #[arg(long)]
    model: PathBuf,
    /// Listen on this address and serve one connection; stdio when absent
    #[arg(long)]
    tcp: Option<String>,
}

/// Raised when the message did not fit in `max_len` tokens.
#[derive(Debug, thiserror::Error)]
#[error("message only partially embedded: {embedded} of {required} payload bits within {max_len} tokens; nothing written")]
pub struct PartialEmbed {
    pub embedded: usize,
    pub required: usize,
    pub max_len: usize,
}

/// Runs the binary with the process arguments.
pub fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    let args = match config::expand(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Maps an error chain to the documented exit codes.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<PartialEmbed>().is_some() {
            return EXIT_PARTIAL;
        }
        if let Some(e) = cause.downcast_ref::<StegoError>() {
            return match e {
                StegoError::ArtifactMismatch { .. } | StegoError::Incompatible(_) => EXIT_MISMATCH,
                StegoError::Desync { .. } | StegoError::CorruptPayload(_) => EXIT_DESYNC,
                StegoError::Malformed(_) | StegoError::InvalidConfig(_) => EXIT_MALFORMED,
                StegoError::Io(_) | StegoError::Bridge(_) => EXIT_FAILURE,
            };
        }
    }
    EXIT_FAILURE
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::BuildVocab(a) => build_vocab(a),
        Command::BuildFreq(a) => build_freq(a),
        Command::MergeFreq(a) => merge_freq(a),
        Command::TrainLm(a) => train_lm(a),
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::ServeMock(a) => serve(a),
    }
}

fn emit(json_flag: bool, value: serde_json::Value, human: impl FnOnce() -> String) {
    if json_flag {
        let mut v = value;
        v["schema"] = json!(OUTPUT_SCHEMA);
        println!("{v}");
    } else {
        println!("{}", human());
    }
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path)
        .map_err(StegoError::from)
        .with_context(|| format!("reading {}", path.display()))
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    String::from_utf8(read(path)?)
        .map_err(|_| StegoError::Malformed(format!("{} is not UTF-8", path.display())).into())
}

fn load_vocab(path: &Path) -> anyhow::Result<Vocabulary> {
    Vocabulary::from_text(&read_text(path)?).with_context(|| format!("loading {}", path.display()))
}

fn load_freq(path: &Path, vocab: &Vocabulary) -> anyhow::Result<FreqTable> {
    FreqTable::from_tsv(&read_text(path)?, vocab).with_context(|| format!("loading {}", path.display()))
}

fn load_model(path: &Path, vocab: &Vocabulary) -> anyhow::Result<NGramModel> {
    let m = NGramModel::from_tsv(&read_text(path)?).with_context(|| format!("loading {}", path.display()))?;
    check_model_vocab(&m, vocab)?;
    Ok(m)
}

fn check_model_vocab(m: &NGramModel, vocab: &Vocabulary) -> anyhow::Result<()> {
    if *m.vocab() != vocab.identity() {
        return Err(StegoError::Incompatible("model was trained with a different vocabulary".into()).into());
    }
    Ok(())
}

fn load_corpora(paths: &[PathBuf], vocab: &Vocabulary) -> anyhow::Result<Vec<Vec<TokenId>>> {
    let mut docs = Vec::new();
    for p in paths {
        docs.extend(tokenize_corpus(&read(p)?, vocab).with_context(|| format!("tokenizing {}", p.display()))?);
    }
    Ok(docs)
}

fn parse_key(hex_key: &str) -> anyhow::Result<SecretKey> {
    SecretKey::from_hex(hex_key.trim()).context("parsing --key")
}

fn stop_tokens(vocab: &Vocabulary) -> Vec<TokenId> {
    vocab.eos_id().into_iter().collect()
}

fn prompt_ids(prompt: Option<&str>, vocab: &Vocabulary) -> anyhow::Result<Vec<TokenId>> {
    match prompt {
        None => Ok(Vec::new()),
        Some(p) => Ok(tokenize(p.as_bytes(), vocab, vocab.scheme())?),
    }
}

fn open_provider(
    spec: &ProviderRef,
    vocab: &Vocabulary,
    precision: u32,
    timeout_ms: u64,
    model_override: Option<&Path>,
) -> anyhow::Result<Box<dyn DistributionProvider>> {
    let timeout = Duration::from_millis(timeout_ms);
    Ok(match spec {
        ProviderRef::Ngram { model } => {
            let bytes = model.read_verified("model", model_override)?;
            let text = String::from_utf8(bytes).map_err(|_| StegoError::Malformed("model is not UTF-8".into()))?;
            let m = NGramModel::from_tsv(&text)?;
            check_model_vocab(&m, vocab)?;
            Box::new(NGramProvider::new(Arc::new(m)))
        }
        ProviderRef::Tcp { addr } => Box::new(
            BridgeProvider::connect_tcp(addr.as_str(), &vocab.identity(), precision, timeout)
                .with_context(|| format!("connecting to bridge at {addr}"))?,
        ),
        ProviderRef::Command { command } => {
            let mut parts = command.split_whitespace().map(str::to_string);
            let program = parts.next().ok_or_else(|| StegoError::InvalidConfig("empty --bridge-cmd".into()))?;
            let rest: Vec<String> = parts.collect();
            Box::new(
                BridgeProvider::spawn(&program, &rest, &vocab.identity(), precision, timeout)
                    .with_context(|| format!("starting bridge {command:?}"))?,
            )
        }
    })
}

fn provider_ref(p: &ProviderArgs) -> anyhow::Result<ProviderRef> {
    match (&p.model, &p.bridge_tcp, &p.bridge_cmd) {
        (Some(m), None, None) => Ok(ProviderRef::Ngram { model: ArtifactRef::of(m)? }),
        (None, Some(a), None) => Ok(ProviderRef::Tcp { addr: a.clone() }),
        (None, None, Some(c)) => Ok(ProviderRef::Command { command: c.clone() }),
        _ => Err(StegoError::InvalidConfig("give exactly one of --model, --bridge-tcp, --bridge-cmd".into()).into()),
    }
}

fn reform_context(
    reform: &ReformArgs,
    target: Option<FreqTable>,
    model: Option<FreqTable>,
) -> anyhow::Result<Arc<ReformContext>> {
    Ok(Arc::new(match (target, model) {
        (Some(t), Some(m)) => {
            let cfg = reform.to_config(t.order());
            ReformContext::new(cfg, Arc::new(t), Arc::new(m))?
        }
        _ => ReformContext::sequential_only(reform.to_config(1))?,
    }))
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s.into_bytes()
}

/// Drops a trailing stop token; the decoder does not need it.
fn serialize_stego(tokens: &[TokenId], vocab: &Vocabulary, stops: &[TokenId], format: StegoFormat) -> anyhow::Result<Vec<u8>> {
    match format {
        StegoFormat::Ids => Ok(json_bytes(&json!({ "tokens": tokens }))),
        StegoFormat::Text => {
            let body = match tokens.last() {
                Some(t) if stops.contains(t) => &tokens[..tokens.len() - 1],
                _ => tokens,
            };
            let mut text = detokenize(body, vocab).context("stegotext has no text form; use --format ids")?;
            if vocab.scheme() == TokenScheme::Whitespace {
                text.push(b'\n');
            }
            Ok(text)
        }
    }
}

fn parse_stego(bytes: &[u8], vocab: &Vocabulary, format: StegoFormat) -> anyhow::Result<Vec<TokenId>> {
    match format {
        StegoFormat::Ids => {
            #[derive(serde::Deserialize)]
            struct Ids {
                tokens: Vec<TokenId>,
            }
            let ids: Ids = serde_json::from_slice(bytes).map_err(|e| StegoError::Malformed(format!("stegotext ids: {e}")))?;
            Ok(ids.tokens)
        }
        StegoFormat::Text => Ok(tokenize(bytes, vocab, vocab.scheme())?),
    }
}

fn build_vocab(a: BuildVocabArgs) -> anyhow::Result<()> {
    let vocab = match a.scheme {
        TokenScheme::Byte => Vocabulary::bytes(!a.no_eos),
        TokenScheme::Whitespace => {
            let texts = a.corpus.iter().map(|p| read_text(p)).collect::<anyhow::Result<Vec<_>>>()?;
            Vocabulary::build_whitespace(texts.iter().map(String::as_str), a.min_count, !a.no_eos)?
        }
    };
    write_atomic(&a.out, vocab.to_text().as_bytes())?;
    emit(
        a.json,
        json!({"command": "build-vocab", "size": vocab.len(), "hash": vocab.hash(), "out": a.out}),
        || format!("vocabulary of {} tokens -> {}", vocab.len(), a.out.display()),
    );
    Ok(())
}

fn build_freq(a: BuildFreqArgs) -> anyhow::Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let docs = load_corpora(&a.corpus, &vocab)?;
    let table = count_frequencies(&docs, a.order, &vocab)?;
    write_atomic(&a.out, table.to_tsv(&vocab)?.as_bytes())?;
    emit(
        a.json,
        json!({"command": "build-freq", "order": a.order, "total": table.total(), "distinct": table.distinct(), "out": a.out}),
        || format!("{} {}-grams ({} distinct) -> {}", table.total(), a.order, table.distinct(), a.out.display()),
    );
    Ok(())
}

fn merge_freq(a: MergeFreqArgs) -> anyhow::Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let mut tables = a.inputs.iter().map(|p| load_freq(p, &vocab));
    let mut merged = tables.next().expect("at least one input")?;
    for t in tables {
        merged = merge_frequencies(&merged, &t?)?;
    }
    write_atomic(&a.out, merged.to_tsv(&vocab)?.as_bytes())?;
    emit(
        a.json,
        json!({"command": "merge-freq", "inputs": a.inputs.len(), "total": merged.total(), "out": a.out}),
        || format!("merged {} tables, {} n-grams -> {}", a.inputs.len(), merged.total(), a.out.display()),
    );
    Ok(())
}

fn train_lm(a: TrainLmArgs) -> anyhow::Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let docs = load_corpora(&a.corpus, &vocab)?;
    let model = train_ngram(&docs, a.order, parse_kappa(&a.kappa)?, &vocab)?;
    write_atomic(&a.out, model.to_tsv().as_bytes())?;
    emit(
        a.json,
        json!({"command": "train-lm", "order": a.order, "contexts": model.context_count(), "out": a.out}),
        || format!("order-{} model with {} contexts -> {}", a.order, model.context_count(), a.out.display()),
    );
    Ok(())
}

fn encode(a: EncodeArgs) -> anyhow::Result<()> {
    let key = parse_key(&a.key)?;
    let message = match (&a.msg, &a.msg_hex) {
        (Some(p), None) => read(p)?,
        (None, Some(h)) => hex::decode(h.trim()).map_err(|e| StegoError::Malformed(format!("--msg-hex: {e}")))?,
        _ => bail!(StegoError::InvalidConfig("give exactly one of --msg, --msg-hex".into())),
    };
    let vocab_ref = ArtifactRef::of(&a.vocab)?;
    let vocab = load_vocab(&a.vocab)?;
    let target = load_freq(&a.target_freq, &vocab)?;
    let model_freq = load_freq(&a.model_freq, &vocab)?;
    let reform_cfg = a.reform.to_config(target.order());
    let rc = reform_context(&a.reform, Some(target), Some(model_freq))?;
    let provider_spec = provider_ref(&a.provider)?;
    let provider = open_provider(&provider_spec, &vocab, a.precision, a.provider.bridge_timeout_ms, None)?;

    let format = a.format.unwrap_or(match vocab.scheme() {
        TokenScheme::Whitespace => StegoFormat::Text,
        TokenScheme::Byte => StegoFormat::Ids,
    });
    let nonce = a.nonce.unwrap_or_else(|| rand::thread_rng().gen());
    let stops = stop_tokens(&vocab);
    let cfg = SessionConfig {
        codec: a.algo,
        precision: a.precision,
        max_len: a.max_len,
        stop_tokens: stops.clone(),
        prompt: prompt_ids(a.prompt.as_deref(), &vocab)?,
        nonce,
        record_digests: a.hash_log,
    };
    let mut session = StegoSession::new(provider, rc, key, cfg.clone())?;
    let out = session.encode(&bytes_to_bits(&message))?;
    if let EmbedStatus::Partial { embedded, required } = out.status {
        return Err(PartialEmbed { embedded, required, max_len: a.max_len }.into());
    }
    let stego = serialize_stego(out.tokens(), &vocab, &stops, format)?;
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        vocab: vocab_ref,
        vocab_identity: vocab.identity(),
        provider: provider_spec,
        target_freq: ArtifactRef::of(&a.target_freq)?,
        model_freq: ArtifactRef::of(&a.model_freq)?,
        reform: reform_cfg,
        codec: a.algo,
        precision: a.precision,
        nonce,
        max_len: a.max_len,
        prompt: cfg.prompt,
        stop_tokens: stops,
        format,
        stego_sha256: crate::corpus::sha256_hex(&stego),
    };
    let manifest_path = a.manifest.clone().unwrap_or_else(|| sidecar(&a.out, "manifest.json"));
    write_atomic(&a.out, &stego)?;
    write_atomic(&manifest_path, manifest.to_json().as_bytes())?;
    if let Some(p) = &a.records {
        write_atomic(p, &json_bytes(&[&out.record]))?;
    }
    let r = &out.record;
    emit(
        a.json,
        json!({
            "command": "encode",
            "status": "complete",
            "codec": a.algo,
            "tokens": r.len(),
            "bits": r.total_bits(),
            "message_bits": message.len() * 8,
            "embedding_rate": r.embedding_rate(),
            "nonce": nonce,
            "out": a.out,
            "manifest": manifest_path,
        }),
        || {
            format!(
                "{} message bits in {} tokens ({:.3} bits/token) -> {}\nmanifest -> {}",
                message.len() * 8,
                r.len(),
                r.embedding_rate(),
                a.out.display(),
                manifest_path.display()
            )
        },
    );
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn decode(a: DecodeArgs) -> anyhow::Result<()> {
    let key = parse_key(&a.key)?;
    let manifest = Manifest::from_json(&read_text(&a.manifest)?)?;
    let vocab_bytes = manifest.vocab.read_verified("vocabulary", a.vocab.as_deref())?;
    let vocab = Vocabulary::from_text(
        std::str::from_utf8(&vocab_bytes).map_err(|_| StegoError::Malformed("vocabulary is not UTF-8".into()))?,
    )?;
    if vocab.identity() != manifest.vocab_identity {
        bail!(StegoError::Incompatible("vocabulary identity differs from the manifest".into()));
    }
    let table = |r: &ArtifactRef, name: &str, over: Option<&Path>| -> anyhow::Result<FreqTable> {
        let bytes = r.read_verified(name, over)?;
        let text = String::from_utf8(bytes).map_err(|_| StegoError::Malformed(format!("{name} is not UTF-8")))?;
        Ok(FreqTable::from_tsv(&text, &vocab)?)
    };
    let target = table(&manifest.target_freq, "target frequency table", a.target_freq.as_deref())?;
    let model_freq = table(&manifest.model_freq, "model frequency table", a.model_freq.as_deref())?;
    let rc = Arc::new(ReformContext::new(manifest.reform.clone(), Arc::new(target), Arc::new(model_freq))?);
    let provider_spec = match (&a.bridge_tcp, &a.bridge_cmd, &manifest.provider) {
        (Some(addr), _, ProviderRef::Tcp { .. } | ProviderRef::Command { .. }) => ProviderRef::Tcp { addr: addr.clone() },
        (None, Some(c), ProviderRef::Tcp { .. } | ProviderRef::Command { .. }) => ProviderRef::Command { command: c.clone() },
        (None, None, p) => p.clone(),
        _ => bail!(StegoError::InvalidConfig("bridge overrides need a bridge manifest".into())),
    };
    let provider = open_provider(&provider_spec, &vocab, manifest.precision, a.bridge_timeout_ms, a.model.as_deref())?;
    let cfg = SessionConfig {
        codec: manifest.codec,
        precision: manifest.precision,
        max_len: manifest.max_len,
        stop_tokens: manifest.stop_tokens.clone(),
        prompt: manifest.prompt.clone(),
        nonce: manifest.nonce,
        record_digests: false,
    };
    let tokens = parse_stego(&read(&a.stego)?, &vocab, manifest.format)?;
    let mut session = StegoSession::new(provider, rc, key, cfg)?;
    let out = session.decode(&tokens)?;
    if out.message.len() % 8 != 0 {
        bail!(StegoError::CorruptPayload(format!("{} message bits is not a whole number of bytes", out.message.len())));
    }
    let bytes = bits_to_bytes(&out.message);
    write_atomic(&a.out, &bytes)?;
    emit(
        a.json,
        json!({"command": "decode", "tokens": tokens.len(), "message_bytes": bytes.len(), "out": a.out}),
        || format!("recovered {} bytes from {} tokens -> {}", bytes.len(), tokens.len(), a.out.display()),
    );
    Ok(())
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let (target, model_freq) = match (&a.target_freq, &a.model_freq) {
        (Some(t), Some(m)) => (Some(load_freq(t, &vocab)?), Some(load_freq(m, &vocab)?)),
        _ => (None, None),
    };
    let rc = reform_context(&a.reform, target, model_freq)?;
    let key = match &a.key {
        Some(k) => parse_key(k)?,
        None => SecretKey::from_bytes(rand::thread_rng().gen()),
    };
    let spec = provider_ref(&a.provider)?;
    let stops = stop_tokens(&vocab);
    let prompt = prompt_ids(a.prompt.as_deref(), &vocab)?;
    let mut provider = Some(open_provider(&spec, &vocab, a.precision, a.provider.bridge_timeout_ms, None)?);
    let mut lines = Vec::new();
    let mut records = Vec::new();
    for i in 0..a.count {
        let cfg = SessionConfig {
            codec: CodecKind::Discop,
            precision: a.precision,
            max_len: a.len.max(1),
            stop_tokens: stops.clone(),
            prompt: prompt.clone(),
            nonce: a.nonce.wrapping_add(i as u64),
            record_digests: false,
        };
        let mut session = StegoSession::new(provider.take().expect("provider"), rc.clone(), key, cfg)?;
        let record = session.generate_random(a.len)?;
        provider = Some(session.into_provider());
        let body = match record.tokens.last() {
            Some(t) if stops.contains(t) => &record.tokens[..record.tokens.len() - 1],
            _ => &record.tokens[..],
        };
        let mut text = detokenize(body, &vocab)?;
        if text.contains(&b'\n') {
            bail!(StegoError::Malformed("generated text contains a newline; corpus lines would split".into()));
        }
        text.push(b'\n');
        lines.extend(text);
        records.push(record);
    }
    write_atomic(&a.out, &lines)?;
    if let Some(p) = &a.records {
        write_atomic(p, &json_bytes(&records))?;
    }
    let tokens: usize = records.iter().map(GenerationRecord::len).sum();
    emit(
        a.json,
        json!({"command": "generate", "streams": a.count, "tokens": tokens, "out": a.out}),
        || format!("{} streams, {} tokens -> {}", a.count, tokens, a.out.display()),
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let judge = load_model(&a.model, &vocab)?;
    let generated = load_corpora(std::slice::from_ref(&a.generated), &vocab)?;
    let target_docs = load_corpora(std::slice::from_ref(&a.target), &vocab)?;
    let target = count_frequencies(&target_docs, 1, &vocab)?;
    let mut records: Vec<GenerationRecord> = Vec::new();
    for p in &a.records {
        let r: Vec<GenerationRecord> = serde_json::from_slice(&read(p)?)
            .map_err(|e| StegoError::Malformed(format!("{}: {e}", p.display())))?;
        records.extend(r);
    }
    let report = metrics::evaluate(&EvalInput {
        vocab: &vocab,
        generated: &generated,
        target: &target,
        judge: &judge,
        records: &records,
        distinct: &a.distinct,
    })?;
    if let Some(p) = &a.out {
        write_atomic(p, report.to_json().as_bytes())?;
    }
    if a.json {
        println!("{}", serde_json::to_string(&report).expect("report serializes"));
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

/// One sweep cell.
#[derive(Debug, Clone, serde::Serialize)]
struct SweepRow {
    alpha: f64,
    c: f64,
    codec: CodecKind,
    sessions: usize,
    complete: usize,
    tokens: usize,
    embedding_rate: f64,
    entropy_per_token: f64,
    mean_temperature: f64,
    tv: f64,
    kl: f64,
}

fn sweep(a: SweepArgs) -> anyhow::Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let model = Arc::new(load_model(&a.model, &vocab)?);
    let target = Arc::new(load_freq(&a.target_freq, &vocab)?);
    let model_freq = Arc::new(load_freq(&a.model_freq, &vocab)?);
    let cells: Vec<(f64, f64)> = a
        .alphas
        .iter()
        .flat_map(|&al| a.cs.iter().map(move |&c| (al, c)))
        .collect();
    let stops = stop_tokens(&vocab);
    let rows = cells
        .par_iter()
        .map(|&(alpha, c)| -> anyhow::Result<SweepRow> {
            let cfg = ReformConfig {
                theta: a.theta,
                c,
                alpha,
                base_temp: a.base_temp,
                ngram_order: target.order(),
                ..ReformConfig::default()
            };
            let rc = Arc::new(ReformContext::new(cfg, target.clone(), model_freq.clone())?);
            let mut records = Vec::with_capacity(a.sessions);
            let mut complete = 0;
            for s in 0..a.sessions {
                // every cell sees the same keys and messages
                let mut rng = ChaCha20Rng::seed_from_u64(a.seed.wrapping_add(s as u64));
                let key = SecretKey::from_bytes(rng.gen());
                let msg: Vec<bool> = (0..a.msg_bits).map(|_| rng.gen()).collect();
                let scfg = SessionConfig {
                    codec: a.algo,
                    precision: a.precision,
                    max_len: a.max_len,
                    stop_tokens: stops.clone(),
                    prompt: Vec::new(),
                    nonce: s as u64,
                    record_digests: false,
                };
                let mut session = StegoSession::new(NGramProvider::new(model.clone()), rc.clone(), key, scfg)?;
                let out = session.encode(&msg)?;
                complete += out.is_complete() as usize;
                records.push(out.record);
            }
            let streams: Vec<Vec<TokenId>> = records.iter().map(|r| r.tokens.clone()).collect();
            let generated = count_frequencies(&streams, target.order(), &vocab)?;
            let (tv, kl) = metrics::table_divergences(&generated, &target)?;
            let steps: usize = records.iter().map(GenerationRecord::len).sum();
            let temp_sum: f64 = records.iter().flat_map(|r| &r.temperature).sum();
            Ok(SweepRow {
                alpha,
                c,
                codec: a.algo,
                sessions: a.sessions,
                complete,
                tokens: steps,
                embedding_rate: metrics::pooled_embedding_rate(&records)?,
                entropy_per_token: metrics::entropy_per_token(&records)?,
                mean_temperature: temp_sum / steps as f64,
                tv,
                kl,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut csv = String::from("alpha,c,codec,sessions,complete,tokens,embedding_rate,entropy_per_token,mean_temperature,tv,kl\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.alpha, r.c, r.codec, r.sessions, r.complete, r.tokens, r.embedding_rate, r.entropy_per_token, r.mean_temperature, r.tv, r.kl
        ));
    }
    write_atomic(&a.out, csv.as_bytes())?;
    emit(
        a.json,
        json!({"command": "sweep", "cells": rows, "out": a.out}),
        || format!("{} cells -> {}", rows.len(), a.out.display()),
    );
    Ok(())
}

fn serve(a: ServeMockArgs) -> anyhow::Result<()> {
    let model = NGramModel::from_tsv(&read_text(&a.model)?)?;
    match &a.tcp {
        None => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            serve_mock(&model, stdin.lock(), stdout.lock())?;
        }
        Some(addr) => {
            let listener = std::net::TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
            eprintln!("listening on {}", listener.local_addr()?);
            let (stream, _) = listener.accept()?;
            let reader = std::io::BufReader::new(stream.try_clone()?);
            serve_mock(&model, reader, stream)?;
        }
    }
    Ok(())
}
