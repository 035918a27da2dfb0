//! Synthetic skewed-model benchmark.
//!
//! The target environment is a bigram chain. After token `t` the next token
//! follows a Zipf law with a row-specific exponent `s_t` spread around
//! `zipf_exponent`. The "model" uses the same rows raised to `sharpen` and
//! renormalized, so every row (and the unigram marginal) is sharper than the
//! environment it imitates. With `row_spread = 0` every row is the same and
//! the model is memoryless.
//!
//! The model corpus is sampled from the model itself, and the target
//! corpus from the target chain.

use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codecs::{CodecKind, SecretKey};
use crate::corpus::{count_frequencies, FreqTable, TokenId, Vocabulary};
use crate::error::{Result, StegoError};
use crate::lm::{ContextState, DistributionProvider, LogitsVector};
use crate::pipeline::{SessionConfig, StegoSession};
use crate::reformer::{ReformConfig, ReformContext};

#[derive(Clone, Debug, PartialEq)]
pub struct SkewedSpec {
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    /// Row exponents are drawn uniformly from
    /// `zipf_exponent · [1 - row_spread, 1 + row_spread]`.
    pub row_spread: f64,
    /// Model rows are `row^sharpen`, renormalized.
    pub sharpen: f64,
    pub target_tokens: usize,
    pub model_tokens: usize,
    pub seed: u64,
}

impl Default for SkewedSpec {
    fn default() -> Self {
        SkewedSpec {
            vocab_size: 64,
            zipf_exponent: 1.0,
            row_spread: 0.5,
            sharpen: 1.75,
            target_tokens: 200_000,
            model_tokens: 200_000,
            seed: 0,
        }
    }
}

/// Row `t` is the distribution after token `t`; the last row is used for an
/// empty history.
#[derive(Clone, Debug)]
pub struct RowProvider {
    rows: Arc<Vec<LogitsVector>>,
}

impl RowProvider {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let v = rows.len().saturating_sub(1);
        if v == 0 || rows.iter().any(|r| r.len() != v) {
            return Err(StegoError::config("need |V| + 1 rows of |V| probabilities"));
        }
        let rows = rows
            .iter()
            .map(|r| LogitsVector::new(r.iter().map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY }).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(RowProvider { rows: Arc::new(rows) })
    }
}

impl DistributionProvider for RowProvider {
    fn vocab_size(&self) -> usize {
        self.rows.len() - 1
    }

    fn next_logits(&mut self, ctx: &ContextState) -> Result<LogitsVector> {
        let row = ctx.history().last().map_or(self.rows.len() - 1, |&t| t as usize);
        Ok(self.rows[row].clone())
    }
}

pub struct SkewedBenchmark {
    pub vocab: Vocabulary,
    pub target_rows: Vec<Vec<f64>>,
    pub model_rows: Vec<Vec<f64>>,
    pub target: Arc<FreqTable>,
    pub model: Arc<FreqTable>,
}

fn normalized(w: impl Iterator<Item = f64>) -> Vec<f64> {
    let w: Vec<f64> = w.collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

impl SkewedBenchmark {
    pub fn build(spec: &SkewedSpec) -> Result<Self> {
        if spec.vocab_size < 2 {
            return Err(StegoError::config("benchmark needs at least two tokens"));
        }
        if !(0.0..1.0).contains(&spec.row_spread) {
            return Err(StegoError::config("row_spread must be in [0, 1)"));
        }
        // id 0 is <unk>; the benchmark uses every id, so <unk> is word 0
        let vocab = Vocabulary::from_tokens((1..spec.vocab_size).map(|i| format!("w{i}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let target_rows: Vec<Vec<f64>> = (0..=spec.vocab_size)
            .map(|_| {
                let s = spec.zipf_exponent * (1.0 + spec.row_spread * rng.gen_range(-1.0..=1.0));
                normalized((0..spec.vocab_size).map(|i| (i as f64 + 1.0).powf(-s)))
            })
            .collect();
        let model_rows: Vec<Vec<f64>> = target_rows
            .iter()
            .map(|r| normalized(r.iter().map(|p| p.powf(spec.sharpen))))
            .collect();

        let picks: Vec<WeightedIndex<f64>> = target_rows
            .iter()
            .map(|r| WeightedIndex::new(r).expect("positive weights"))
            .collect();
        let mut prev = spec.vocab_size;
        let target_stream: Vec<TokenId> = (0..spec.target_tokens)
            .map(|_| {
                prev = picks[prev].sample(&mut rng);
                prev as TokenId
            })
            .collect();
        let target = count_frequencies(&[target_stream], 1, &vocab)?;

        // the model corpus is what the unmodified model produces
        let mut cfg = SessionConfig::new(CodecKind::Discop);
        cfg.nonce = spec.seed;
        cfg.max_len = spec.model_tokens.max(1);
        let plain = Arc::new(ReformContext::sequential_only(ReformConfig::disabled())?);
        let key = SecretKey::from_bytes(rng.gen());
        let mut session = StegoSession::new(RowProvider::from_rows(&model_rows)?, plain, key, cfg)?;
        let model_stream = session.generate_random(spec.model_tokens)?.tokens;
        let model = count_frequencies(&[model_stream], 1, &vocab)?;

        Ok(SkewedBenchmark {
            vocab,
            target_rows,
            model_rows,
            target: Arc::new(target),
            model: Arc::new(model),
        })
    }

    pub fn provider(&self) -> RowProvider {
        RowProvider::from_rows(&self.model_rows).expect("model rows are valid")
    }

    pub fn reform(&self, config: ReformConfig) -> Result<Arc<ReformContext>> {
        Ok(Arc::new(ReformContext::new(
            config,
            self.target.clone(),
            self.model.clone(),
        )?))
    }

    /// Unigram table of generated streams, in the benchmark vocabulary.
    pub fn table(&self, streams: &[Vec<TokenId>]) -> Result<FreqTable> {
        count_frequencies(streams, 1, &self.vocab)
    }
}
