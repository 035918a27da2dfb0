//! Next-token distribution providers and the float-side distribution helpers.

pub mod bridge;

use std::sync::Arc;

use crate::corpus::{NGramModel, TokenId};
use crate::error::{Result, StegoError};

pub use bridge::BridgeProvider;

/// Prompt plus everything generated so far. Append-only.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContextState {
    tokens: Vec<TokenId>,
    prompt_len: usize,
}

impl ContextState {
    pub fn new(prompt: &[TokenId]) -> Self {
        ContextState {
            tokens: prompt.to_vec(),
            prompt_len: prompt.len(),
        }
    }

    pub fn prompt(&self) -> &[TokenId] {
        &self.tokens[..self.prompt_len]
    }

    pub fn generated(&self) -> &[TokenId] {
        &self.tokens[self.prompt_len..]
    }

    /// Prompt followed by generated tokens.
    pub fn history(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn step(&self) -> usize {
        self.tokens.len() - self.prompt_len
    }

    pub fn push(&mut self, token: TokenId) {
        self.tokens.push(token);
    }
}

/// Real-valued next-token scores. Entries are finite, or `-inf` for tokens a
/// provider rules out entirely.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitsVector {
    pub scores: Vec<f64>,
}

impl LogitsVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(StegoError::malformed("empty logits vector"));
        }
        if scores.iter().any(|s| s.is_nan() || *s == f64::INFINITY) {
            return Err(StegoError::malformed("logits must be finite or -inf"));
        }
        if scores.iter().all(|s| *s == f64::NEG_INFINITY) {
            return Err(StegoError::malformed("logits rule out every token"));
        }
        Ok(LogitsVector { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Normalized next-token probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbDist {
    pub probs: Vec<f64>,
}

impl ProbDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(StegoError::malformed("probabilities must be finite and >= 0"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(StegoError::malformed(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(ProbDist { probs })
    }

    pub fn uniform(n: usize) -> Self {
        ProbDist {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Highest-probability token, lowest id on ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as TokenId
    }

    /// Rescales to sum one. Leaves all-zero input untouched.
    pub(crate) fn renormalize(mut probs: Vec<f64>) -> Self {
        let sum: f64 = probs.iter().sum();
        if sum > 0.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        ProbDist { probs }
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &LogitsVector) -> ProbDist {
    let max = logits.max();
    let exps: Vec<f64> = logits.scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ProbDist {
        probs: exps.into_iter().map(|e| e / sum).collect(),
    }
}

/// Token ids ordered by descending probability, ascending id on ties.
pub(crate) fn rank_tokens(dist: &ProbDist) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| {
        dist.probs[b]
            .partial_cmp(&dist.probs[a])
            .expect("probabilities are finite")
            .then(a.cmp(&b))
    });
    order
}

/// Top-k followed by top-p (nucleus) filtering, then renormalization.
/// `top_k = |V|` and `top_p = 1` is the identity.
pub fn truncate(dist: &ProbDist, top_k: usize, top_p: f64) -> Result<ProbDist> {
    let n = dist.len();
    if top_k == 0 || top_k > n {
        return Err(StegoError::config(format!(
            "top_k must be in 1..={n}, got {top_k}"
        )));
    }
    if !(top_p > 0.0 && top_p <= 1.0) {
        return Err(StegoError::config(format!(
            "top_p must be in (0, 1], got {top_p}"
        )));
    }
    if top_k == n && top_p == 1.0 {
        return Ok(dist.clone());
    }
    let ranked = rank_tokens(dist);
    let kept_k = &ranked[..top_k];
    let mass_k: f64 = kept_k.iter().map(|&i| dist.probs[i]).sum();

    let mut keep = vec![false; n];
    let mut cum = 0.0;
    for &i in kept_k {
        keep[i] = true;
        cum += dist.probs[i] / mass_k;
        if cum >= top_p {
            break;
        }
    }
    let probs = dist
        .probs
        .iter()
        .zip(&keep)
        .map(|(&p, &k)| if k { p } else { 0.0 })
        .collect();
    Ok(ProbDist::renormalize(probs))
}

/// Source of next-token scores for one generation session.
pub trait DistributionProvider: Send {
    fn vocab_size(&self) -> usize;

    /// Scores for the token following `ctx`. Identical contexts must yield
    /// bit-identical vectors.
    fn next_logits(&mut self, ctx: &ContextState) -> Result<LogitsVector>;
}

impl<P: DistributionProvider + ?Sized> DistributionProvider for Box<P> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_logits(&mut self, ctx: &ContextState) -> Result<LogitsVector> {
        (**self).next_logits(ctx)
    }
}

/// Built-in provider backed by an [`NGramModel`]; logits are natural-log
/// probabilities of the exact rational conditionals.
#[derive(Clone, Debug)]
pub struct NGramProvider {
    model: Arc<NGramModel>,
}

impl NGramProvider {
    pub fn new(model: Arc<NGramModel>) -> Self {
        NGramProvider { model }
    }

    pub fn model(&self) -> &NGramModel {
        &self.model
    }
}

impl DistributionProvider for NGramProvider {
    fn vocab_size(&self) -> usize {
        self.model.vocab_size()
    }

    fn next_logits(&mut self, ctx: &ContextState) -> Result<LogitsVector> {
        let size = self.model.vocab_size() as TokenId;
        if let Some(bad) = ctx.history().iter().find(|&&t| t >= size) {
            return Err(StegoError::malformed(format!(
                "context token {bad} outside vocabulary of size {size}"
            )));
        }
        Ok(LogitsVector {
            scores: self.model.conditional(ctx.history()).log_probs(),
        })
    }
}

/// Memoryless provider that returns the same logits at every step.
#[derive(Clone, Debug)]
pub struct FixedProvider {
    logits: LogitsVector,
}

impl FixedProvider {
    pub fn from_logits(logits: LogitsVector) -> Self {
        FixedProvider { logits }
    }

    /// Logits `ln p`; zero-probability tokens become `-inf`.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        let scores = probs
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect();
        Ok(FixedProvider {
            logits: LogitsVector::new(scores)?,
        })
    }
}

impl DistributionProvider for FixedProvider {
    fn vocab_size(&self) -> usize {
        self.logits.len()
    }

    fn next_logits(&mut self, _ctx: &ContextState) -> Result<LogitsVector> {
        Ok(self.logits.clone())
    }
}

/// Zero-entropy provider: after token `t` the next token is always
/// `(t + 1) mod |V|` (token 0 at the first step of an empty history).
#[derive(Clone, Debug)]
pub struct ChainProvider {
    vocab_size: usize,
}

impl ChainProvider {
    pub fn new(vocab_size: usize) -> Self {
        ChainProvider { vocab_size }
    }
}

impl DistributionProvider for ChainProvider {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logits(&mut self, ctx: &ContextState) -> Result<LogitsVector> {
        let next = ctx
            .history()
            .last()
            .map_or(0, |&t| (t as usize + 1) % self.vocab_size);
        let mut scores = vec![f64::NEG_INFINITY; self.vocab_size];
        scores[next] = 0.0;
        Ok(LogitsVector { scores })
    }
}

/// Shannon entropy in bits.
pub fn entropy_bits(dist: &ProbDist) -> f64 {
    -dist
        .probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}
