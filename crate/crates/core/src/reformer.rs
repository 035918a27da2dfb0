//! Per-step reshaping of the model's next-token distribution.
//!
//! Two independent adjustments are composed at every generation step:
//!
//! * **sequential**: the logits are divided by a temperature that grows with
//!   the instantaneous entropy of the unmodified distribution,
//!   `TP = base + θ·log₂(1 + c·E)`;
//! * **spatial**: each candidate's logit is scaled by a factor
//!   `F = ln(2 + (f_D / f_M)^α)`, where `f_D` and `f_M` are the n-gram
//!   frequencies of the candidate in the target corpus and in a corpus sampled
//!   from the unmodified model.
//!
//! Logits are only defined up to an additive constant, so before the spatial
//! scaling they are shifted so the smallest finite logit is zero, and the
//! factors are divided by `ln 3` (the value of `F` when the two frequencies
//! agree). With this anchoring a token whose target frequency exceeds its
//! model frequency always gains mass relative to the others, and `α = 0`
//! leaves the distribution untouched.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{FreqTable, TokenId};
use crate::error::{Result, StegoError};
use crate::lm::{entropy_bits, softmax, truncate, ContextState, LogitsVector, ProbDist};

/// Order in which the two dimensions are applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReformOrder {
    /// Sequential (temperature) first, then spatial.
    #[default]
    TaSa,
    /// Spatial first, then sequential.
    SaTa,
}

impl std::str::FromStr for ReformOrder {
    type Err = StegoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ta-sa" => Ok(ReformOrder::TaSa),
            "sa-ta" => Ok(ReformOrder::SaTa),
            other => Err(StegoError::config(format!("unknown reform order {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReformConfig {
    pub theta: f64,
    pub c: f64,
    pub alpha: f64,
    pub base_temp: f64,
    pub ngram_order: usize,
    /// Floor for absent n-grams; `None` means `1 / (total_M + |V|)`.
    pub epsilon_freq: Option<f64>,
    pub order: ReformOrder,
    /// `None` keeps the whole vocabulary.
    pub top_k: Option<usize>,
    pub top_p: f64,
}

impl Default for ReformConfig {
    fn default() -> Self {
        ReformConfig {
            theta: 0.01,
            c: 0.1,
            alpha: 0.1,
            base_temp: 1.0,
            ngram_order: 1,
            epsilon_freq: None,
            order: ReformOrder::TaSa,
            top_k: None,
            top_p: 1.0,
        }
    }
}

impl ReformConfig {
    /// Both adjustments off: plain softmax at `base_temp`.
    pub fn disabled() -> Self {
        ReformConfig {
            c: 0.0,
            alpha: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(StegoError::config(format!("{name} must be > 0, got {x}")))
            }
        };
        let nonneg = |name: &str, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(StegoError::config(format!("{name} must be >= 0, got {x}")))
            }
        };
        positive("theta", self.theta)?;
        nonneg("c", self.c)?;
        nonneg("alpha", self.alpha)?;
        positive("base_temp", self.base_temp)?;
        if let Some(eps) = self.epsilon_freq {
            positive("epsilon_freq", eps)?;
        }
        if self.ngram_order == 0 {
            return Err(StegoError::config("ngram_order must be at least 1"));
        }
        if self.top_k == Some(0) {
            return Err(StegoError::config("top_k must be at least 1"));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(StegoError::config(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        Ok(())
    }

    /// Largest temperature reachable over a vocabulary of `vocab_size`.
    pub fn max_temperature(&self, vocab_size: usize) -> f64 {
        temperature((vocab_size as f64).log2(), self)
    }
}

/// Target and model frequency tables plus configuration; immutable and
/// shareable across sessions.
#[derive(Clone, Debug)]
pub struct ReformContext {
    config: ReformConfig,
    tables: Option<SpatialTables>,
}

#[derive(Clone, Debug)]
struct SpatialTables {
    target: Arc<FreqTable>,
    model: Arc<FreqTable>,
    floor: f64,
    // unigram factors are context-free, so they are computed once
    unigram: Option<Vec<f64>>,
}

impl ReformContext {
    pub fn new(config: ReformConfig, target: Arc<FreqTable>, model: Arc<FreqTable>) -> Result<Self> {
        config.validate()?;
        if target.vocab() != model.vocab() {
            return Err(StegoError::Incompatible(
                "target and model frequency tables use different vocabularies".into(),
            ));
        }
        for (name, t) in [("target", &target), ("model", &model)] {
            if t.order() != config.ngram_order {
                return Err(StegoError::Incompatible(format!(
                    "{name} frequency table has order {}, config wants {}",
                    t.order(),
                    config.ngram_order
                )));
            }
        }
        let floor = config
            .epsilon_freq
            .unwrap_or_else(|| 1.0 / (model.total() as f64 + model.vocab().size as f64));
        let mut tables = SpatialTables {
            target,
            model,
            floor,
            unigram: None,
        };
        if config.ngram_order == 1 {
            let v = tables.target.vocab().size as TokenId;
            let factors = (0..v)
                .map(|t| factor_for(&tables, &config, &[t]))
                .collect();
            tables.unigram = Some(factors);
        }
        Ok(ReformContext {
            config,
            tables: Some(tables),
        })
    }

    /// Context without frequency tables; only the sequential dimension runs.
    pub fn sequential_only(config: ReformConfig) -> Result<Self> {
        config.validate()?;
        Ok(ReformContext {
            config,
            tables: None,
        })
    }

    pub fn config(&self) -> &ReformConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> Option<usize> {
        self.tables.as_ref().map(|t| t.target.vocab().size)
    }

    /// True when the spatial dimension has tables and a nonzero strength.
    pub fn spatial_enabled(&self) -> bool {
        self.tables.is_some() && self.config.alpha != 0.0
    }

    /// Raw factors `F` for every candidate following `ctx`, or `None` when the
    /// history is shorter than `ngram_order - 1`.
    pub fn spatial_factors(&self, ctx: &ContextState) -> Option<Vec<f64>> {
        let tables = self.tables.as_ref()?;
        if let Some(f) = &tables.unigram {
            return Some(f.clone());
        }
        let need = self.config.ngram_order - 1;
        let history = ctx.history();
        if history.len() < need {
            return None;
        }
        let prefix = &history[history.len() - need..];
        let v = tables.target.vocab().size;
        let neutral = factor_from_freqs(tables.floor, tables.floor, self.config.alpha);
        let mut target = vec![0u64; v];
        let mut model = vec![0u64; v];
        for (t, n) in tables.target.continuations(prefix) {
            target[t as usize] = n;
        }
        for (t, n) in tables.model.continuations(prefix) {
            model[t as usize] = n;
        }
        let (tt, mt) = (tables.target.total(), tables.model.total());
        Some(
            (0..v)
                .map(|i| {
                    if target[i] == 0 && model[i] == 0 {
                        neutral
                    } else {
                        let fd = rel_freq(target[i], tt, tables.floor);
                        let fm = rel_freq(model[i], mt, tables.floor);
                        factor_from_freqs(fd, fm, self.config.alpha)
                    }
                })
                .collect(),
        )
    }
}

fn rel_freq(count: u64, total: u64, floor: f64) -> f64 {
    if total == 0 {
        floor
    } else {
        (count as f64 / total as f64).max(floor)
    }
}

fn factor_from_freqs(fd: f64, fm: f64, alpha: f64) -> f64 {
    (2.0 + (fd / fm).powf(alpha)).ln()
}

fn factor_for(tables: &SpatialTables, config: &ReformConfig, gram: &[TokenId]) -> f64 {
    let fd = rel_freq(tables.target.count(gram), tables.target.total(), tables.floor);
    let fm = rel_freq(tables.model.count(gram), tables.model.total(), tables.floor);
    factor_from_freqs(fd, fm, config.alpha)
}

/// Instantaneous entropy in bits, `0·log 0 = 0`.
pub fn instantaneous_entropy(dist: &ProbDist) -> f64 {
    entropy_bits(dist)
}

/// `base_temp + θ·log₂(1 + c·E)`.
pub fn temperature(entropy: f64, cfg: &ReformConfig) -> f64 {
    cfg.base_temp + cfg.theta * (1.0 + cfg.c * entropy.max(0.0)).log2()
}

pub fn sequential_reform(logits: &LogitsVector, temp: f64) -> LogitsVector {
    LogitsVector {
        scores: logits.scores.iter().map(|&s| s / temp).collect(),
    }
}

/// `F(g) = ln(2 + (f_D(g) / f_M(g))^α)` with both frequencies floored; `g` is
/// the candidate preceded by its `ngram_order - 1` context tokens.
pub fn spatial_factor(gram: &[TokenId], rc: &ReformContext) -> Result<f64> {
    let tables = rc
        .tables
        .as_ref()
        .ok_or_else(|| StegoError::config("spatial factor needs frequency tables"))?;
    if gram.len() != rc.config.ngram_order {
        return Err(StegoError::config(format!(
            "n-gram of length {} for a table of order {}",
            gram.len(),
            rc.config.ngram_order
        )));
    }
    Ok(factor_for(tables, &rc.config, gram))
}

/// Elementwise `factor · logit`.
pub fn scale_logits(logits: &LogitsVector, factors: &[f64]) -> LogitsVector {
    LogitsVector {
        scores: logits
            .scores
            .iter()
            .zip(factors)
            .map(|(&s, &f)| s * f)
            .collect(),
    }
}

/// Spatial reformation: shift to a zero minimum, then scale each logit by
/// `F / ln 3`. Returns the logits unchanged when no factors apply.
pub fn spatial_reform(logits: &LogitsVector, rc: &ReformContext, ctx: &ContextState) -> LogitsVector {
    if !rc.spatial_enabled() {
        return logits.clone();
    }
    let Some(mut factors) = rc.spatial_factors(ctx) else {
        return logits.clone();
    };
    let neutral = 3f64.ln();
    factors.iter_mut().for_each(|f| *f /= neutral);
    let min = logits
        .scores
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(f64::INFINITY, f64::min);
    let shifted = LogitsVector {
        scores: logits.scores.iter().map(|&s| s - min).collect(),
    };
    scale_logits(&shifted, &factors)
}

/// Output of one reformation step.
#[derive(Clone, Debug, PartialEq)]
pub struct Reformed {
    pub dist: ProbDist,
    /// Entropy (bits) of the distribution that drove the temperature.
    pub entropy: f64,
    pub temperature: f64,
}

/// Full per-step pipeline: softmax, entropy, temperature, divide, spatial
/// scaling, softmax, then optional truncation.
pub fn reform_step(logits: &LogitsVector, rc: &ReformContext, ctx: &ContextState) -> Result<Reformed> {
    if let Some(v) = rc.vocab_size() {
        if v != logits.len() {
            return Err(StegoError::Incompatible(format!(
                "provider has {} tokens, frequency tables have {v}",
                logits.len()
            )));
        }
    }
    let cfg = &rc.config;
    let (scores, entropy, temp) = match cfg.order {
        ReformOrder::TaSa => {
            let entropy = instantaneous_entropy(&softmax(logits));
            let temp = temperature(entropy, cfg);
            let seq = sequential_reform(logits, temp);
            (spatial_reform(&seq, rc, ctx), entropy, temp)
        }
        ReformOrder::SaTa => {
            let spat = spatial_reform(logits, rc, ctx);
            let entropy = instantaneous_entropy(&softmax(&spat));
            let temp = temperature(entropy, cfg);
            (sequential_reform(&spat, temp), entropy, temp)
        }
    };
    let mut dist = softmax(&scores);
    let top_k = cfg.top_k.unwrap_or(dist.len()).min(dist.len());
    if top_k < dist.len() || cfg.top_p < 1.0 {
        dist = truncate(&dist, top_k, cfg.top_p)?;
    }
    Ok(Reformed {
        dist,
        entropy,
        temperature: temp,
    })
}
