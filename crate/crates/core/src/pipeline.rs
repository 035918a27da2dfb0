//! Autoregressive stego generation and its mirrored reconstruction.
//!
//! The payload on the wire is a 32-bit big-endian bit count followed by the
//! message bits, XOR-ed with a keystream so that the first bits look uniform
//! even for codecs without their own keyed randomness. A wrong key therefore
//! reads back a garbage length and the session fails loudly.
//!
//! Until the payload is fully embedded, stop tokens are removed from every
//! step distribution (their mass redistributed proportionally). Both ends
//! know how many bits have been embedded, so they agree on when this ends.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::codecs::{CodecKind, Decoder, Encoder, PrgState, SecretKey};
use crate::codecs::BitStream;
use crate::corpus::TokenId;
use crate::error::{Result, StegoError};
use crate::lm::{entropy_bits, ContextState, DistributionProvider, ProbDist};
use crate::quantize::{check_session_precision, quantize, QuantDist, DEFAULT_PRECISION};
use crate::reformer::{reform_step, ReformContext};

/// Bits in the length header.
pub const HEADER_BITS: usize = 32;

/// Session parameters both ends must share.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub codec: CodecKind,
    pub precision: u32,
    pub max_len: usize,
    pub stop_tokens: Vec<TokenId>,
    pub prompt: Vec<TokenId>,
    pub nonce: u64,
    /// Keep a digest of every quantized step distribution in the record.
    #[serde(default)]
    pub record_digests: bool,
}

impl SessionConfig {
    pub fn new(codec: CodecKind) -> Self {
        SessionConfig {
            codec,
            precision: DEFAULT_PRECISION,
            max_len: 512,
            stop_tokens: Vec::new(),
            prompt: Vec::new(),
            nonce: 0,
            record_digests: false,
        }
    }
}

/// Per-step log of one generation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub tokens: Vec<TokenId>,
    /// Codec bits carried by each token, padding included.
    pub bits: Vec<usize>,
    /// Entropy (bits) of the distribution that set the temperature.
    pub entropy: Vec<f64>,
    /// Entropy (bits) of the quantized distribution actually sampled.
    pub sampling_entropy: Vec<f64>,
    pub temperature: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub digests: Vec<String>,
}

impl GenerationRecord {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn total_bits(&self) -> usize {
        self.bits.iter().sum()
    }

    /// Embedded bits per generated token; 0 for an empty record.
    pub fn embedding_rate(&self) -> f64 {
        if self.tokens.is_empty() {
            0.0
        } else {
            self.total_bits() as f64 / self.tokens.len() as f64
        }
    }

    fn push(&mut self, token: TokenId, bits: usize, step: &StepDist, digests: bool) {
        self.tokens.push(token);
        self.bits.push(bits);
        self.entropy.push(step.entropy);
        self.sampling_entropy.push(entropy_bits(&ProbDist {
            probs: step.q.probabilities(),
        }));
        self.temperature.push(step.temperature);
        if digests {
            self.digests.push(step.q.digest());
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum EmbedStatus {
    Complete,
    /// `max_len` was reached first; only `embedded` of `required` payload
    /// bits made it into the stegotext.
    Partial { embedded: usize, required: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodeOutput {
    pub record: GenerationRecord,
    pub status: EmbedStatus,
}

impl EncodeOutput {
    pub fn tokens(&self) -> &[TokenId] {
        &self.record.tokens
    }

    pub fn is_complete(&self) -> bool {
        self.status == EmbedStatus::Complete
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutput {
    pub message: Vec<bool>,
    pub record: GenerationRecord,
}

struct StepDist {
    q: QuantDist,
    entropy: f64,
    temperature: f64,
}

/// Provider, reform context, key and settings for one sender or receiver.
pub struct StegoSession<P> {
    provider: P,
    reform: Arc<ReformContext>,
    key: SecretKey,
    config: SessionConfig,
}

impl<P: DistributionProvider> StegoSession<P> {
    pub fn new(
        provider: P,
        reform: Arc<ReformContext>,
        key: SecretKey,
        config: SessionConfig,
    ) -> Result<Self> {
        check_session_precision(config.precision)?;
        let v = provider.vocab_size();
        if v == 0 {
            return Err(StegoError::config("provider has an empty vocabulary"));
        }
        if let Some(rv) = reform.vocab_size() {
            if rv != v {
                return Err(StegoError::Incompatible(format!(
                    "provider has {v} tokens, frequency tables have {rv}"
                )));
            }
        }
        if let Some(&t) = config
            .stop_tokens
            .iter()
            .chain(&config.prompt)
            .find(|&&t| t as usize >= v)
        {
            return Err(StegoError::config(format!(
                "token {t} outside vocabulary of size {v}"
            )));
        }
        if config.stop_tokens.len() >= v {
            return Err(StegoError::config("every token is a stop token"));
        }
        if config.max_len == 0 {
            return Err(StegoError::config("max_len must be positive"));
        }
        Ok(StegoSession {
            provider,
            reform,
            key,
            config,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn provider(&self) -> &P {
        &self.provider
    }

    pub fn into_provider(self) -> P {
        self.provider
    }

    fn step_dist(&mut self, ctx: &ContextState, suppress_stops: bool) -> Result<StepDist> {
        let logits = self.provider.next_logits(ctx)?;
        if logits.len() != self.provider.vocab_size() {
            return Err(StegoError::Incompatible(format!(
                "provider returned {} scores for a vocabulary of {}",
                logits.len(),
                self.provider.vocab_size()
            )));
        }
        let reformed = reform_step(&logits, &self.reform, ctx)?;
        let dist = if suppress_stops && !self.config.stop_tokens.is_empty() {
            without_stops(reformed.dist, &self.config.stop_tokens)
        } else {
            reformed.dist
        };
        Ok(StepDist {
            q: quantize(&dist, self.config.precision)?,
            entropy: reformed.entropy,
            temperature: reformed.temperature,
        })
    }

    fn is_stop(&self, token: TokenId) -> bool {
        self.config.stop_tokens.contains(&token)
    }

    fn codec_prg(&self) -> PrgState {
        PrgState::new(self.key.derive("codec"), self.config.nonce)
    }

    /// Embeds `message` (at most `2^32 - 1` bits).
    pub fn encode(&mut self, message: &[bool]) -> Result<EncodeOutput> {
        let len = u32::try_from(message.len())
            .map_err(|_| StegoError::malformed("message longer than 2^32 - 1 bits"))?;
        let mut payload = Vec::with_capacity(HEADER_BITS + message.len());
        crate::codecs::push_bits(&mut payload, len as u64, HEADER_BITS as u32);
        payload.extend_from_slice(message);
        let required = payload.len();
        let mut whitening = Keystream::new(&self.key, self.config.nonce);
        for (i, b) in payload.iter_mut().enumerate() {
            *b ^= whitening.bit(i);
        }
        let pad = PrgState::new(self.key.derive("pad"), self.config.nonce);
        let mut msg = BitStream::with_padding(payload, pad);

        let mut encoder = Encoder::new(self.config.codec);
        let mut prg = self.codec_prg();
        let mut ctx = ContextState::new(&self.config.prompt);
        let mut record = GenerationRecord::default();
        let mut embedded = 0usize;
        while record.len() < self.config.max_len {
            let exhausted = embedded >= required;
            let step = self.step_dist(&ctx, !exhausted)?;
            let s = encoder.step(&step.q, &mut msg, &mut prg);
            record.push(s.token, s.bits_embedded, &step, self.config.record_digests);
            ctx.push(s.token);
            embedded += s.bits_embedded;
            if self.finished(exhausted, embedded >= required, s.token) {
                break;
            }
        }
        let status = if embedded >= required {
            EmbedStatus::Complete
        } else {
            EmbedStatus::Partial { embedded, required }
        };
        Ok(EncodeOutput { record, status })
    }

    /// Session end after a token: a stop token sampled once the payload was
    /// complete, or completion itself when no stop tokens are configured.
    fn finished(&self, exhausted_before: bool, exhausted_after: bool, token: TokenId) -> bool {
        if self.config.stop_tokens.is_empty() {
            exhausted_after
        } else {
            exhausted_before && self.is_stop(token)
        }
    }

    /// Recovers the message from a stegotext produced by a session with the
    /// same key, artifacts and settings.
    pub fn decode(&mut self, tokens: &[TokenId]) -> Result<DecodeOutput> {
        let mut decoder = Decoder::new(self.config.codec);
        let mut prg = self.codec_prg();
        let mut whitening = Keystream::new(&self.key, self.config.nonce);
        let mut ctx = ContextState::new(&self.config.prompt);
        let mut record = GenerationRecord::default();
        let mut payload: Vec<bool> = Vec::new();
        let mut required: Option<usize> = None;
        for (i, &token) in tokens.iter().enumerate() {
            let complete = |payload: &Vec<bool>, required: Option<usize>| {
                required.is_some_and(|r| payload.len() >= r)
            };
            let exhausted = complete(&payload, required);
            let step = self.step_dist(&ctx, !exhausted)?;
            let bits = decoder
                .step(&step.q, token, &mut prg)
                .map_err(|e| e.at_step(i))?;
            record.push(token, bits.len(), &step, self.config.record_digests);
            ctx.push(token);
            for b in bits {
                let pos = payload.len();
                payload.push(b ^ whitening.bit(pos));
            }
            if required.is_none() && payload.len() >= HEADER_BITS {
                let len = payload[..HEADER_BITS]
                    .iter()
                    .fold(0usize, |acc, &b| (acc << 1) | b as usize);
                required = Some(HEADER_BITS + len);
            }
            if self.finished(exhausted, complete(&payload, required), token) && i + 1 < tokens.len() {
                return Err(StegoError::Desync {
                    step: i + 1,
                    token: tokens[i + 1],
                    reason: "stegotext continues past the end of the message".into(),
                });
            }
        }
        match required {
            Some(r) if payload.len() >= r => Ok(DecodeOutput {
                message: payload[HEADER_BITS..r].to_vec(),
                record,
            }),
            Some(r) => Err(StegoError::CorruptPayload(format!(
                "header announces {} message bits but only {} arrived",
                r - HEADER_BITS,
                payload.len().saturating_sub(HEADER_BITS)
            ))),
            None => Err(StegoError::CorruptPayload(format!(
                "stegotext carries {} bits, fewer than the {HEADER_BITS}-bit header",
                payload.len()
            ))),
        }
    }

    /// Cover baseline: samples `len` tokens from the same step distributions
    /// with keyed uniform draws instead of a codec. Stops early at a stop
    /// token.
    pub fn generate_random(&mut self, len: usize) -> Result<GenerationRecord> {
        let mut prg = PrgState::new(self.key.derive("random"), self.config.nonce);
        let mut ctx = ContextState::new(&self.config.prompt);
        let mut record = GenerationRecord::default();
        while record.len() < len {
            let step = self.step_dist(&ctx, false)?;
            let token = step.q.token_at(prg.next_bits(step.q.precision()));
            record.push(token, 0, &step, self.config.record_digests);
            ctx.push(token);
            if self.is_stop(token) {
                break;
            }
        }
        Ok(record)
    }
}

pub fn encode_message<P: DistributionProvider>(
    session: &mut StegoSession<P>,
    message: &[bool],
) -> Result<EncodeOutput> {
    session.encode(message)
}

pub fn decode_message<P: DistributionProvider>(
    session: &mut StegoSession<P>,
    tokens: &[TokenId],
) -> Result<DecodeOutput> {
    session.decode(tokens)
}

pub fn generate_random<P: DistributionProvider>(
    session: &mut StegoSession<P>,
    len: usize,
) -> Result<GenerationRecord> {
    session.generate_random(len)
}

/// Zeroes the stop tokens and renormalizes; uniform over the remaining
/// tokens when nothing is left.
fn without_stops(dist: ProbDist, stops: &[TokenId]) -> ProbDist {
    let mut probs = dist.probs;
    for &s in stops {
        probs[s as usize] = 0.0;
    }
    if probs.iter().sum::<f64>() > 0.0 {
        return ProbDist::renormalize(probs);
    }
    let n = probs.len() - stops.len();
    let mut uniform = vec![1.0 / n as f64; probs.len()];
    for &s in stops {
        uniform[s as usize] = 0.0;
    }
    ProbDist { probs: uniform }
}

/// Lazily extended payload keystream.
struct Keystream {
    prg: PrgState,
    bits: Vec<bool>,
}

impl Keystream {
    fn new(key: &SecretKey, nonce: u64) -> Self {
        Keystream {
            prg: PrgState::new(key.derive("payload"), nonce),
            bits: Vec::new(),
        }
    }

    fn bit(&mut self, i: usize) -> bool {
        while self.bits.len() <= i {
            self.bits.push(self.prg.next_bit());
        }
        self.bits[i]
    }
}
