//! Stego codecs. Each maps a quantized distribution plus message bits to one
//! token, and a received token back to the bits it carried.
//!
//! Interval layouts use ascending token ids (AC, METEOR, DISCOP); ADG groups
//! by descending weight with ties broken by id. Both ends must agree on this.

pub mod ac;
pub mod adg;
pub mod discop;
pub mod meteor;
pub mod prg;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::error::{Result, StegoError};
use crate::quantize::QuantDist;

pub use ac::{ac_decode_step, ac_encode_step, AcDecoder, AcEncoder, AcInterval};
pub use adg::{adg_decode_step, adg_encode_step};
pub use discop::{discop_decode_step, discop_encode_step};
pub use meteor::{meteor_decode_step, meteor_encode_step};
pub use prg::{prg_bits, PrgState, SecretKey};

/// Message bits with a read cursor. Reads past the end come from an optional
/// padding keystream (zeros without one).
#[derive(Clone, Debug)]
pub struct BitStream {
    bits: Vec<bool>,
    cursor: usize,
    padding: Option<PrgState>,
    pad_bits: Vec<bool>,
}

impl BitStream {
    pub fn new(bits: Vec<bool>) -> Self {
        BitStream {
            bits,
            cursor: 0,
            padding: None,
            pad_bits: Vec::new(),
        }
    }

    pub fn with_padding(bits: Vec<bool>, padding: PrgState) -> Self {
        BitStream {
            padding: Some(padding),
            ..Self::new(bits)
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self::new(bytes_to_bits(bytes))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Bits consumed so far.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.bits.len().saturating_sub(self.cursor)
    }

    pub fn exhausted(&self) -> bool {
        self.cursor >= self.bits.len()
    }

    /// Bit at absolute position `index`, padding beyond the end.
    pub fn bit_at(&mut self, index: usize) -> bool {
        if let Some(&b) = self.bits.get(index) {
            return b;
        }
        let pad_index = index - self.bits.len();
        while self.pad_bits.len() <= pad_index {
            let b = self.padding.as_mut().is_some_and(PrgState::next_bit);
            self.pad_bits.push(b);
        }
        self.pad_bits[pad_index]
    }

    /// `n <= 64` bits starting `offset` past the cursor, MSB first.
    pub fn peek(&mut self, offset: usize, n: u32) -> u64 {
        let start = self.cursor + offset;
        (0..n as usize).fold(0u64, |acc, i| (acc << 1) | self.bit_at(start + i) as u64)
    }

    pub fn advance(&mut self, n: usize) {
        self.cursor += n;
    }
}

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<bool> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
        .collect()
}

/// Packs bits MSB-first; a trailing partial byte is zero-padded.
pub fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
        })
        .collect()
}

/// Pushes the low `n` bits of `value`, most significant first.
pub(crate) fn push_bits(out: &mut Vec<bool>, value: u64, n: u32) {
    for i in (0..n).rev() {
        out.push((value >> i) & 1 == 1);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepResult {
    pub token: TokenId,
    pub bits_embedded: usize,
}

/// Decode-side failure for one step; the pipeline adds the step index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodecMismatch {
    pub token: TokenId,
    pub reason: String,
}

impl CodecMismatch {
    pub(crate) fn new(token: TokenId, reason: impl Into<String>) -> Self {
        CodecMismatch {
            token,
            reason: reason.into(),
        }
    }

    pub fn at_step(self, step: usize) -> StegoError {
        StegoError::Desync {
            step,
            token: self.token,
            reason: self.reason,
        }
    }
}

pub(crate) fn check_support(q: &QuantDist, token: TokenId) -> Result<(), CodecMismatch> {
    if q.weight(token) == 0 {
        let reason = if (token as usize) < q.len() {
            "token has zero weight in the reconstructed distribution"
        } else {
            "token is outside the vocabulary"
        };
        return Err(CodecMismatch::new(token, reason));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecKind {
    Ac,
    Meteor,
    Discop,
    Adg,
}

impl CodecKind {
    pub const ALL: [CodecKind; 4] = [
        CodecKind::Ac,
        CodecKind::Meteor,
        CodecKind::Discop,
        CodecKind::Adg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CodecKind::Ac => "ac",
            CodecKind::Meteor => "meteor",
            CodecKind::Discop => "discop",
            CodecKind::Adg => "adg",
        }
    }

    /// Whether the induced token distribution equals the input distribution.
    pub fn preserves_distribution(self) -> bool {
        matches!(self, CodecKind::Meteor | CodecKind::Discop)
    }
}

impl std::fmt::Display for CodecKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CodecKind {
    type Err = StegoError;

    fn from_str(s: &str) -> Result<Self> {
        CodecKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| StegoError::config(format!("unknown codec {s:?}")))
    }
}

/// Session-local encoder state for any codec.
#[derive(Clone, Debug)]
pub enum Encoder {
    Ac(AcEncoder),
    Meteor,
    Discop,
    Adg,
}

impl Encoder {
    pub fn new(kind: CodecKind) -> Self {
        match kind {
            CodecKind::Ac => Encoder::Ac(AcEncoder::new()),
            CodecKind::Meteor => Encoder::Meteor,
            CodecKind::Discop => Encoder::Discop,
            CodecKind::Adg => Encoder::Adg,
        }
    }

    pub fn step(&mut self, q: &QuantDist, msg: &mut BitStream, prg: &mut PrgState) -> StepResult {
        match self {
            Encoder::Ac(state) => ac_encode_step(state, q, msg),
            Encoder::Meteor => meteor_encode_step(q, msg, prg),
            Encoder::Discop => discop_encode_step(q, msg, prg),
            Encoder::Adg => adg_encode_step(q, msg, prg),
        }
    }
}

/// Session-local decoder state for any codec.
#[derive(Clone, Debug)]
pub enum Decoder {
    Ac(AcDecoder),
    Meteor,
    Discop,
    Adg,
}

impl Decoder {
    pub fn new(kind: CodecKind) -> Self {
        match kind {
            CodecKind::Ac => Decoder::Ac(AcDecoder::new()),
            CodecKind::Meteor => Decoder::Meteor,
            CodecKind::Discop => Decoder::Discop,
            CodecKind::Adg => Decoder::Adg,
        }
    }

    pub fn step(
        &mut self,
        q: &QuantDist,
        token: TokenId,
        prg: &mut PrgState,
    ) -> Result<Vec<bool>, CodecMismatch> {
        match self {
            Decoder::Ac(state) => ac_decode_step(state, q, token),
            Decoder::Meteor => meteor_decode_step(q, token, prg),
            Decoder::Discop => discop_decode_step(q, token, prg),
            Decoder::Adg => adg_decode_step(q, token, prg),
        }
    }
}
