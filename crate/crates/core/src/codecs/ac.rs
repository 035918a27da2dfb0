//! Arithmetic-coding steganography.
//!
//! The sender runs an arithmetic *decoder* over the message bits (read as a
//! binary fraction) to pick tokens; the receiver runs the matching *encoder*
//! over the tokens and gets the message bits back. Both ends share the same
//! 64-bit interval state, so the number of bits settled at each step is known
//! to both.

use super::{check_support, BitStream, CodecMismatch, StepResult};
use crate::corpus::TokenId;
use crate::quantize::QuantDist;

const HALF: u64 = 1 << 63;
const QUARTER: u64 = 1 << 62;
const REGISTER_BITS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shift {
    /// interval in the lower half
    Low,
    /// interval in the upper half
    High,
    /// interval straddles the midpoint inside the middle half
    Middle,
}

/// Inclusive interval `[lo, hi]` with a count of deferred underflow bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AcInterval {
    lo: u64,
    hi: u64,
    pending: u32,
}

impl Default for AcInterval {
    fn default() -> Self {
        AcInterval {
            lo: 0,
            hi: u64::MAX,
            pending: 0,
        }
    }
}

impl AcInterval {
    fn range(&self) -> u128 {
        (self.hi - self.lo) as u128 + 1
    }

    /// Start of token `i`'s subinterval, for `i` in `0..=len`.
    fn boundary(&self, q: &QuantDist, i: usize) -> u128 {
        self.lo as u128 + ((self.range() * q.boundary(i) as u128) >> q.precision())
    }

    /// Token whose subinterval contains `value`.
    fn locate(&self, q: &QuantDist, value: u64) -> TokenId {
        let v = value as u128;
        let (mut lo, mut hi) = (0usize, q.len());
        // largest i with boundary(i) <= value
        while lo + 1 < hi {
            let mid = (lo + hi) / 2;
            if self.boundary(q, mid) <= v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo as TokenId
    }

    /// Narrows to `token`'s subinterval and renormalizes. Settled bits are
    /// appended to `out`; `on_shift` sees every doubling.
    fn narrow(
        &mut self,
        q: &QuantDist,
        token: TokenId,
        out: &mut Vec<bool>,
        mut on_shift: impl FnMut(Shift),
    ) {
        let i = token as usize;
        let new_lo = self.boundary(q, i);
        let new_hi = self.boundary(q, i + 1) - 1;
        debug_assert!(new_lo <= new_hi, "token has an empty subinterval");
        self.lo = new_lo as u64;
        self.hi = new_hi as u64;
        loop {
            if self.hi < HALF {
                self.emit(false, out);
                self.lo <<= 1;
                self.hi = (self.hi << 1) | 1;
                on_shift(Shift::Low);
            } else if self.lo >= HALF {
                self.emit(true, out);
                self.lo = (self.lo - HALF) << 1;
                self.hi = ((self.hi - HALF) << 1) | 1;
                on_shift(Shift::High);
            } else if self.lo >= QUARTER && self.hi < HALF + QUARTER {
                self.pending += 1;
                self.lo = (self.lo - QUARTER) << 1;
                self.hi = ((self.hi - QUARTER) << 1) | 1;
                on_shift(Shift::Middle);
            } else {
                break;
            }
        }
    }

    fn emit(&mut self, bit: bool, out: &mut Vec<bool>) {
        out.push(bit);
        for _ in 0..self.pending {
            out.push(!bit);
        }
        self.pending = 0;
    }

    pub fn pending(&self) -> u32 {
        self.pending
    }
}

/// Sender state: shared interval plus the message window register.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AcEncoder {
    interval: AcInterval,
    value: u64,
    /// Absolute message position of the next bit to shift into `value`.
    next_read: usize,
    primed: bool,
}

impl AcEncoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn interval(&self) -> &AcInterval {
        &self.interval
    }
}

/// Receiver state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AcDecoder {
    interval: AcInterval,
}

impl AcDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn interval(&self) -> &AcInterval {
        &self.interval
    }
}

pub fn ac_encode_step(state: &mut AcEncoder, q: &QuantDist, msg: &mut BitStream) -> StepResult {
    if !state.primed {
        let base = msg.cursor();
        state.value = (0..REGISTER_BITS).fold(0u64, |acc, i| (acc << 1) | msg.bit_at(base + i) as u64);
        state.next_read = base + REGISTER_BITS;
        state.primed = true;
    }
    let token = state.interval.locate(q, state.value);
    let mut settled = Vec::new();
    let value = &mut state.value;
    let next_read = &mut state.next_read;
    state.interval.narrow(q, token, &mut settled, |shift| {
        let incoming = msg.bit_at(*next_read) as u64;
        *next_read += 1;
        *value = match shift {
            Shift::Low => *value << 1,
            Shift::High => (*value - HALF) << 1,
            Shift::Middle => (*value - QUARTER) << 1,
        } | incoming;
    });
    debug_assert!(
        settled
            .iter()
            .enumerate()
            .all(|(i, &b)| msg.bit_at(msg.cursor() + i) == b),
        "settled bits must equal the message bits"
    );
    msg.advance(settled.len());
    StepResult {
        token,
        bits_embedded: settled.len(),
    }
}

pub fn ac_decode_step(
    state: &mut AcDecoder,
    q: &QuantDist,
    token: TokenId,
) -> Result<Vec<bool>, CodecMismatch> {
    check_support(q, token)?;
    let mut out = Vec::new();
    state.interval.narrow(q, token, &mut out, |_| {});
    Ok(out)
}
