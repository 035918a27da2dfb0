use super::{check_support, push_bits, BitStream, CodecMismatch, PrgState, StepResult};
use crate::corpus::TokenId;
use crate::quantize::QuantDist;

/// Length of the common binary prefix of every value in `[lo, hi)`, as
/// `precision`-bit integers.
pub(crate) fn common_prefix_len(lo: u64, hi: u64, precision: u32) -> u32 {
    debug_assert!(lo < hi);
    let diff = lo ^ (hi - 1);
    if diff == 0 {
        precision
    } else {
        precision - (64 - diff.leading_zeros())
    }
}

/// Masks the next P message bits with the keystream and samples the token
/// whose interval holds the result. The bits shared by the whole interval
/// are the ones embedded.
pub fn meteor_encode_step(q: &QuantDist, msg: &mut BitStream, prg: &mut PrgState) -> StepResult {
    let p = q.precision();
    let mask = prg.next_bits(p);
    let r = msg.peek(0, p) ^ mask;
    let token = q.token_at(r);
    let (lo, hi) = q.interval(token);
    let k = common_prefix_len(lo, hi, p);
    msg.advance(k as usize);
    StepResult {
        token,
        bits_embedded: k as usize,
    }
}

pub fn meteor_decode_step(
    q: &QuantDist,
    token: TokenId,
    prg: &mut PrgState,
) -> Result<Vec<bool>, CodecMismatch> {
    let p = q.precision();
    let mask = prg.next_bits(p);
    check_support(q, token)?;
    let (lo, hi) = q.interval(token);
    let k = common_prefix_len(lo, hi, p);
    let mut out = Vec::with_capacity(k as usize);
    if k > 0 {
        let prefix = lo >> (p - k);
        push_bits(&mut out, prefix ^ (mask >> (p - k)), k);
    }
    Ok(out)
}
