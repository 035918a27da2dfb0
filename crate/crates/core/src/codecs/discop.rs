use super::{check_support, push_bits, BitStream, CodecMismatch, PrgState, StepResult};
use crate::corpus::TokenId;
use crate::quantize::QuantDist;

/// Tokens hit by the `2^n` evenly spaced pointers starting at `r`.
fn pointer_tokens(q: &QuantDist, r: u64, n: u32) -> Vec<TokenId> {
    let p = q.precision();
    let spacing = 1u64 << (p - n);
    let mask = q.total() - 1;
    (0..1u64 << n)
        .map(|i| q.token_at(r.wrapping_add(i * spacing) & mask))
        .collect()
}

fn all_distinct(tokens: &[TokenId]) -> bool {
    let mut sorted = tokens.to_vec();
    sorted.sort_unstable();
    sorted.windows(2).all(|w| w[0] != w[1])
}

/// Largest `n` such that the `2^n` copies of the distribution rotated by
/// `i · 2^(P-n)` put pointer `r` in pairwise distinct tokens.
pub fn capacity(q: &QuantDist, r: u64) -> u32 {
    let support = q.support_len();
    let mut n = 0;
    while n < q.precision() && (1usize << (n + 1)) <= support {
        if !all_distinct(&pointer_tokens(q, r, n + 1)) {
            break;
        }
        n += 1;
    }
    n
}

pub fn discop_encode_step(q: &QuantDist, msg: &mut BitStream, prg: &mut PrgState) -> StepResult {
    let r = prg.next_bits(q.precision());
    let n = capacity(q, r);
    let index = msg.peek(0, n);
    let spacing = 1u64 << (q.precision() - n);
    let token = q.token_at(r.wrapping_add(index * spacing) & (q.total() - 1));
    msg.advance(n as usize);
    StepResult {
        token,
        bits_embedded: n as usize,
    }
}

pub fn discop_decode_step(
    q: &QuantDist,
    token: TokenId,
    prg: &mut PrgState,
) -> Result<Vec<bool>, CodecMismatch> {
    let r = prg.next_bits(q.precision());
    check_support(q, token)?;
    let n = capacity(q, r);
    let index = pointer_tokens(q, r, n)
        .iter()
        .position(|&t| t == token)
        .ok_or_else(|| CodecMismatch::new(token, "no distribution copy points at this token"))?;
    let mut out = Vec::with_capacity(n as usize);
    push_bits(&mut out, index as u64, n);
    Ok(out)
}
