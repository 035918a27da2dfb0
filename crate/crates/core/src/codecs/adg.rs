use super::{BitStream, CodecMismatch, PrgState, StepResult, check_support};
use crate::corpus::TokenId;
use crate::quantize::QuantDist;

/// Grouping stops once the heavier half would exceed this share of the node.
const BALANCE_NUM: u64 = 3;
const BALANCE_DEN: u64 = 5;

type Group = Vec<(TokenId, u64)>;

fn mass(group: &[(TokenId, u64)]) -> u64 {
    group.iter().map(|&(_, w)| w).sum()
}

/// Greedy bipartition of a group already sorted by descending weight: each
/// token joins the lighter side, the first side on ties.
fn split(group: &[(TokenId, u64)]) -> (Group, Group) {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let (mut ma, mut mb) = (0u64, 0u64);
    for &(t, w) in group {
        if ma <= mb {
            a.push((t, w));
            ma += w;
        } else {
            b.push((t, w));
            mb += w;
        }
    }
    (a, b)
}

/// Split of `group` if it is balanced enough to carry a bit.
fn balanced_split(group: &[(TokenId, u64)]) -> Option<(Group, Group)> {
    if group.len() < 2 {
        return None;
    }
    let (a, b) = split(group);
    let heavier = mass(&a).max(mass(&b));
    if heavier * BALANCE_DEN > BALANCE_NUM * mass(group) {
        None
    } else {
        Some((a, b))
    }
}

fn sorted_support(q: &QuantDist) -> Group {
    let mut g: Group = q
        .weights()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0)
        .map(|(i, &w)| (i as TokenId, w))
        .collect();
    g.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    g
}

/// Samples from a final group proportionally to weight using the `P`-bit
/// draw `r`.
fn sample_in(group: &[(TokenId, u64)], r: u64, precision: u32) -> TokenId {
    let target = ((r as u128 * mass(group) as u128) >> precision) as u64;
    let mut acc = 0;
    for &(t, w) in group {
        acc += w;
        if target < acc {
            return t;
        }
    }
    group[group.len() - 1].0
}

/// Walks the balanced binary grouping tree with message bits (0 = first
/// group), then samples inside the final group with the keystream.
pub fn adg_encode_step(q: &QuantDist, msg: &mut BitStream, prg: &mut PrgState) -> StepResult {
    let r = prg.next_bits(q.precision());
    let mut group = sorted_support(q);
    let mut depth = 0;
    while let Some((a, b)) = balanced_split(&group) {
        group = if msg.peek(depth, 1) == 0 { a } else { b };
        depth += 1;
    }
    msg.advance(depth);
    StepResult {
        token: sample_in(&group, r, q.precision()),
        bits_embedded: depth,
    }
}

pub fn adg_decode_step(
    q: &QuantDist,
    token: TokenId,
    prg: &mut PrgState,
) -> Result<Vec<bool>, CodecMismatch> {
    let _ = prg.next_bits(q.precision());
    check_support(q, token)?;
    let mut group = sorted_support(q);
    let mut path = Vec::new();
    while let Some((a, b)) = balanced_split(&group) {
        let in_a = a.iter().any(|&(t, _)| t == token);
        if !in_a && !b.iter().any(|&(t, _)| t == token) {
            return Err(CodecMismatch::new(token, "token fell outside the grouping tree"));
        }
        path.push(!in_a);
        group = if in_a { a } else { b };
    }
    Ok(path)
}
