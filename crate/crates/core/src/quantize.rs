//! Integer distributions shared bit-for-bit by both ends of a session.

use sha2::{Digest, Sha256};

use crate::corpus::TokenId;
use crate::error::{Result, StegoError};
use crate::lm::ProbDist;

pub const DEFAULT_PRECISION: u32 = 20;
/// Smallest precision accepted for a stego session. The integer types work
/// down to 1 bit, which small worked examples rely on.
pub const MIN_PRECISION: u32 = 8;
pub const MAX_PRECISION: u32 = 32;

/// Nonnegative integer weights summing to exactly `2^precision`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantDist {
    weights: Vec<u64>,
    precision: u32,
    // prefix[i] = sum of weights[..i]; len = weights.len() + 1
    prefix: Vec<u64>,
}

impl QuantDist {
    pub fn from_weights(weights: Vec<u64>, precision: u32) -> Result<Self> {
        check_precision(precision)?;
        let mut prefix = Vec::with_capacity(weights.len() + 1);
        let mut acc = 0u64;
        prefix.push(0);
        for &w in &weights {
            acc = acc
                .checked_add(w)
                .ok_or_else(|| StegoError::malformed("weights overflow"))?;
            prefix.push(acc);
        }
        if acc != 1u64 << precision {
            return Err(StegoError::malformed(format!(
                "weights sum to {acc}, expected 2^{precision}"
            )));
        }
        Ok(QuantDist {
            weights,
            precision,
            prefix,
        })
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn total(&self) -> u64 {
        1u64 << self.precision
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, token: TokenId) -> u64 {
        self.weights.get(token as usize).copied().unwrap_or(0)
    }

    /// Tokens with nonzero weight, ascending.
    pub fn support(&self) -> Vec<TokenId> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0)
            .map(|(i, _)| i as TokenId)
            .collect()
    }

    pub fn support_len(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0).count()
    }

    /// Half-open interval `[lo, hi)` of `token` in ascending-id layout.
    pub fn interval(&self, token: TokenId) -> (u64, u64) {
        let i = token as usize;
        (self.prefix[i], self.prefix[i + 1])
    }

    /// Start of token `i`'s interval, for `i` in `0..=len`.
    pub(crate) fn boundary(&self, i: usize) -> u64 {
        self.prefix[i]
    }

    /// Token whose interval contains `r`, for `r < 2^precision`.
    pub fn token_at(&self, r: u64) -> TokenId {
        debug_assert!(r < self.total());
        // last boundary <= r belongs to a nonempty interval
        let idx = self.prefix.partition_point(|&b| b <= r) - 1;
        idx as TokenId
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.total() as f64;
        self.weights.iter().map(|&w| w as f64 / t).collect()
    }

    /// SHA-256 over precision and little-endian weights, hex.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.precision.to_le_bytes());
        for w in &self.weights {
            h.update(w.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn check_precision(precision: u32) -> Result<()> {
    if !(1..=MAX_PRECISION).contains(&precision) {
        return Err(StegoError::config(format!(
            "precision must be in 1..={MAX_PRECISION}, got {precision}"
        )));
    }
    Ok(())
}

/// Rejects precisions outside the session range.
pub fn check_session_precision(precision: u32) -> Result<()> {
    if !(MIN_PRECISION..=MAX_PRECISION).contains(&precision) {
        return Err(StegoError::config(format!(
            "precision must be in {MIN_PRECISION}..={MAX_PRECISION}, got {precision}"
        )));
    }
    Ok(())
}

/// Largest-remainder apportionment of `dist` onto `2^precision` units.
///
/// Each token first gets `floor(p·2^P)`; the remaining units go to the largest
/// fractional parts, ties to the lower id. The argmax token always keeps at
/// least one unit.
pub fn quantize(dist: &ProbDist, precision: u32) -> Result<QuantDist> {
    check_precision(precision)?;
    if dist.is_empty() {
        return Err(StegoError::malformed("cannot quantize an empty distribution"));
    }
    let sum: f64 = dist.probs.iter().sum();
    if !(sum.is_finite() && sum > 0.0) || dist.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(StegoError::malformed("distribution has no usable mass"));
    }
    let total = 1u64 << precision;
    let scale = total as f64 / sum;
    let mut weights = Vec::with_capacity(dist.len());
    let mut remainders = Vec::with_capacity(dist.len());
    let mut assigned = 0u64;
    for &p in &dist.probs {
        let x = p * scale;
        let w = (x.floor() as u64).min(total);
        weights.push(w);
        remainders.push(x - w as f64);
        assigned += w;
    }

    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        remainders[b]
            .partial_cmp(&remainders[a])
            .expect("finite remainders")
            .then(a.cmp(&b))
    });
    if assigned <= total {
        let mut deficit = total - assigned;
        // deficit < len unless rounding was pathological; cycle to be safe
        while deficit > 0 {
            for &i in &order {
                if deficit == 0 {
                    break;
                }
                if dist.probs[i] > 0.0 {
                    weights[i] += 1;
                    deficit -= 1;
                }
            }
        }
    } else {
        let mut excess = assigned - total;
        while excess > 0 {
            for &i in order.iter().rev() {
                if excess == 0 {
                    break;
                }
                if weights[i] > 0 {
                    weights[i] -= 1;
                    excess -= 1;
                }
            }
        }
    }

    let argmax = dist.argmax() as usize;
    if weights[argmax] == 0 {
        let donor = (0..weights.len())
            .max_by(|&a, &b| weights[a].cmp(&weights[b]).then(b.cmp(&a)))
            .expect("nonempty");
        weights[donor] -= 1;
        weights[argmax] = 1;
    }
    QuantDist::from_weights(weights, precision)
}

/// Prefix sums over the support in ascending id order; the last is `2^P`.
pub fn cumulative(q: &QuantDist) -> Vec<u64> {
    let mut acc = 0;
    q.weights
        .iter()
        .filter(|&&w| w > 0)
        .map(|&w| {
            acc += w;
            acc
        })
        .collect()
}

/// One shared quantization test vector: `weights` is `quantize(probs, precision)`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParityVector {
    pub precision: u32,
    pub probs: Vec<f64>,
    pub weights: Vec<u64>,
}

/// Deterministic vectors for checking an external quantizer (such as a
/// bridge server) against this one. Mixes zeros, ties and tiny masses.
pub fn parity_vectors(count: usize, seed: u64) -> Vec<ParityVector> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let precisions = [8u32, 12, 16, 20, 24, 32];
    (0..count)
        .map(|i| {
            let precision = precisions[i % precisions.len()];
            let n = rng.gen_range(2..=48usize);
            let mut raw: Vec<f64> = (0..n)
                .map(|_| match rng.gen_range(0..10) {
                    0 => 0.0,
                    1 => 1e-9 * rng.gen::<f64>(),
                    2 => 0.25,
                    _ => rng.gen::<f64>(),
                })
                .collect();
            if raw.iter().all(|&x| x == 0.0) {
                raw[0] = 1.0;
            }
            let sum: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|x| x / sum).collect();
            let weights = quantize(&ProbDist { probs: probs.clone() }, precision)
                .expect("valid distribution")
                .weights
                .clone();
            ParityVector { precision, probs, weights }
        })
        .collect()
}
