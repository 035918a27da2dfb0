//! Capacity, diversity, divergence and detectability measurements.
//!
//! Perplexity is judged by the built-in n-gram model, and corpus similarity
//! is measured with total variation and KL divergence between unigram
//! tables. Reports name both choices explicitly.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::corpus::{FreqTable, NGramModel, TokenId, Vocabulary};
use crate::error::{Result, StegoError};
use crate::pipeline::GenerationRecord;

pub const REPORT_SCHEMA: u32 = 1;

/// Mean sampling entropy per generated token over all records.
pub fn entropy_per_token(records: &[GenerationRecord]) -> Result<f64> {
    let (sum, n) = records
        .iter()
        .flat_map(|r| &r.sampling_entropy)
        .fold((0.0, 0usize), |(s, n), &e| (s + e, n + 1));
    if n == 0 {
        return Err(StegoError::malformed("no generation steps to average"));
    }
    Ok(sum / n as f64)
}

/// `L / N_t` for one record.
pub fn embedding_rate(record: &GenerationRecord) -> Result<f64> {
    if record.is_empty() {
        return Err(StegoError::malformed("embedding rate of an empty record"));
    }
    Ok(record.embedding_rate())
}

/// Total bits over total tokens across records.
pub fn pooled_embedding_rate(records: &[GenerationRecord]) -> Result<f64> {
    let tokens: usize = records.iter().map(GenerationRecord::len).sum();
    if tokens == 0 {
        return Err(StegoError::malformed("embedding rate of empty records"));
    }
    let bits: usize = records.iter().map(GenerationRecord::total_bits).sum();
    Ok(bits as f64 / tokens as f64)
}

/// Unique n-grams over total n-grams, pooled across streams.
pub fn distinct_n(streams: &[Vec<TokenId>], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(StegoError::config("n must be positive"));
    }
    let mut seen = HashSet::new();
    let mut total = 0usize;
    for s in streams {
        for w in s.windows(n) {
            seen.insert(w);
            total += 1;
        }
    }
    if total == 0 {
        return Err(StegoError::malformed(format!("no stream has {n} tokens")));
    }
    Ok(seen.len() as f64 / total as f64)
}

/// `exp(-mean ln p(x_t | x_<t))` under `model`, each stream scored from its
/// first token.
pub fn ppl_builtin(model: &NGramModel, streams: &[Vec<TokenId>]) -> Result<f64> {
    let mut nll = 0.0;
    let mut n = 0usize;
    for s in streams {
        for (i, &t) in s.iter().enumerate() {
            if t as usize >= model.vocab_size() {
                return Err(StegoError::malformed(format!("token {t} outside model vocabulary")));
            }
            let r = model.conditional(&s[..i]).probability(t);
            let p = *r.numer() as f64 / *r.denom() as f64;
            nll -= p.ln();
            n += 1;
        }
    }
    if n == 0 {
        return Err(StegoError::malformed("perplexity of an empty corpus"));
    }
    Ok((nll / n as f64).exp())
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `Σ p ln(p / q)` in nats; terms with `p = 0` vanish.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

fn same_vocab(a: &FreqTable, b: &FreqTable) -> Result<()> {
    if a.vocab() != b.vocab() {
        return Err(StegoError::Incompatible(
            "frequency tables use different vocabularies".into(),
        ));
    }
    Ok(())
}

fn unigram_probs(t: &FreqTable) -> Result<Vec<f64>> {
    if t.order() != 1 {
        return Err(StegoError::config("divergences need unigram tables"));
    }
    if t.total() == 0 {
        return Err(StegoError::malformed("empty frequency table"));
    }
    let total = t.total() as f64;
    Ok(t.dense_unigrams()?.iter().map(|&c| c as f64 / total).collect())
}

/// Zeros raised to `1 / (total + |V|)`, then renormalized.
fn floored(probs: &[f64], total: u64) -> Vec<f64> {
    let eps = 1.0 / (total as f64 + probs.len() as f64);
    let raised: Vec<f64> = probs.iter().map(|&p| if p > 0.0 { p } else { eps }).collect();
    let sum: f64 = raised.iter().sum();
    raised.into_iter().map(|p| p / sum).collect()
}

/// `(TV, KL(generated ‖ target))` between unigram tables. TV uses the raw
/// empirical distributions; KL floors zeros on both sides.
pub fn divergences(generated: &FreqTable, target: &FreqTable) -> Result<(f64, f64)> {
    same_vocab(generated, target)?;
    let p = unigram_probs(generated)?;
    let q = unigram_probs(target)?;
    let tv = tv_distance(&p, &q);
    let kl = kl_divergence(&floored(&p, generated.total()), &floored(&q, target.total()));
    Ok((tv, kl))
}

/// Like [`divergences`] for tables of any order. Above order 1 the cells
/// are the n-grams seen in either table, and the KL floor is
/// `1 / (total + cells)`.
pub fn table_divergences(generated: &FreqTable, target: &FreqTable) -> Result<(f64, f64)> {
    if generated.order() != target.order() {
        return Err(StegoError::Incompatible("frequency tables have different orders".into()));
    }
    if generated.order() == 1 {
        return divergences(generated, target);
    }
    same_vocab(generated, target)?;
    if generated.total() == 0 || target.total() == 0 {
        return Err(StegoError::malformed("empty frequency table"));
    }
    let mut cells: BTreeMap<&[TokenId], (u64, u64)> = BTreeMap::new();
    for (g, c) in generated.iter() {
        cells.entry(g).or_default().0 = c;
    }
    for (g, c) in target.iter() {
        cells.entry(g).or_default().1 = c;
    }
    let (gt, tt) = (generated.total() as f64, target.total() as f64);
    let p: Vec<f64> = cells.values().map(|&(a, _)| a as f64 / gt).collect();
    let q: Vec<f64> = cells.values().map(|&(_, b)| b as f64 / tt).collect();
    let tv = tv_distance(&p, &q);
    let kl = kl_divergence(&floored(&p, generated.total()), &floored(&q, target.total()));
    Ok((tv, kl))
}

/// Pearson chi-square of observed `counts` against `expected_probs`, over
/// the categories where either is nonzero. Returns `(stat, p)`.
pub fn chi_square_gof(counts: &[u64], expected_probs: &[f64]) -> Result<(f64, f64)> {
    if counts.len() != expected_probs.len() {
        return Err(StegoError::malformed("count and probability vectors differ in length"));
    }
    let n: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&c, &p) in counts.iter().zip(expected_probs) {
        if c == 0 && p == 0.0 {
            continue;
        }
        if p == 0.0 {
            return Ok((f64::INFINITY, 0.0));
        }
        let e = n as f64 * p;
        stat += (c as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return Ok((stat, 1.0));
    }
    let chi = ChiSquared::new((cells - 1) as f64).expect("positive degrees of freedom");
    Ok((stat, chi.sf(stat)))
}

/// Goodness-of-fit of a sample table against the distribution implied by a
/// reference table (zeros floored to `1 / (total + |V|)`).
pub fn chi_square_detector(sample: &FreqTable, reference: &FreqTable) -> Result<(f64, f64)> {
    same_vocab(sample, reference)?;
    let counts = {
        if sample.order() != 1 {
            return Err(StegoError::config("the detector needs unigram tables"));
        }
        sample.dense_unigrams()?
    };
    let q = floored(&unigram_probs(reference)?, reference.total());
    // cells the sample never hits and the reference never saw carry no signal
    let reference_counts = reference.dense_unigrams()?;
    let keep: Vec<usize> = (0..counts.len())
        .filter(|&i| counts[i] > 0 || reference_counts[i] > 0)
        .collect();
    let mass: f64 = keep.iter().map(|&i| q[i]).sum();
    let c: Vec<u64> = keep.iter().map(|&i| counts[i]).collect();
    let p: Vec<f64> = keep.iter().map(|&i| q[i] / mass).collect();
    let needed = 5 * keep.len() as u64;
    if sample.total() < needed {
        return Err(StegoError::malformed(format!(
            "sample has {} tokens; the detector needs at least {needed}",
            sample.total()
        )));
    }
    chi_square_gof(&c, &p)
}

/// `|ln(1 + (q - p)/p)| <= (1 - 2δ)/δ` for `δ <= p, q <= 1 - δ` and
/// `|p - q| >= δ`.
pub fn lemma1_bound(delta: f64, p: f64, q: f64) -> Result<bool> {
    const TOL: f64 = 1e-12;
    let inside = |x: f64| x >= delta - TOL && x <= 1.0 - delta + TOL;
    if !(delta > 0.0 && delta < 0.5) || !inside(p) || !inside(q) || (p - q).abs() < delta - TOL {
        return Err(StegoError::config(format!(
            "lemma preconditions fail for delta={delta}, p={p}, q={q}"
        )));
    }
    Ok((1.0 + (q - p) / p).ln().abs() <= (1.0 - 2.0 * delta) / delta)
}

/// Evaluates the bound on every admissible `(p, q)` of a grid with spacing
/// `1/steps`, for `δ = k/steps`. Returns `(points checked, violations)`.
pub fn lemma1_grid(delta_steps: u32, steps: u32) -> (usize, usize) {
    let mut checked = 0;
    let mut violations = 0;
    for i in delta_steps..=steps - delta_steps {
        for j in delta_steps..=steps - delta_steps {
            if i.abs_diff(j) < delta_steps {
                continue;
            }
            let f = |k: u32| k as f64 / steps as f64;
            checked += 1;
            if !lemma1_bound(f(delta_steps), f(i), f(j)).unwrap_or(false) {
                violations += 1;
            }
        }
    }
    (checked, violations)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub streams: usize,
    pub tokens: usize,
    /// Bits; present when generation records were supplied.
    pub entropy_per_token: Option<f64>,
    /// Bits per token; present when generation records were supplied.
    pub embedding_rate: Option<f64>,
    /// Pooled distinct-n for each n.
    pub distinct_n: BTreeMap<usize, f64>,
    pub ppl_builtin: f64,
    pub ppl_judge: String,
    pub tv_distance: f64,
    pub kl_divergence: f64,
    pub divergence_basis: String,
    /// Absent when the sample is too small for the detector.
    pub chi2_stat: Option<f64>,
    pub chi2_p: Option<f64>,
}

/// Inputs for [`evaluate`].
pub struct EvalInput<'a> {
    pub vocab: &'a Vocabulary,
    pub generated: &'a [Vec<TokenId>],
    pub target: &'a FreqTable,
    pub judge: &'a NGramModel,
    pub records: &'a [GenerationRecord],
    pub distinct: &'a [usize],
}

pub fn evaluate(input: &EvalInput<'_>) -> Result<EvalReport> {
    let gen_table = crate::corpus::count_frequencies(input.generated, 1, input.vocab)?;
    let (tv, kl) = divergences(&gen_table, input.target)?;
    let (chi2_stat, chi2_p) = match chi_square_detector(&gen_table, input.target) {
        Ok((s, p)) => (Some(s), Some(p)),
        Err(StegoError::Malformed(_)) => (None, None),
        Err(e) => return Err(e),
    };
    let mut distinct = BTreeMap::new();
    for &n in input.distinct {
        distinct.insert(n, distinct_n(input.generated, n)?);
    }
    let (entropy, er) = if input.records.is_empty() {
        (None, None)
    } else {
        (
            Some(entropy_per_token(input.records)?),
            Some(pooled_embedding_rate(input.records)?),
        )
    };
    Ok(EvalReport {
        schema: REPORT_SCHEMA,
        streams: input.generated.len(),
        tokens: input.generated.iter().map(Vec::len).sum(),
        entropy_per_token: entropy,
        embedding_rate: er,
        distinct_n: distinct,
        ppl_builtin: ppl_builtin(input.judge, input.generated)?,
        ppl_judge: format!("built-in {}-gram model", input.judge.order()),
        tv_distance: tv,
        kl_divergence: kl,
        divergence_basis: "unigram tables (TV, KL nats); not MAUVE".into(),
        chi2_stat,
        chi2_p,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned two-column table.
    pub fn to_table(&self) -> String {
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut rows: Vec<(String, String)> = vec![
            ("streams".into(), self.streams.to_string()),
            ("tokens".into(), self.tokens.to_string()),
            ("entropy/token (bits)".into(), fmt(self.entropy_per_token)),
            ("embedding rate (bits/token)".into(), fmt(self.embedding_rate)),
        ];
        for (n, d) in &self.distinct_n {
            rows.push((format!("distinct-{n} (pooled)"), format!("{d:.4}")));
        }
        rows.extend([
            (format!("ppl ({})", self.ppl_judge), format!("{:.4}", self.ppl_builtin)),
            ("tv (unigram)".into(), format!("{:.6}", self.tv_distance)),
            ("kl nats (unigram)".into(), format!("{:.6}", self.kl_divergence)),
            ("chi2 stat".into(), fmt(self.chi2_stat)),
            ("chi2 p".into(), self.chi2_p.map_or("-".to_string(), |p| format!("{p:.6}"))),
        ]);
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}
