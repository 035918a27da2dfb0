//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Built with `harness = false` so the lines always print.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use stegotext::codecs::{CodecKind, SecretKey};
use stegotext::corpus::{count_frequencies, tokenize_corpus, train_ngram, FreqTable, TokenId, Vocabulary};
use stegotext::lm::{ContextState, DistributionProvider, FixedProvider, NGramProvider, ProbDist};
use stegotext::metrics::{chi_square_detector, chi_square_gof, divergences, lemma1_grid};
use stegotext::pipeline::{GenerationRecord, SessionConfig, StegoSession};
use stegotext::quantize::quantize;
use stegotext::reformer::{reform_step, temperature, ReformConfig, ReformContext};
use stegotext::synthetic::{SkewedBenchmark, SkewedSpec};

const CORPUS: &[u8] = include_bytes!("data/corpus.txt");
const TARGET: &[u8] = include_bytes!("data/target.txt");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn key(rng: &mut ChaCha20Rng) -> SecretKey {
    SecretKey::from_bytes(rng.gen())
}

fn bits(rng: &mut ChaCha20Rng, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.gen()).collect()
}

fn zipf(v: usize, s: f64) -> Vec<f64> {
    let w: Vec<f64> = (1..=v).map(|i| (i as f64).powf(-s)).collect();
    let t: f64 = w.iter().sum();
    w.into_iter().map(|x| x / t).collect()
}

fn round_trip_matrix() -> Outcome {
    let start = Instant::now();
    let vocab = Vocabulary::build_whitespace(
        [std::str::from_utf8(CORPUS).unwrap(), std::str::from_utf8(TARGET).unwrap()],
        1,
        true,
    )
    .unwrap();
    let model_docs = tokenize_corpus(CORPUS, &vocab).unwrap();
    let target_docs = tokenize_corpus(TARGET, &vocab).unwrap();
    let model_freq = Arc::new(count_frequencies(&model_docs, 1, &vocab).unwrap());
    let target_freq = Arc::new(count_frequencies(&target_docs, 1, &vocab).unwrap());
    let rc = Arc::new(ReformContext::new(ReformConfig::default(), target_freq, model_freq).unwrap());
    let kappa = num_rational::Ratio::new(1, 10);
    let models: Vec<_> = (1..=3)
        .map(|n| Arc::new(train_ngram(&model_docs, n, kappa, &vocab).unwrap()))
        .collect();
    let eos = vocab.eos_id().unwrap();

    let mut cells = Vec::new();
    for codec in CodecKind::ALL {
        for order in 1..=3 {
            for len in [8usize, 64, 512, 4096] {
                for k in 0..50u64 {
                    cells.push((codec, order, len, k));
                }
            }
        }
    }
    let failures: Vec<String> = cells
        .par_iter()
        .filter_map(|&(codec, order, len, k)| {
            let mut rng = ChaCha20Rng::seed_from_u64(k * 7919 + len as u64);
            let key = key(&mut rng);
            let msg = bits(&mut rng, len);
            let mut cfg = SessionConfig::new(codec);
            cfg.max_len = 200_000;
            cfg.stop_tokens = vec![eos];
            cfg.nonce = k;
            let provider = || NGramProvider::new(models[order - 1].clone());
            let run = || -> stegotext::Result<bool> {
                let mut tx = StegoSession::new(provider(), rc.clone(), key, cfg.clone())?;
                let out = tx.encode(&msg)?;
                if !out.is_complete() {
                    return Ok(false);
                }
                let mut rx = StegoSession::new(provider(), rc.clone(), key, cfg.clone())?;
                Ok(rx.decode(out.tokens())?.message == msg)
            };
            match run() {
                Ok(true) => None,
                Ok(false) => Some(format!("{codec}/order {order}/{len} bits/key {k}: mismatch")),
                Err(e) => Some(format!("{codec}/order {order}/{len} bits/key {k}: {e}")),
            }
        })
        .collect();
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(300);
    let mut detail = format!(
        "{} sessions, {} failures, {:.1} s",
        cells.len(),
        failures.len(),
        elapsed.as_secs_f64()
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; first: {f}"));
    }
    outcome(pass, detail)
}

/// The quantized distribution a fixed provider yields under `rc`.
fn fixed_quantized(provider: &mut FixedProvider, rc: &ReformContext, precision: u32) -> Vec<f64> {
    let ctx = ContextState::new(&[]);
    let logits = provider.next_logits(&ctx).unwrap();
    let dist = reform_step(&logits, rc, &ctx).unwrap().dist;
    quantize(&dist, precision).unwrap().probabilities()
}

fn distribution_preservation() -> Outcome {
    let probs = zipf(16, 1.2);
    let rc = Arc::new(ReformContext::sequential_only(ReformConfig::disabled()).unwrap());
    let expected = fixed_quantized(&mut FixedProvider::from_probs(&probs).unwrap(), &rc, 20);
    let mut details = Vec::new();
    let mut pass = true;
    for codec in [CodecKind::Meteor, CodecKind::Discop] {
        let mut counts = vec![0u64; probs.len()];
        let mut steps = 0usize;
        let mut rng = ChaCha20Rng::seed_from_u64(0xD15C0 + codec as u64);
        let mut session_no = 0;
        while steps < 100_000 {
            let mut cfg = SessionConfig::new(codec);
            cfg.max_len = 100_000;
            cfg.nonce = session_no;
            let mut s = StegoSession::new(FixedProvider::from_probs(&probs).unwrap(), rc.clone(), key(&mut rng), cfg).unwrap();
            let out = s.encode(&bits(&mut rng, 512)).unwrap();
            for &t in out.tokens() {
                counts[t as usize] += 1;
            }
            steps += out.record.len();
            session_no += 1;
        }
        let (stat, p) = chi_square_gof(&counts, &expected).unwrap();
        pass &= p > 0.01;
        details.push(format!("{codec} {steps} steps chi2={stat:.2} p={p:.3}"));
    }
    outcome(pass, details.join("; "))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Encodes one 256-bit message per session; same keys and messages for
/// every configuration.
fn benchmark_sessions(b: &SkewedBenchmark, codec: CodecKind, cfg: ReformConfig, sessions: u64) -> Vec<GenerationRecord> {
    let rc = b.reform(cfg).unwrap();
    (0..sessions)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha20Rng::seed_from_u64(1_000 + s);
            let mut sc = SessionConfig::new(codec);
            sc.max_len = 20_000;
            sc.nonce = s;
            let mut session = StegoSession::new(b.provider(), rc.clone(), key(&mut rng), sc).unwrap();
            let out = session.encode(&bits(&mut rng, 256)).unwrap();
            assert!(out.is_complete(), "{codec} session {s} ran out of room");
            out.record
        })
        .collect()
}

fn reformed() -> ReformConfig {
    ReformConfig { c: 0.1, alpha: 0.1, ..ReformConfig::default() }
}

fn baseline() -> ReformConfig {
    ReformConfig { c: 0.0, alpha: 0.0, ..ReformConfig::default() }
}

fn capacity_and_temperature() -> (Outcome, Vec<GenerationRecord>) {
    let b = SkewedBenchmark::build(&SkewedSpec::default()).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    let mut observed = Vec::new();
    for codec in CodecKind::ALL {
        let er = |cfg| {
            let recs = benchmark_sessions(&b, codec, cfg, 200);
            let er = mean(&recs.iter().map(GenerationRecord::embedding_rate).collect::<Vec<_>>());
            (er, recs)
        };
        let (base, _) = er(baseline());
        let (on, recs) = er(reformed());
        observed.extend(recs);
        pass &= on > base;
        let gain = if base > 0.0 { format!("{:+.1}%", 100.0 * (on - base) / base) } else { "n/a".into() };
        details.push(format!("{codec} {base:.3}->{on:.3} ({gain})"));
    }
    (outcome(pass, details.join("; ")), observed)
}

fn alignment() -> Outcome {
    const TOKENS: usize = 20_000;
    let mut rs_wins = 0;
    let mut discop_wins = 0;
    let mut deltas = Vec::new();
    let spatial_off = ReformConfig { alpha: 0.0, ..reformed() };
    for seed in 0..10u64 {
        let b = SkewedBenchmark::build(&SkewedSpec { seed, ..SkewedSpec::default() }).unwrap();
        let tv = |cfg: &ReformConfig, random: bool| -> f64 {
            let rc = b.reform(cfg.clone()).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(seed * 31 + 5);
            let mut streams: Vec<Vec<TokenId>> = Vec::new();
            let mut n = 0;
            let mut session_no = 0;
            while n < TOKENS {
                let mut sc = SessionConfig::new(CodecKind::Discop);
                sc.max_len = TOKENS;
                sc.nonce = session_no;
                let mut s = StegoSession::new(b.provider(), rc.clone(), key(&mut rng), sc).unwrap();
                let toks = if random {
                    s.generate_random(TOKENS).unwrap().tokens
                } else {
                    s.encode(&bits(&mut rng, 2048)).unwrap().record.tokens
                };
                n += toks.len();
                streams.push(toks);
                session_no += 1;
            }
            divergences(&b.table(&streams).unwrap(), &b.target).unwrap().0
        };
        let (rs0, rs1) = (tv(&spatial_off, true), tv(&reformed(), true));
        let (d0, d1) = (tv(&spatial_off, false), tv(&reformed(), false));
        rs_wins += (rs1 < rs0) as usize;
        discop_wins += (d1 < d0) as usize;
        deltas.push((rs0 - rs1, d0 - d1));
    }
    let (rs_mean, d_mean) = (
        mean(&deltas.iter().map(|d| d.0).collect::<Vec<_>>()),
        mean(&deltas.iter().map(|d| d.1).collect::<Vec<_>>()),
    );
    outcome(
        rs_wins == 10 && discop_wins == 10,
        format!("TV decreased on {rs_wins}/10 seeds (RS, mean drop {rs_mean:.4}), {discop_wins}/10 (DISCOP, mean drop {d_mean:.4})"),
    )
}

fn temperature_function(observed: &[GenerationRecord]) -> Outcome {
    let cfg = reformed();
    let exact_zero = temperature(0.0, &cfg) == cfg.base_temp;
    let grid: Vec<f64> = (0..=1200).map(|i| temperature(i as f64 * 0.01, &cfg)).collect();
    let monotone = grid.windows(2).all(|w| w[1] - w[0] >= -1e-9);
    let concave = grid.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] <= 1e-9);
    let v = 64f64;
    let upper = cfg.base_temp + cfg.theta * (1.0 + cfg.c * v.log2()).log2();
    let steps: usize = observed.iter().map(GenerationRecord::len).sum();
    let bad = observed
        .iter()
        .flat_map(|r| &r.temperature)
        .filter(|&&t| !(1.0..=upper).contains(&t))
        .count();
    outcome(
        exact_zero && monotone && concave && bad == 0 && steps > 0,
        format!("Temp(0) exact: {exact_zero}, monotone: {monotone}, concave: {concave}, {bad} of {steps} observed steps outside [1, {upper:.6}]"),
    )
}

fn quantization() -> Outcome {
    let mut worst = 0.0f64;
    let mut bad = 0;
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    for precision in [8u32, 16, 20] {
        for _ in 0..10_000 {
            let v = rng.gen_range(2..=64usize);
            let raw: Vec<f64> = (0..v)
                .map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen::<f64>().powi(3) })
                .collect();
            let raw = if raw.iter().all(|&x| x == 0.0) { vec![1.0; v] } else { raw };
            let dist = ProbDist::new({
                let s: f64 = raw.iter().sum();
                raw.iter().map(|x| x / s).collect()
            })
            .unwrap();
            let q = quantize(&dist, precision).unwrap();
            let scale = (1u64 << precision) as f64;
            let sum_ok = q.weights().iter().sum::<u64>() == 1u64 << precision;
            let bound = v as f64 / scale;
            let err = q
                .weights()
                .iter()
                .zip(&dist.probs)
                .map(|(&w, &p)| (w as f64 / scale - p).abs())
                .fold(0.0, f64::max);
            worst = worst.max(err / bound);
            if !sum_ok || err > bound {
                bad += 1;
            }
        }
    }
    outcome(bad == 0, format!("30000 distributions, {bad} violations, worst error {worst:.4} of the |V|/2^P bound"))
}

fn lemma() -> Outcome {
    let mut checked = 0;
    let mut violations = 0;
    for k in 1..=9 {
        let (c, v) = lemma1_grid(5 * k, 100);
        checked += c;
        violations += v;
    }
    outcome(violations == 0 && checked > 0, format!("{checked} grid points, {violations} violations"))
}

fn preprocessing() -> Outcome {
    let vocab = Vocabulary::from_tokens((1..512).map(|i| format!("t{i}"))).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let pick = WeightedIndex::new(zipf(512, 1.0)).unwrap();
    let stream: Vec<TokenId> = (0..2_000_000).map(|_| pick.sample(&mut rng) as TokenId).collect();
    let time = |n: usize| {
        (0..3)
            .map(|_| {
                let docs = vec![stream[..n].to_vec()];
                let t = Instant::now();
                let table = count_frequencies(&docs, 3, &vocab).unwrap();
                let e = t.elapsed();
                assert_eq!(table.total() as usize, n - 2);
                e
            })
            .min()
            .unwrap()
    };
    let one = time(1_000_000);
    let two = time(2_000_000);
    let ratio = two.as_secs_f64() / one.as_secs_f64();
    outcome(
        one < Duration::from_secs(10) && ratio <= 2.5,
        format!(
            "trigram table of 1M tokens in {:.3} s ({:.2e} s/token), 2M/1M time ratio {ratio:.2}",
            one.as_secs_f64(),
            one.as_secs_f64() / 1e6
        ),
    )
}

fn detector_calibration() -> Outcome {
    let vocab = Vocabulary::from_tokens((1..64).map(|i| format!("t{i}"))).unwrap();
    let probs = zipf(64, 1.0);
    let pick = WeightedIndex::new(&probs).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let mut draw = |n: usize| -> FreqTable {
        let s: Vec<TokenId> = (0..n).map(|_| pick.sample(&mut rng) as TokenId).collect();
        count_frequencies(&[s], 1, &vocab).unwrap()
    };
    let reference = draw(2_000_000);
    let trials = 1000;
    let positives = (0..trials)
        .filter(|_| chi_square_detector(&draw(5_000), &reference).unwrap().1 < 0.05)
        .count();
    let rate = positives as f64 / trials as f64;
    outcome((0.03..=0.07).contains(&rate), format!("{positives}/{trials} null trials flagged ({:.1}%)", 100.0 * rate))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    report("round-trip matrix", round_trip_matrix());
    report("distribution preservation", distribution_preservation());
    let (capacity, observed) = capacity_and_temperature();
    report("capacity direction", capacity);
    report("alignment direction", alignment());
    report("temperature function", temperature_function(&observed));
    report("quantization", quantization());
    report("lemma grid", lemma());
    report("preprocessing linearity", preprocessing());
    report("detector calibration", detector_calibration());
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
