//! Embedding rate of every codec on the synthetic benchmark, with reform
//! off and on.

use stegotext::codecs::{CodecKind, SecretKey};
use stegotext::metrics::pooled_embedding_rate;
use stegotext::pipeline::{SessionConfig, StegoSession};
use stegotext::reformer::ReformConfig;
use stegotext::synthetic::{SkewedBenchmark, SkewedSpec};

fn main() -> anyhow::Result<()> {
    let bench = SkewedBenchmark::build(&SkewedSpec::default())?;
    let arms = [("baseline", ReformConfig::disabled()), ("reform", ReformConfig::default())];
    println!("{:<8} {:>9} {:>9} {:>8}", "codec", arms[0].0, arms[1].0, "gain");
    for codec in CodecKind::ALL {
        let mut rates = Vec::new();
        for (_, cfg) in &arms {
            let rc = bench.reform(cfg.clone())?;
            let records = (0..40u64)
                .map(|s| {
                    let mut sc = SessionConfig::new(codec);
                    sc.nonce = s;
                    sc.max_len = 4096;
                    let message: Vec<bool> = (0..256).map(|i| (i * 31 + s as usize) % 7 < 3).collect();
                    let mut session = StegoSession::new(bench.provider(), rc.clone(), SecretKey::from_bytes([s as u8; 32]), sc)?;
                    Ok(session.encode(&message)?.record)
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            rates.push(pooled_embedding_rate(&records)?);
        }
        println!("{:<8} {:>9.3} {:>9.3} {:>+7.1}%", codec.name(), rates[0], rates[1], 100.0 * (rates[1] / rates[0] - 1.0));
    }
    Ok(())
}
