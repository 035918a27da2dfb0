//! Fixed-point quantization: integer weights, intervals and digests.

use stegotext::lm::ProbDist;
use stegotext::quantize::{cumulative, quantize};

fn main() -> anyhow::Result<()> {
    let dist = ProbDist::new(vec![0.5, 0.3, 0.15, 0.04, 0.01])?;
    for precision in [4, 8, 16] {
        let q = quantize(&dist, precision)?;
        println!("P = {precision}: weights {:?} (sum {})", q.weights(), q.total());
        println!("  cumulative {:?}", cumulative(&q));
        println!("  support {} of {}, digest {}", q.support_len(), q.len(), &q.digest()[..16]);
    }
    // at P = 4 the tail is too small for its own slot
    let q = quantize(&dist, 4)?;
    for (t, w) in q.weights().iter().enumerate() {
        if *w > 0 {
            println!("token {t}: interval {:?}", q.interval(t as u32));
        }
    }
    Ok(())
}
