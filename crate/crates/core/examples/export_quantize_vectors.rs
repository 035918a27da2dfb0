//! Writes quantization parity vectors as JSON so another implementation of
//! the quantizer can be checked against this one.
//!
//! `cargo run --example export_quantize_vectors -- [count] [seed] [path]`

use stegotext::quantize::parity_vectors;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map_or(Ok(10_000), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(11), |s| s.parse())?;
    let path = args.next().unwrap_or_else(|| "quantize_vectors.json".into());
    let vectors = parity_vectors(count, seed);
    std::fs::write(&path, serde_json::to_string_pretty(&vectors)? + "\n")?;
    println!("wrote {count} vectors (seed {seed}) to {path}");
    Ok(())
}
