//! Shows how one step's next-token distribution changes under reform.
//!
//! The model corpus and the target corpus share a grammar but differ in word
//! choice; tokens the target uses more often gain mass.

use std::sync::Arc;

use num_rational::Ratio;
use stegotext::corpus::{count_frequencies, tokenize_corpus, train_ngram, Vocabulary};
use stegotext::lm::{softmax, ContextState, DistributionProvider, NGramProvider};
use stegotext::reformer::{reform_step, ReformConfig, ReformContext};

const CORPUS: &[u8] = include_bytes!("../tests/data/corpus.txt");
const TARGET: &[u8] = include_bytes!("../tests/data/target.txt");

fn main() -> anyhow::Result<()> {
    let vocab = Vocabulary::build_whitespace([std::str::from_utf8(CORPUS)?, std::str::from_utf8(TARGET)?], 1, true)?;
    let model_docs = tokenize_corpus(CORPUS, &vocab)?;
    let target_docs = tokenize_corpus(TARGET, &vocab)?;
    let model = Arc::new(train_ngram(&model_docs, 2, Ratio::new(1, 10), &vocab)?);
    let rc = ReformContext::new(
        ReformConfig { alpha: 0.5, c: 0.5, ..ReformConfig::default() },
        Arc::new(count_frequencies(&target_docs, 1, &vocab)?),
        Arc::new(count_frequencies(&model_docs, 1, &vocab)?),
    )?;

    let the = vocab.id("the").expect("toy corpus has 'the'");
    let ctx = ContextState::new(&[the]);
    let logits = NGramProvider::new(model).next_logits(&ctx)?;
    let before = softmax(&logits);
    let after = reform_step(&logits, &rc, &ctx)?;
    println!("after 'the': entropy {:.3} bits, temperature {:.4}", after.entropy, after.temperature);

    let mut ids: Vec<usize> = (0..before.len()).collect();
    ids.sort_by(|&a, &b| before.probs[b].total_cmp(&before.probs[a]));
    println!("{:<10} {:>8} {:>8}", "token", "model", "reformed");
    for &i in ids.iter().take(8) {
        println!("{:<10} {:>8.4} {:>8.4}", vocab.token(i as u32).unwrap_or("?"), before.probs[i], after.dist.probs[i]);
    }
    Ok(())
}
