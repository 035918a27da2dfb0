//! Hides a short message with each codec and reads it back.

use std::sync::Arc;

use num_rational::Ratio;
use stegotext::codecs::{bits_to_bytes, bytes_to_bits, CodecKind, SecretKey};
use stegotext::corpus::{count_frequencies, detokenize, tokenize_corpus, train_ngram, Vocabulary};
use stegotext::lm::NGramProvider;
use stegotext::pipeline::{SessionConfig, StegoSession};
use stegotext::reformer::{ReformConfig, ReformContext};

const CORPUS: &[u8] = include_bytes!("../tests/data/corpus.txt");
const TARGET: &[u8] = include_bytes!("../tests/data/target.txt");

fn main() -> anyhow::Result<()> {
    let vocab = Vocabulary::build_whitespace([std::str::from_utf8(CORPUS)?, std::str::from_utf8(TARGET)?], 1, true)?;
    let model_docs = tokenize_corpus(CORPUS, &vocab)?;
    let model = Arc::new(train_ngram(&model_docs, 3, Ratio::new(1, 10), &vocab)?);
    let rc = Arc::new(ReformContext::new(
        ReformConfig::default(),
        Arc::new(count_frequencies(&tokenize_corpus(TARGET, &vocab)?, 1, &vocab)?),
        Arc::new(count_frequencies(&model_docs, 1, &vocab)?),
    )?);
    let key = SecretKey::from_bytes(*b"an example key of thirty-two by.");
    let message = bytes_to_bits(b"meet at noon");

    for codec in CodecKind::ALL {
        let mut cfg = SessionConfig::new(codec);
        cfg.nonce = 42;
        cfg.max_len = 4096;
        cfg.stop_tokens = vec![vocab.eos_id().expect("vocabulary has </s>")];

        let mut sender = StegoSession::new(NGramProvider::new(model.clone()), rc.clone(), key, cfg.clone())?;
        let out = sender.encode(&message)?;
        let text = String::from_utf8(detokenize(out.tokens(), &vocab)?)?;

        let mut receiver = StegoSession::new(NGramProvider::new(model.clone()), rc.clone(), key, cfg)?;
        let back = receiver.decode(out.tokens())?;
        println!("{codec}: {} tokens, {:.2} bits/token", out.record.len(), out.record.embedding_rate());
        println!("  {text}");
        println!("  recovered {:?}", String::from_utf8_lossy(&bits_to_bytes(&back.message)));
    }
    Ok(())
}
