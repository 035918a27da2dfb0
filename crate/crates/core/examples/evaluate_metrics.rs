//! Generates stegotext with and without reform and compares the metrics.

use std::sync::Arc;

use num_rational::Ratio;
use stegotext::codecs::{CodecKind, SecretKey};
use stegotext::corpus::{count_frequencies, tokenize_corpus, train_ngram, Vocabulary};
use stegotext::lm::NGramProvider;
use stegotext::metrics::{evaluate, EvalInput};
use stegotext::pipeline::{SessionConfig, StegoSession};
use stegotext::reformer::{ReformConfig, ReformContext};

const CORPUS: &[u8] = include_bytes!("../tests/data/corpus.txt");
const TARGET: &[u8] = include_bytes!("../tests/data/target.txt");

fn main() -> anyhow::Result<()> {
    let vocab = Vocabulary::build_whitespace([std::str::from_utf8(CORPUS)?, std::str::from_utf8(TARGET)?], 1, true)?;
    let model_docs = tokenize_corpus(CORPUS, &vocab)?;
    let model = Arc::new(train_ngram(&model_docs, 2, Ratio::new(1, 10), &vocab)?);
    let model_freq = Arc::new(count_frequencies(&model_docs, 1, &vocab)?);
    let target_freq = Arc::new(count_frequencies(&tokenize_corpus(TARGET, &vocab)?, 1, &vocab)?);

    for (label, cfg) in [("plain", ReformConfig::disabled()), ("reformed", ReformConfig { alpha: 0.3, ..ReformConfig::default() })] {
        let rc = Arc::new(ReformContext::new(cfg, target_freq.clone(), model_freq.clone())?);
        let mut sc = SessionConfig::new(CodecKind::Meteor);
        sc.stop_tokens = vec![vocab.eos_id().expect("vocabulary has </s>")];
        let records = (0..200u64)
            .map(|nonce| {
                let mut sc = sc.clone();
                sc.nonce = nonce;
                let message: Vec<bool> = (0..64).map(|i| (nonce >> (i % 64)) & 1 == 1).collect();
                let mut s = StegoSession::new(NGramProvider::new(model.clone()), rc.clone(), SecretKey::from_bytes([3; 32]), sc)?;
                Ok(s.encode(&message)?.record)
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let generated: Vec<_> = records.iter().map(|r| r.tokens.clone()).collect();
        let report = evaluate(&EvalInput {
            vocab: &vocab,
            generated: &generated,
            target: &target_freq,
            judge: &model,
            records: &records,
            distinct: &[1, 2, 3],
        })?;
        println!("== {label}");
        print!("{}", report.to_table());
    }
    Ok(())
}
