//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use num_rational::Ratio;
use stegotext::corpus::{count_frequencies, tokenize_corpus, train_ngram, FreqTable, NGramModel, Vocabulary};
use stegotext::reformer::{ReformConfig, ReformContext};

pub const CORPUS: &[u8] = include_bytes!("../data/corpus.txt");
pub const TARGET: &[u8] = include_bytes!("../data/target.txt");

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub struct Toy {
    pub vocab: Vocabulary,
    pub model_freq: Arc<FreqTable>,
    pub target_freq: Arc<FreqTable>,
}

pub fn toy() -> Toy {
    let vocab = Vocabulary::build_whitespace(
        [std::str::from_utf8(CORPUS).unwrap(), std::str::from_utf8(TARGET).unwrap()],
        1,
        true,
    )
    .unwrap();
    let model_docs = tokenize_corpus(CORPUS, &vocab).unwrap();
    let target_docs = tokenize_corpus(TARGET, &vocab).unwrap();
    Toy {
        model_freq: Arc::new(count_frequencies(&model_docs, 1, &vocab).unwrap()),
        target_freq: Arc::new(count_frequencies(&target_docs, 1, &vocab).unwrap()),
        vocab,
    }
}

impl Toy {
    pub fn model(&self, order: usize) -> Arc<NGramModel> {
        let docs = tokenize_corpus(CORPUS, &self.vocab).unwrap();
        Arc::new(train_ngram(&docs, order, Ratio::new(1, 10), &self.vocab).unwrap())
    }

    pub fn reform(&self, cfg: ReformConfig) -> Arc<ReformContext> {
        Arc::new(ReformContext::new(cfg, self.target_freq.clone(), self.model_freq.clone()).unwrap())
    }
}

/// Compares `actual` with the checked-in golden file, or rewrites the file
/// when `STEGOTEXT_BLESS=1`.
pub fn golden(name: &str, actual: &str) {
    let path = data("golden").join(name);
    if std::env::var("STEGOTEXT_BLESS").as_deref() == Ok("1") {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("{} is missing; run with STEGOTEXT_BLESS=1", path.display()));
    assert!(
        expected == actual,
        "{} differs from the golden file; rerun with STEGOTEXT_BLESS=1 if the change is intended",
        path.display()
    );
}
