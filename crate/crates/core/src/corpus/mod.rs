//! Tokenization, frequency tables and the built-in n-gram language model.

mod freq;
mod ngram;
mod vocab;

pub use freq::{count_frequencies, merge_frequencies, FreqTable};
pub use ngram::{parse_kappa, train_ngram, NGramModel, RationalDist};
pub use vocab::{
    detokenize, sha256_hex, tokenize, tokenize_corpus, TokenId, TokenScheme, VocabIdentity,
    Vocabulary, EOS_TOKEN, UNK_ID, UNK_TOKEN,
};
