use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, StegoError};

pub type TokenId = u32;

/// Reserved id of the unknown token in every vocabulary.
pub const UNK_ID: TokenId = 0;
pub const UNK_TOKEN: &str = "<unk>";
pub const EOS_TOKEN: &str = "</s>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenScheme {
    Whitespace,
    Byte,
}

impl std::str::FromStr for TokenScheme {
    type Err = StegoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(TokenScheme::Whitespace),
            "byte" => Ok(TokenScheme::Byte),
            other => Err(StegoError::config(format!("unknown token scheme {other:?}"))),
        }
    }
}

fn byte_token(b: u8) -> String {
    format!("<0x{b:02X}>")
}

/// Dense token-string to id mapping. Id 0 is always [`UNK_TOKEN`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
    scheme: TokenScheme,
}

impl Vocabulary {
    /// Builds a whitespace vocabulary from an ordered token list. `<unk>` is
    /// prepended when the list does not already start with it.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if list.first().map(String::as_str) != Some(UNK_TOKEN) {
            list.insert(0, UNK_TOKEN.to_string());
        }
        Self::with_scheme(list, TokenScheme::Whitespace)
    }

    fn with_scheme(tokens: Vec<String>, scheme: TokenScheme) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(StegoError::malformed(format!(
                    "token {i} is empty or contains whitespace"
                )));
            }
            if ids.insert(tok.clone(), i as TokenId).is_some() {
                return Err(StegoError::malformed(format!("duplicate token {tok:?}")));
            }
        }
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(StegoError::malformed("vocabulary must start with <unk>"));
        }
        Ok(Vocabulary {
            tokens,
            ids,
            scheme,
        })
    }

    /// Byte-level vocabulary: `<unk>`, optional `</s>`, then the 256 byte tokens.
    pub fn bytes(with_eos: bool) -> Self {
        let mut tokens = vec![UNK_TOKEN.to_string()];
        if with_eos {
            tokens.push(EOS_TOKEN.to_string());
        }
        tokens.extend((0..=255u8).map(byte_token));
        Self::with_scheme(tokens, TokenScheme::Byte).expect("byte vocabulary is well formed")
    }

    /// Whitespace vocabulary from raw documents. Tokens seen fewer than
    /// `min_count` times are left out (they tokenize to UNK). Ordering is by
    /// descending count, then lexicographic.
    pub fn build_whitespace<'a, I>(documents: I, min_count: u64, with_eos: bool) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&'a str, u64> = HashMap::new();
        for doc in documents {
            for tok in doc.split_whitespace() {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut entries: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(tok, n)| n >= min_count && tok != UNK_TOKEN && tok != EOS_TOKEN)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut tokens = vec![UNK_TOKEN.to_string()];
        if with_eos {
            tokens.push(EOS_TOKEN.to_string());
        }
        tokens.extend(entries.into_iter().map(|(t, _)| t.to_string()));
        Self::with_scheme(tokens, TokenScheme::Whitespace)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn scheme(&self) -> TokenScheme {
        self.scheme
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn eos_id(&self) -> Option<TokenId> {
        self.id(EOS_TOKEN)
    }

    /// Id of the token for byte `b` under the byte scheme.
    pub fn byte_id(&self, b: u8) -> Option<TokenId> {
        self.id(&byte_token(b))
    }

    /// One token per line; line number is the id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        let scheme = if is_byte_vocab(&tokens) {
            TokenScheme::Byte
        } else {
            TokenScheme::Whitespace
        };
        Self::with_scheme(tokens, scheme)
    }

    /// SHA-256 of the serialized form, lowercase hex.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }

    pub fn identity(&self) -> VocabIdentity {
        VocabIdentity {
            size: self.len(),
            hash: self.hash(),
        }
    }
}

fn is_byte_vocab(tokens: &[String]) -> bool {
    let bytes = tokens
        .iter()
        .filter(|t| t.as_str() != UNK_TOKEN && t.as_str() != EOS_TOKEN)
        .count();
    bytes == 256 && (0..=255u8).all(|b| tokens.contains(&byte_token(b)))
}

/// Size and hash pair carried by artifacts that are tied to one vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VocabIdentity {
    pub size: usize,
    pub hash: String,
}

pub fn sha256_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Tokenizes `input` with the vocabulary's scheme. Unknown whitespace tokens
/// map to [`UNK_ID`].
pub fn tokenize(input: &[u8], vocab: &Vocabulary, scheme: TokenScheme) -> Result<Vec<TokenId>> {
    if scheme != vocab.scheme() {
        return Err(StegoError::Incompatible(format!(
            "vocabulary was built with the {:?} scheme, not {scheme:?}",
            vocab.scheme()
        )));
    }
    match scheme {
        TokenScheme::Whitespace => {
            let text = std::str::from_utf8(input)
                .map_err(|e| StegoError::malformed(format!("input is not UTF-8: {e}")))?;
            Ok(text
                .split_whitespace()
                .map(|t| vocab.id(t).unwrap_or(UNK_ID))
                .collect())
        }
        TokenScheme::Byte => Ok(input
            .iter()
            .map(|&b| vocab.byte_id(b).unwrap_or(UNK_ID))
            .collect()),
    }
}

/// Inverse of [`tokenize`]. Whitespace tokens are joined by single spaces.
/// Special tokens have no byte form and are rejected under the byte scheme.
pub fn detokenize(ids: &[TokenId], vocab: &Vocabulary) -> Result<Vec<u8>> {
    let lookup = |id: TokenId| {
        vocab
            .token(id)
            .ok_or_else(|| StegoError::malformed(format!("token id {id} outside vocabulary")))
    };
    match vocab.scheme() {
        TokenScheme::Whitespace => {
            let mut out = Vec::new();
            for (i, &id) in ids.iter().enumerate() {
                if i > 0 {
                    out.push(b' ');
                }
                out.extend_from_slice(lookup(id)?.as_bytes());
            }
            Ok(out)
        }
        TokenScheme::Byte => ids
            .iter()
            .map(|&id| {
                let tok = lookup(id)?;
                tok.strip_prefix("<0x")
                    .and_then(|h| h.strip_suffix('>'))
                    .and_then(|h| u8::from_str_radix(h, 16).ok())
                    .ok_or_else(|| {
                        StegoError::malformed(format!("token {tok:?} has no byte form"))
                    })
            })
            .collect(),
    }
}

/// Splits a corpus into line documents, tokenizes each and appends `</s>`
/// when the vocabulary has one. Blank lines are skipped.
pub fn tokenize_corpus(corpus: &[u8], vocab: &Vocabulary) -> Result<Vec<Vec<TokenId>>> {
    let eos = vocab.eos_id();
    let mut docs = Vec::new();
    for line in corpus.split(|&b| b == b'\n') {
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let mut ids = tokenize(line, vocab, vocab.scheme())?;
        ids.extend(eos);
        docs.push(ids);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> Vocabulary {
        Vocabulary::from_tokens(["a", "b"]).unwrap()
    }

    #[test]
    fn lookup_and_unknown() {
        let v = ab();
        let ws = TokenScheme::Whitespace;
        assert_eq!(tokenize(b"a b a", &v, ws).unwrap(), vec![1, 2, 1]);
        assert_eq!(tokenize(b"", &v, ws).unwrap(), Vec::<TokenId>::new());
        assert_eq!(tokenize(b"a c", &v, ws).unwrap(), vec![1, 0]);
    }

    #[test]
    fn scheme_mismatch_is_rejected() {
        assert!(tokenize(b"a", &ab(), TokenScheme::Byte).is_err());
    }

    #[test]
    fn whitespace_detokenize_normalizes_spacing() {
        let v = ab();
        let ids = tokenize(b"  a\tb \n a ", &v, TokenScheme::Whitespace).unwrap();
        assert_eq!(detokenize(&ids, &v).unwrap(), b"a b a");
    }

    #[test]
    fn byte_scheme_is_lossless() {
        let v = Vocabulary::bytes(true);
        let input: Vec<u8> = (0..=255u8).chain([0, 10, 13, 255]).collect();
        let ids = tokenize(&input, &v, TokenScheme::Byte).unwrap();
        assert_eq!(detokenize(&ids, &v).unwrap(), input);
        assert!(detokenize(&[v.eos_id().unwrap()], &v).is_err());
    }

    #[test]
    fn text_round_trip_keeps_scheme_and_ids() {
        for v in [ab(), Vocabulary::bytes(false), Vocabulary::bytes(true)] {
            let text = v.to_text();
            let back = Vocabulary::from_text(&text).unwrap();
            assert_eq!(back, v);
            assert_eq!(back.to_text(), text);
        }
    }

    #[test]
    fn build_orders_by_count_then_lexically() {
        let v = Vocabulary::build_whitespace(["b a c", "a b", "a"], 1, true).unwrap();
        assert_eq!(v.tokens(), &["<unk>", "</s>", "a", "b", "c"]);
        let v = Vocabulary::build_whitespace(["b a c", "a b", "a"], 2, false).unwrap();
        assert_eq!(v.tokens(), &["<unk>", "a", "b"]);
    }

    #[test]
    fn duplicates_rejected() {
        assert!(Vocabulary::from_tokens(["a", "a"]).is_err());
        assert!(Vocabulary::from_text("a\nb\n").is_err());
    }

    #[test]
    fn corpus_lines_get_eos() {
        let v = Vocabulary::from_tokens(["</s>", "x", "y"]).unwrap();
        let docs = tokenize_corpus(b"x y\n\n y\r\n", &v).unwrap();
        assert_eq!(docs, vec![vec![2, 3, 1], vec![3, 1]]);
    }
}
