use std::collections::{BTreeMap, HashMap};
use std::ops::Bound;

use rayon::prelude::*;

use super::vocab::{TokenId, VocabIdentity, Vocabulary};
use crate::error::{Result, StegoError};

const TSV_MAGIC: &str = "#freq-table";
const TSV_VERSION: &str = "v1";

/// Empirical n-gram counts of a tokenized corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreqTable {
    order: usize,
    counts: BTreeMap<Vec<TokenId>, u64>,
    total: u64,
    vocab: VocabIdentity,
}

impl FreqTable {
    pub fn empty(order: usize, vocab: VocabIdentity) -> Self {
        FreqTable {
            order,
            counts: BTreeMap::new(),
            total: 0,
            vocab,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn vocab(&self) -> &VocabIdentity {
        &self.vocab
    }

    /// Set when no stream was long enough to contain a single n-gram.
    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, gram: &[TokenId]) -> u64 {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Relative frequency `count / total`; 0 for an empty table.
    pub fn frequency(&self, gram: &[TokenId]) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(gram) as f64 / self.total as f64
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[TokenId], u64)> + '_ {
        self.counts.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    /// All stored n-grams that start with `prefix` (of length `order - 1`),
    /// as (last token, count).
    pub fn continuations<'a>(
        &'a self,
        prefix: &'a [TokenId],
    ) -> impl Iterator<Item = (TokenId, u64)> + 'a {
        let start = prefix.to_vec();
        self.counts
            .range::<Vec<TokenId>, _>((Bound::Included(start), Bound::Unbounded))
            .take_while(move |(k, _)| k.starts_with(prefix))
            .filter(move |(k, _)| k.len() == prefix.len() + 1)
            .map(|(k, &v)| (k[k.len() - 1], v))
    }

    /// Unigram counts as a dense vector indexed by TokenId.
    pub fn dense_unigrams(&self) -> Result<Vec<u64>> {
        if self.order != 1 {
            return Err(StegoError::Incompatible(format!(
                "dense view needs a unigram table, this one has order {}",
                self.order
            )));
        }
        let mut out = vec![0u64; self.vocab.size];
        for (k, &v) in &self.counts {
            out[k[0] as usize] = v;
        }
        Ok(out)
    }

    fn check_total(&self) -> Result<()> {
        let sum: u64 = self.counts.values().sum();
        if sum != self.total {
            return Err(StegoError::malformed(format!(
                "frequency table total {} does not match sum of counts {sum}",
                self.total
            )));
        }
        Ok(())
    }

    pub fn to_tsv(&self, vocab: &Vocabulary) -> Result<String> {
        self.check_vocab(vocab)?;
        let mut out = format!(
            "{TSV_MAGIC}\t{TSV_VERSION}\torder={}\ttotal={}\tvocab_size={}\tvocab={}\n",
            self.order, self.total, self.vocab.size, self.vocab.hash
        );
        for (gram, count) in &self.counts {
            for (i, &id) in gram.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(vocab.token(id).expect("ids are checked against vocab"));
            }
            out.push('\t');
            out.push_str(&count.to_string());
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_tsv(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| StegoError::malformed("empty frequency table file"))?;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 6 || fields[0] != TSV_MAGIC || fields[1] != TSV_VERSION {
            return Err(StegoError::malformed(format!(
                "unrecognized frequency table header {header:?}"
            )));
        }
        let field = |i: usize, key: &str| -> Result<&str> {
            fields[i]
                .strip_prefix(key)
                .and_then(|s| s.strip_prefix('='))
                .ok_or_else(|| StegoError::malformed(format!("header field {key} missing")))
        };
        let parse_num = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| StegoError::malformed(format!("bad number {s:?}")))
        };
        let order = parse_num(field(2, "order")?)? as usize;
        let total = parse_num(field(3, "total")?)?;
        let vocab_size = parse_num(field(4, "vocab_size")?)? as usize;
        let hash = field(5, "vocab")?.to_string();
        let identity = VocabIdentity {
            size: vocab_size,
            hash,
        };
        if identity != vocab.identity() {
            return Err(StegoError::Incompatible(
                "frequency table was built with a different vocabulary".into(),
            ));
        }
        if order == 0 {
            return Err(StegoError::malformed("order must be at least 1"));
        }

        let mut counts = BTreeMap::new();
        for (lineno, line) in lines.enumerate() {
            let (gram_text, count_text) = line.split_once('\t').ok_or_else(|| {
                StegoError::malformed(format!("row {} has no tab separator", lineno + 2))
            })?;
            let gram = gram_text
                .split(' ')
                .map(|t| {
                    vocab
                        .id(t)
                        .ok_or_else(|| StegoError::malformed(format!("unknown token {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if gram.len() != order {
                return Err(StegoError::malformed(format!(
                    "row {} has {} tokens, expected {order}",
                    lineno + 2,
                    gram.len()
                )));
            }
            if counts.insert(gram, parse_num(count_text)?).is_some() {
                return Err(StegoError::malformed(format!(
                    "duplicate n-gram on row {}",
                    lineno + 2
                )));
            }
        }
        let table = FreqTable {
            order,
            counts,
            total,
            vocab: identity,
        };
        table.check_total()?;
        Ok(table)
    }

    fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if self.vocab != vocab.identity() {
            return Err(StegoError::Incompatible(
                "frequency table belongs to a different vocabulary".into(),
            ));
        }
        Ok(())
    }
}

fn count_stream(counts: &mut HashMap<Vec<TokenId>, u64>, stream: &[TokenId], n: usize) {
    if stream.len() < n {
        return;
    }
    for gram in stream.windows(n) {
        match counts.get_mut(gram) {
            Some(c) => *c += 1,
            None => {
                counts.insert(gram.to_vec(), 1);
            }
        }
    }
}

/// Counts every length-`n` window across all streams. Documents are counted
/// in parallel and merged.
pub fn count_frequencies(
    streams: &[Vec<TokenId>],
    n: usize,
    vocab: &Vocabulary,
) -> Result<FreqTable> {
    if n == 0 {
        return Err(StegoError::config("n-gram order must be at least 1"));
    }
    if streams.is_empty() {
        return Err(StegoError::config("no token streams to count"));
    }
    let size = vocab.len() as TokenId;
    if let Some(bad) = streams.iter().flatten().find(|&&id| id >= size) {
        return Err(StegoError::malformed(format!(
            "token id {bad} outside vocabulary of size {size}"
        )));
    }
    let counts = streams
        .par_iter()
        .fold(HashMap::new, |mut acc, s| {
            count_stream(&mut acc, s, n);
            acc
        })
        .reduce(HashMap::new, merge_maps);
    let total = counts.values().sum();
    Ok(FreqTable {
        order: n,
        counts: counts.into_iter().collect(),
        total,
        vocab: vocab.identity(),
    })
}

fn merge_maps(
    a: HashMap<Vec<TokenId>, u64>,
    b: HashMap<Vec<TokenId>, u64>,
) -> HashMap<Vec<TokenId>, u64> {
    let (mut a, b) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    for (k, v) in b {
        *a.entry(k).or_default() += v;
    }
    a
}

/// Pointwise sum of two tables over the same vocabulary and order.
pub fn merge_frequencies(a: &FreqTable, b: &FreqTable) -> Result<FreqTable> {
    if a.order != b.order {
        return Err(StegoError::Incompatible(format!(
            "cannot merge order {} with order {}",
            a.order, b.order
        )));
    }
    if a.vocab != b.vocab {
        return Err(StegoError::Incompatible(
            "cannot merge tables over different vocabularies".into(),
        ));
    }
    let mut counts = a.counts.clone();
    for (k, &v) in &b.counts {
        *counts.entry(k.clone()).or_default() += v;
    }
    Ok(FreqTable {
        order: a.order,
        counts,
        total: a.total + b.total,
        vocab: a.vocab.clone(),
    })
}
