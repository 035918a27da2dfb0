use std::collections::BTreeMap;
use std::str::FromStr;

use num_rational::Ratio;

use super::vocab::{TokenId, VocabIdentity, Vocabulary};
use crate::error::{Result, StegoError};

const MODEL_MAGIC: &str = "#ngram-model";
const MODEL_VERSION: &str = "v1";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

/// Additively smoothed n-gram model. Conditionals are exact rationals:
/// `p(w | ctx) = (count(ctx, w) + κ) / (count(ctx) + κ·|V|)`.
///
/// The context of a position is the preceding `order - 1` tokens, or fewer at
/// the start of a stream. Contexts never seen in training get the uniform
/// distribution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NGramModel {
    order: usize,
    kappa: Ratio<u64>,
    vocab: VocabIdentity,
    contexts: BTreeMap<Vec<TokenId>, ContextCounts>,
}

/// A conditional distribution as integer numerators over one denominator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalDist {
    pub numerators: Vec<u64>,
    pub denominator: u64,
}

impl RationalDist {
    pub fn probability(&self, id: TokenId) -> Ratio<u64> {
        Ratio::new(self.numerators[id as usize], self.denominator)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        let d = self.denominator as f64;
        self.numerators.iter().map(|&n| n as f64 / d).collect()
    }

    /// Natural-log scores `ln(num) - ln(den)`.
    pub fn log_probs(&self) -> Vec<f64> {
        let ld = (self.denominator as f64).ln();
        self.numerators
            .iter()
            .map(|&n| (n as f64).ln() - ld)
            .collect()
    }
}

pub fn parse_kappa(s: &str) -> Result<Ratio<u64>> {
    let k = Ratio::<u64>::from_str(s.trim())
        .map_err(|_| StegoError::config(format!("smoothing constant {s:?} is not a rational")))?;
    if *k.numer() == 0 {
        return Err(StegoError::config("smoothing constant must be positive"));
    }
    Ok(k)
}

/// Trains an n-gram model over the given streams.
pub fn train_ngram(
    streams: &[Vec<TokenId>],
    order: usize,
    kappa: Ratio<u64>,
    vocab: &Vocabulary,
) -> Result<NGramModel> {
    if order == 0 {
        return Err(StegoError::config("model order must be at least 1"));
    }
    if *kappa.numer() == 0 {
        return Err(StegoError::config("smoothing constant must be positive"));
    }
    let size = vocab.len() as TokenId;
    let mut contexts: BTreeMap<Vec<TokenId>, ContextCounts> = BTreeMap::new();
    for stream in streams {
        for (i, &next) in stream.iter().enumerate() {
            if next >= size {
                return Err(StegoError::malformed(format!(
                    "token id {next} outside vocabulary of size {size}"
                )));
            }
            let ctx = &stream[i.saturating_sub(order - 1)..i];
            let entry = match contexts.get_mut(ctx) {
                Some(e) => e,
                None => contexts.entry(ctx.to_vec()).or_default(),
            };
            entry.total += 1;
            *entry.next.entry(next).or_default() += 1;
        }
    }
    Ok(NGramModel {
        order,
        kappa,
        vocab: vocab.identity(),
        contexts,
    })
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kappa(&self) -> Ratio<u64> {
        self.kappa
    }

    pub fn vocab(&self) -> &VocabIdentity {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.size
    }

    pub fn context_count(&self) -> usize {
        self.contexts.len()
    }

    /// The context window this model conditions on, given the full history.
    pub fn context_of<'a>(&self, history: &'a [TokenId]) -> &'a [TokenId] {
        &history[history.len().saturating_sub(self.order - 1)..]
    }

    /// Conditional distribution of the next token after `history`.
    pub fn conditional(&self, history: &[TokenId]) -> RationalDist {
        let v = self.vocab.size as u64;
        let (a, b) = (*self.kappa.numer(), *self.kappa.denom());
        match self.contexts.get(self.context_of(history)) {
            None => RationalDist {
                numerators: vec![1; v as usize],
                denominator: v,
            },
            Some(ctx) => {
                // (c + a/b) / (C + V·a/b) = (b·c + a) / (b·C + a·V)
                let mut numerators = vec![a; v as usize];
                for (&tok, &c) in &ctx.next {
                    numerators[tok as usize] = b * c + a;
                }
                RationalDist {
                    numerators,
                    denominator: b * ctx.total + a * v,
                }
            }
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "{MODEL_MAGIC}\t{MODEL_VERSION}\torder={}\tkappa={}\tvocab_size={}\tvocab={}\n",
            self.order, self.kappa, self.vocab.size, self.vocab.hash
        );
        for (ctx, counts) in &self.contexts {
            let ctx_text = ctx
                .iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            for (tok, c) in &counts.next {
                out.push_str(&format!("{ctx_text}\t{tok}\t{c}\n"));
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| StegoError::malformed("empty model file"))?;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 6 || fields[0] != MODEL_MAGIC || fields[1] != MODEL_VERSION {
            return Err(StegoError::malformed(format!(
                "unrecognized model header {header:?}"
            )));
        }
        let field = |i: usize, key: &str| -> Result<&str> {
            fields[i]
                .strip_prefix(key)
                .and_then(|s| s.strip_prefix('='))
                .ok_or_else(|| StegoError::malformed(format!("header field {key} missing")))
        };
        let num = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| StegoError::malformed(format!("bad number {s:?}")))
        };
        let order = num(field(2, "order")?)? as usize;
        let kappa = parse_kappa(field(3, "kappa")?)?;
        let size = num(field(4, "vocab_size")?)? as usize;
        let hash = field(5, "vocab")?.to_string();
        if order == 0 {
            return Err(StegoError::malformed("model order must be at least 1"));
        }

        let mut contexts: BTreeMap<Vec<TokenId>, ContextCounts> = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let mut cols = line.split('\t');
            let (Some(ctx), Some(tok), Some(c), None) =
                (cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(StegoError::malformed(format!(
                    "model row {} does not have three columns",
                    i + 2
                )));
            };
            let ctx: Vec<TokenId> = if ctx.is_empty() {
                Vec::new()
            } else {
                ctx.split(' ')
                    .map(|t| num(t).map(|x| x as TokenId))
                    .collect::<Result<_>>()?
            };
            let tok = num(tok)? as TokenId;
            let c = num(c)?;
            if ctx.len() >= order || tok as usize >= size || ctx.iter().any(|&t| t as usize >= size)
            {
                return Err(StegoError::malformed(format!("model row {} out of range", i + 2)));
            }
            if c == 0 {
                return Err(StegoError::malformed(format!("model row {} has zero count", i + 2)));
            }
            let entry = contexts.entry(ctx).or_default();
            if entry.next.insert(tok, c).is_some() {
                return Err(StegoError::malformed(format!("duplicate model row {}", i + 2)));
            }
            entry.total += c;
        }
        Ok(NGramModel {
            order,
            kappa,
            vocab: VocabIdentity { size, hash },
            contexts,
        })
    }
}
