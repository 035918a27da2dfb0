//! Counts n-gram frequencies, merges shards and prints the tokens whose
//! target frequency most exceeds the model's.

use stegotext::corpus::{count_frequencies, merge_frequencies, tokenize_corpus, FreqTable, Vocabulary};

const CORPUS: &[u8] = include_bytes!("../tests/data/corpus.txt");
const TARGET: &[u8] = include_bytes!("../tests/data/target.txt");

fn main() -> anyhow::Result<()> {
    let vocab = Vocabulary::build_whitespace([std::str::from_utf8(CORPUS)?, std::str::from_utf8(TARGET)?], 1, true)?;
    let model_docs = tokenize_corpus(CORPUS, &vocab)?;
    let target_docs = tokenize_corpus(TARGET, &vocab)?;

    // two shards counted separately merge to the same table as one pass
    let (a, b) = model_docs.split_at(model_docs.len() / 2);
    let merged = merge_frequencies(&count_frequencies(a, 2, &vocab)?, &count_frequencies(b, 2, &vocab)?)?;
    let whole = count_frequencies(&model_docs, 2, &vocab)?;
    assert_eq!(merged.to_tsv(&vocab)?, whole.to_tsv(&vocab)?);
    println!("bigram table: {} distinct, {} total", whole.distinct(), whole.total());

    let tsv = whole.to_tsv(&vocab)?;
    println!("first rows of the TSV form:");
    for line in tsv.lines().take(4) {
        println!("  {line}");
    }
    assert_eq!(FreqTable::from_tsv(&tsv, &vocab)?.total(), whole.total());

    let model = count_frequencies(&model_docs, 1, &vocab)?;
    let target = count_frequencies(&target_docs, 1, &vocab)?;
    let mut ratios: Vec<(f64, &str)> = vocab
        .tokens()
        .iter()
        .enumerate()
        .filter(|(i, _)| model.count(&[*i as u32]) > 0 && target.count(&[*i as u32]) > 0)
        .map(|(i, t)| (target.frequency(&[i as u32]) / model.frequency(&[i as u32]), t.as_str()))
        .collect();
    ratios.sort_by(|x, y| y.0.total_cmp(&x.0));
    println!("largest f_D / f_M:");
    for (r, t) in ratios.iter().take(5) {
        println!("  {t:<10} {r:.2}");
    }
    Ok(())
}
