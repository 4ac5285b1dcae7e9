use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::document::Corpus;
use crate::error::{Error, Result};

/// Draws `count` negative documents from `pool` without replacement and
/// labels every one of their sentences negative (or leaves sentence labels
/// absent when `label_sentences` is off).
pub fn sample_negatives(pool: &Corpus, count: usize, seed: u64, label_sentences: bool) -> Result<Corpus> {
    for d in &pool.documents {
        if d.has_token_annotations || d.gold_positive != Some(false) {
            return Err(Error::Data(format!("pool document {} is not an unannotated negative", d.id)));
        }
    }
    if count > pool.len() {
        return Err(Error::Data(format!(
            "negative pool has {} documents, {count} needed",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, pool.len(), count).into_vec();
    picked.sort_unstable();
    let mut out = pool.select(&picked, format!("{} sample {count}", pool.provenance));
    for d in &mut out.documents {
        for s in &mut d.sentences {
            s.gold_positive = label_sentences.then_some(false);
        }
    }
    Ok(out)
}

/// Union of `positives` with as many sampled negatives.
pub fn mix_negatives(positives: &Corpus, pool: &Corpus, seed: u64, label_sentences: bool) -> Result<Corpus> {
    let negatives = sample_negatives(pool, positives.len(), seed, label_sentences)?;
    let mut documents = positives.documents.clone();
    documents.extend(negatives.documents);
    Corpus::new(documents, format!("{} + negatives", positives.provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::document::{Document, Sentence};
    use crate::corpus::sample::example_document;

    fn pool(n: usize) -> Corpus {
        let docs = (0..n)
            .map(|i| {
                let mut d = Document::new(format!("n{i}"), vec![Sentence::unlabeled(&["a", "b"])]);
                d.gold_positive = Some(false);
                d
            })
            .collect();
        Corpus::new(docs, "pool").unwrap()
    }

    fn positives(n: usize) -> Corpus {
        Corpus::new((0..n).map(|i| example_document(&format!("p{i}"))).collect(), "pos").unwrap()
    }

    #[test]
    fn balances_positives() {
        let mixed = mix_negatives(&positives(5), &pool(12), 3, true).unwrap();
        assert_eq!(mixed.len(), 10);
        let negs = &mixed.documents[5..];
        assert!(negs.iter().all(|d| d.sentences.iter().all(|s| s.gold_positive == Some(false))));
        let unlabeled = mix_negatives(&positives(5), &pool(12), 3, false).unwrap();
        assert!(unlabeled.documents[5..].iter().all(|d| d.sentences[0].gold_positive.is_none()));
    }

    #[test]
    fn zero_positives_add_nothing() {
        assert_eq!(mix_negatives(&positives(0), &pool(3), 0, true).unwrap().len(), 0);
    }

    #[test]
    fn small_pool_is_a_data_error() {
        assert!(matches!(
            mix_negatives(&positives(71), &pool(10), 0, true),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn rejects_annotated_pool() {
        assert!(sample_negatives(&positives(2), 1, 0, true).is_err());
    }
}
