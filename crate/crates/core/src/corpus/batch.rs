use super::document::Document;
use super::labels::Label;
use super::vocab::{VocabConfig, PAD_ID};
use crate::error::{contract, Result};

pub const DEFAULT_MAX_TOKENS: usize = 128;
pub const DEFAULT_MAX_SENTENCES: usize = 200;

/// A document cut and padded to a fixed sentence width.
///
/// Token arrays are row-major `sentences × max_tokens`. A `None` label is the
/// ignore marker.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedDocument {
    pub id: String,
    pub max_tokens: usize,
    pub token_ids: Vec<u32>,
    pub token_labels: Vec<Option<Label>>,
    pub token_mask: Vec<bool>,
    pub sentence_labels: Vec<Option<bool>>,
    pub sentence_mask: Vec<bool>,
    pub document_label: Option<bool>,
}

impl BatchedDocument {
    pub fn sentences(&self) -> usize {
        self.sentence_mask.len()
    }

    /// Number of real tokens in each sentence.
    pub fn lengths(&self) -> Vec<usize> {
        self.token_mask
            .chunks(self.max_tokens)
            .map(|row| row.iter().filter(|&&m| m).count())
            .collect()
    }

    pub fn row<T: Copy>(&self, values: &[T], sentence: usize) -> Vec<T> {
        values[sentence * self.max_tokens..(sentence + 1) * self.max_tokens].to_vec()
    }

    pub fn has_token_targets(&self) -> bool {
        self.token_labels.iter().any(Option::is_some)
    }

    pub fn has_sentence_targets(&self) -> bool {
        self.sentence_labels.iter().any(Option::is_some)
    }

    /// Gold labels of the real positions, one list per sentence.
    pub fn gold_sequences(&self) -> Option<Vec<Vec<Label>>> {
        (0..self.sentences())
            .map(|s| {
                let mask = self.row(&self.token_mask, s);
                let labels = self.row(&self.token_labels, s);
                mask.iter()
                    .zip(labels)
                    .filter(|(m, _)| **m)
                    .map(|(_, l)| l)
                    .collect::<Option<Vec<_>>>()
            })
            .collect()
    }

    /// Re-pads every sentence to `max_tokens` positions.
    pub fn repad(&self, max_tokens: usize) -> Result<Self> {
        let lengths = self.lengths();
        if lengths.iter().any(|&l| l > max_tokens) {
            return contract("repad would truncate a sentence");
        }
        let rows = self.sentences();
        let mut out = Self {
            max_tokens,
            token_ids: vec![PAD_ID; rows * max_tokens],
            token_labels: vec![None; rows * max_tokens],
            token_mask: vec![false; rows * max_tokens],
            ..self.clone()
        };
        for s in 0..rows {
            for j in 0..self.max_tokens {
                let (from, to) = (s * self.max_tokens + j, s * max_tokens + j);
                if self.token_mask[from] {
                    out.token_ids[to] = self.token_ids[from];
                    out.token_labels[to] = self.token_labels[from];
                    out.token_mask[to] = true;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchConfig {
    pub max_tokens: usize,
    pub max_sentences: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            max_tokens: DEFAULT_MAX_TOKENS,
            max_sentences: DEFAULT_MAX_SENTENCES,
        }
    }
}

/// Tokenizes, truncates and pads one document.
pub fn batch_document(doc: &Document, vocab: &VocabConfig, cfg: BatchConfig) -> Result<BatchedDocument> {
    if doc.sentences.is_empty() || doc.token_count() == 0 {
        return contract(format!("document {} is empty", doc.id));
    }
    if let Some(i) = doc.sentences.iter().position(|s| s.tokens.is_empty()) {
        return contract(format!("document {}: sentence {i} is empty", doc.id));
    }
    if cfg.max_tokens == 0 || cfg.max_sentences == 0 {
        return contract("batch limits must be positive");
    }
    let n = cfg.max_tokens;
    let sentences = &doc.sentences[..doc.sentences.len().min(cfg.max_sentences)];
    let rows = sentences.len();
    let mut out = BatchedDocument {
        id: doc.id.clone(),
        max_tokens: n,
        token_ids: vec![PAD_ID; rows * n],
        token_labels: vec![None; rows * n],
        token_mask: vec![false; rows * n],
        sentence_labels: sentences.iter().map(|s| s.gold_positive).collect(),
        sentence_mask: vec![true; rows],
        document_label: doc.gold_positive,
    };
    for (i, s) in sentences.iter().enumerate() {
        for (j, t) in s.tokens.iter().take(n).enumerate() {
            out.token_ids[i * n + j] = vocab.token_id(&t.text);
            out.token_labels[i * n + j] = t.gold_label;
            out.token_mask[i * n + j] = true;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::document::Sentence;
    use crate::corpus::sample::example_document;

    fn long_doc(tokens: usize, sentences: usize) -> Document {
        let words: Vec<String> = (0..tokens).map(|i| format!("w{i}")).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let labels = vec![Label::O; tokens];
        Document::new("long", vec![Sentence::labeled(&refs, &labels); sentences])
    }

    #[test]
    fn truncates_long_sentences() {
        let b = batch_document(&long_doc(130, 1), &VocabConfig::default(), BatchConfig::default()).unwrap();
        assert_eq!(b.token_ids.len(), 128);
        assert!(b.token_mask.iter().all(|&m| m));
        assert_eq!(b.lengths(), [128]);
    }

    #[test]
    fn pads_short_sentences() {
        let b = batch_document(&long_doc(3, 1), &VocabConfig::default(), BatchConfig::default()).unwrap();
        assert_eq!(b.lengths(), [3]);
        for j in 3..128 {
            assert!(!b.token_mask[j]);
            assert_eq!(b.token_labels[j], None);
            assert_eq!(b.token_ids[j], PAD_ID);
        }
    }

    #[test]
    fn truncates_long_documents() {
        let b = batch_document(&long_doc(2, 250), &VocabConfig::default(), BatchConfig::default()).unwrap();
        assert_eq!(b.sentences(), 200);
        assert_eq!(b.sentence_labels.len(), 200);
    }

    #[test]
    fn empty_document_is_rejected() {
        let d = Document::new("e", vec![]);
        assert!(batch_document(&d, &VocabConfig::default(), BatchConfig::default()).is_err());
    }

    #[test]
    fn mask_matches_ignore_marker() {
        let b = batch_document(&example_document("x"), &VocabConfig::default(), BatchConfig::default()).unwrap();
        for (m, l) in b.token_mask.iter().zip(&b.token_labels) {
            assert_eq!(*m, l.is_some());
        }
    }

    #[test]
    fn repad_keeps_real_positions() {
        let cfg = BatchConfig { max_tokens: 20, max_sentences: 4 };
        let b = batch_document(&example_document("x"), &VocabConfig::default(), cfg).unwrap();
        let wide = b.repad(128).unwrap();
        assert_eq!(wide.lengths(), b.lengths());
        assert_eq!(wide.gold_sequences(), b.gold_sequences());
        assert!(b.repad(10).is_err());
    }
}
