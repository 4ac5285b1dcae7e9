//! Seeded generator of small corpora with the same shape as real event data.
//!
//! Trigger words occur only inside positive sentences, so sentence and
//! document labels carry information about where triggers are. Argument
//! words also appear unlabeled in negative sentences as distractors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::document::{Corpus, Document, Sentence, Token};
use super::labels::{EventType, Label, NUM_TYPES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub documents: usize,
    pub negative_documents: usize,
    pub test_documents: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_sentence_len: usize,
    pub max_sentence_len: usize,
    pub positive_rate: f64,
    pub background_vocab: usize,
    pub span_vocab: usize,
    pub max_arguments: usize,
    pub max_span_len: usize,
    pub distractor_rate: f64,
    /// Forces at least one positive sentence per annotated document when the
    /// positive rate is nonzero.
    pub ensure_positive_documents: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            documents: 100,
            negative_documents: 100,
            test_documents: 40,
            min_sentences: 3,
            max_sentences: 8,
            min_sentence_len: 5,
            max_sentence_len: 12,
            positive_rate: 0.29,
            background_vocab: 200,
            span_vocab: 10,
            max_arguments: 3,
            max_span_len: 3,
            distractor_rate: 0.3,
            ensure_positive_documents: true,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        for (name, r) in [("positive_rate", self.positive_rate), ("distractor_rate", self.distractor_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} {r} outside [0, 1]")));
            }
        }
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return bad("sentence count range is empty");
        }
        if self.min_sentence_len == 0 || self.min_sentence_len > self.max_sentence_len {
            return bad("sentence length range is empty");
        }
        if self.background_vocab == 0 || self.span_vocab == 0 || self.max_span_len == 0 {
            return bad("vocabularies and span length must be nonempty");
        }
        if self.max_arguments > NUM_TYPES - 1 {
            return bad("more arguments than argument types");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Corpus,
    pub negatives: Corpus,
    pub test: Corpus,
}

fn trigger() -> EventType {
    EventType::from_name("trigger").expect("trigger is a type")
}

fn argument_types() -> Vec<EventType> {
    EventType::all().filter(|&t| t != trigger()).collect()
}

struct Generator<'c> {
    cfg: &'c GenConfig,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn background(&mut self) -> Token {
        Token::new(format!("bg{}", self.rng.random_range(0..self.cfg.background_vocab)), Some(Label::O))
    }

    fn span_word(&mut self, t: EventType) -> String {
        format!("{}{}", t.name(), self.rng.random_range(0..self.cfg.span_vocab))
    }

    fn negative_sentence(&mut self) -> Sentence {
        let len = self.rng.random_range(self.cfg.min_sentence_len..=self.cfg.max_sentence_len);
        let mut tokens: Vec<Token> = (0..len).map(|_| self.background()).collect();
        if self.rng.random_bool(self.cfg.distractor_rate) {
            let args = argument_types();
            let t = args[self.rng.random_range(0..args.len())];
            let at = self.rng.random_range(0..len);
            tokens[at] = Token::new(self.span_word(t), Some(Label::O));
        }
        Sentence {
            tokens,
            gold_positive: None,
        }
    }

    fn positive_sentence(&mut self) -> Sentence {
        let mut types = vec![trigger()];
        let mut args = argument_types();
        let k = self.rng.random_range(0..=self.cfg.max_arguments);
        for _ in 0..k {
            types.push(args.swap_remove(self.rng.random_range(0..args.len())));
        }
        // Random span order.
        for i in (1..types.len()).rev() {
            types.swap(i, self.rng.random_range(0..=i));
        }
        let spans: Vec<Vec<Token>> = types
            .iter()
            .map(|&t| {
                let max = if t == trigger() { self.cfg.max_span_len.min(2) } else { self.cfg.max_span_len };
                let len = self.rng.random_range(1..=max);
                (0..len)
                    .map(|j| {
                        let label = if j == 0 { Label::begin(t) } else { Label::inside(t) };
                        Token::new(self.span_word(t), Some(label))
                    })
                    .collect()
            })
            .collect();
        let span_tokens: usize = spans.iter().map(Vec::len).sum();
        let len = self.rng.random_range(self.cfg.min_sentence_len..=self.cfg.max_sentence_len);
        let fill = len.saturating_sub(span_tokens).max(spans.len() - 1);
        // Gap before, between and after spans; inner gaps keep spans apart.
        let mut gaps = vec![0usize; spans.len() + 1];
        for g in &mut gaps[1..spans.len()] {
            *g = 1;
        }
        for _ in 0..fill - (spans.len() - 1) {
            let at = self.rng.random_range(0..gaps.len());
            gaps[at] += 1;
        }
        let mut tokens = Vec::with_capacity(span_tokens + fill);
        for (i, span) in spans.into_iter().enumerate() {
            for _ in 0..gaps[i] {
                tokens.push(self.background());
            }
            tokens.extend(span);
        }
        for _ in 0..gaps[gaps.len() - 1] {
            tokens.push(self.background());
        }
        Sentence {
            tokens,
            gold_positive: None,
        }
    }

    fn annotated_document(&mut self, id: String) -> Result<Document> {
        let n = self.rng.random_range(self.cfg.min_sentences..=self.cfg.max_sentences);
        let mut positive: Vec<bool> = (0..n).map(|_| self.rng.random_bool(self.cfg.positive_rate)).collect();
        if self.cfg.ensure_positive_documents && self.cfg.positive_rate > 0.0 && !positive.contains(&true) {
            let at = self.rng.random_range(0..n);
            positive[at] = true;
        }
        let sentences = positive
            .into_iter()
            .map(|p| if p { self.positive_sentence() } else { self.negative_sentence() })
            .collect();
        let mut doc = Document::new(id, sentences);
        doc.derive_coarse()?;
        Ok(doc)
    }

    fn negative_document(&mut self, id: String) -> Result<Document> {
        let n = self.rng.random_range(self.cfg.min_sentences..=self.cfg.max_sentences);
        let sentences = (0..n).map(|_| self.negative_sentence()).collect();
        let mut doc = Document::new(id, sentences);
        doc.derive_coarse()?;
        Ok(doc.into_coarse(true))
    }
}

/// Generates train, negative-pool and test corpora. Each part uses its own
/// random stream, so changing one count leaves the other parts unchanged.
pub fn generate_synthetic(cfg: &GenConfig, seed: u64) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let stream = |k: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k);
        Generator { cfg, rng }
    };
    let provenance = |part: &str| format!("synthetic {part} seed={seed}");
    let mut g = stream(0);
    let train = (0..cfg.documents)
        .map(|i| g.annotated_document(format!("train-{i:05}")))
        .collect::<Result<_>>()?;
    let mut g = stream(1);
    let negatives = (0..cfg.negative_documents)
        .map(|i| g.negative_document(format!("neg-{i:05}")))
        .collect::<Result<_>>()?;
    let mut g = stream(2);
    let test = (0..cfg.test_documents)
        .map(|i| g.annotated_document(format!("test-{i:05}")))
        .collect::<Result<_>>()?;
    Ok(SyntheticCorpus {
        train: Corpus::new(train, provenance("train"))?,
        negatives: Corpus::new(negatives, provenance("negatives"))?,
        test: Corpus::new(test, provenance("test"))?,
    })
}
