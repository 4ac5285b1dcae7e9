#![allow(dead_code)]

use hiertag_core::corpus::{BatchedDocument, Label, VocabConfig, NUM_LABELS};
use hiertag_core::model::ModelConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The `i`-th small configuration for finite-difference checks: up to two
/// encoder layers, widths up to 32, a 64-word vocabulary.
pub fn fd_config(i: usize) -> ModelConfig {
    let widths = [8, 16, 24, 32];
    let width = widths[i % widths.len()];
    let heads = if width % 4 == 0 && i % 3 == 0 { 4 } else { 2 };
    let max_tokens = 8;
    ModelConfig {
        vocab: VocabConfig { size: 64, seed: i as u64 },
        max_tokens,
        max_sentences: 3,
        encoder_layers: 1 + i % 2,
        encoder_heads: heads,
        encoder_width: width,
        encoder_ff_width: [8, 16, 32][i % 3],
        max_positions: max_tokens,
        gru_hidden: [4, 6, 8, 12][(i / 2) % 4],
        token_mlp_hidden: [8, 16, 32][(i + 1) % 3],
        sentence_mlp_hidden: [8, 12, 16][i % 3],
        document_mlp_hidden: [4, 8, 16][(i + 2) % 3],
        layer_norm_eps: 1e-12,
        ..ModelConfig::tiny()
    }
}

/// A random document with every target present: `sentences` rows, each with
/// between one and `max_tokens` real tokens.
pub fn random_batch(rng: &mut ChaCha8Rng, cfg: &ModelConfig, sentences: usize) -> BatchedDocument {
    let n = cfg.max_tokens;
    let mut doc = BatchedDocument {
        id: "fd".into(),
        max_tokens: n,
        token_ids: vec![0; sentences * n],
        token_labels: vec![None; sentences * n],
        token_mask: vec![false; sentences * n],
        sentence_labels: (0..sentences).map(|_| Some(rng.random_bool(0.5))).collect(),
        sentence_mask: vec![true; sentences],
        document_label: Some(rng.random_bool(0.5)),
    };
    for s in 0..sentences {
        let len = rng.random_range(1..=n);
        for t in 0..len {
            doc.token_ids[s * n + t] = rng.random_range(2..cfg.vocab.size as u32);
            doc.token_labels[s * n + t] = Label::from_id(rng.random_range(0..NUM_LABELS));
            doc.token_mask[s * n + t] = true;
        }
    }
    doc
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
