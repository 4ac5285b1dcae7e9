use serde::{Deserialize, Serialize};

use crate::corpus::{BatchConfig, VocabConfig, DEFAULT_MAX_SENTENCES, DEFAULT_MAX_TOKENS, NUM_LABELS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab: VocabConfig,
    pub max_tokens: usize,
    pub max_sentences: usize,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub encoder_width: usize,
    pub encoder_ff_width: usize,
    pub max_positions: usize,
    pub gru_hidden: usize,
    pub token_mlp_hidden: usize,
    pub sentence_mlp_hidden: usize,
    pub document_mlp_hidden: usize,
    pub num_labels: usize,
    pub layer_norm_eps: f64,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Laptop-sized defaults.
    pub fn desk() -> Self {
        Self {
            vocab: VocabConfig::default(),
            max_tokens: DEFAULT_MAX_TOKENS,
            max_sentences: DEFAULT_MAX_SENTENCES,
            encoder_layers: 2,
            encoder_heads: 4,
            encoder_width: 64,
            encoder_ff_width: 256,
            max_positions: DEFAULT_MAX_TOKENS,
            gru_hidden: 32,
            token_mlp_hidden: 256,
            sentence_mlp_hidden: 256,
            document_mlp_hidden: 128,
            num_labels: NUM_LABELS,
            layer_norm_eps: 1e-12,
            dropout: 0.0,
        }
    }

    /// Sizes of the original system: a BERT-base encoder, 512-wide GRUs and
    /// 4096/4096/2048-wide heads.
    pub fn full() -> Self {
        Self {
            vocab: VocabConfig {
                size: 30522,
                seed: 0,
            },
            encoder_layers: 12,
            encoder_heads: 12,
            encoder_width: 768,
            encoder_ff_width: 3072,
            gru_hidden: 512,
            token_mlp_hidden: 4096,
            sentence_mlp_hidden: 4096,
            document_mlp_hidden: 2048,
            ..Self::desk()
        }
    }

    /// Small enough for finite-difference checks and overfit runs.
    pub fn tiny() -> Self {
        Self {
            vocab: VocabConfig { size: 2048, seed: 0 },
            encoder_layers: 1,
            encoder_heads: 2,
            encoder_width: 16,
            encoder_ff_width: 32,
            gru_hidden: 8,
            token_mlp_hidden: 32,
            sentence_mlp_hidden: 32,
            document_mlp_hidden: 16,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "tiny" => Some(Self::tiny()),
            "full" => Some(Self::full()),
            _ => None,
        }
    }

    pub fn batch(&self) -> BatchConfig {
        BatchConfig {
            max_tokens: self.max_tokens,
            max_sentences: self.max_sentences,
        }
    }

    pub fn token_width(&self) -> usize {
        2 * self.gru_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.vocab.validate()?;
        let positive = [
            ("max_tokens", self.max_tokens),
            ("max_sentences", self.max_sentences),
            ("encoder_layers", self.encoder_layers),
            ("encoder_heads", self.encoder_heads),
            ("encoder_width", self.encoder_width),
            ("encoder_ff_width", self.encoder_ff_width),
            ("gru_hidden", self.gru_hidden),
            ("token_mlp_hidden", self.token_mlp_hidden),
            ("sentence_mlp_hidden", self.sentence_mlp_hidden),
            ("document_mlp_hidden", self.document_mlp_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be positive"));
        }
        if !self.encoder_width.is_multiple_of(self.encoder_heads) {
            return bad(format!(
                "encoder width {} not divisible by {} heads",
                self.encoder_width, self.encoder_heads
            ));
        }
        if self.max_positions < self.max_tokens {
            return bad(format!(
                "max_positions {} below max_tokens {}",
                self.max_positions, self.max_tokens
            ));
        }
        if self.num_labels != NUM_LABELS {
            return bad(format!("label count must be {NUM_LABELS}"));
        }
        if !(self.layer_norm_eps > 0.0 && self.layer_norm_eps.is_finite()) {
            return bad("layer_norm_eps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}
