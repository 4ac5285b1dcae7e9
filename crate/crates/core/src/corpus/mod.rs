//! Documents, labels and the data pipeline feeding the model.

mod batch;
mod document;
mod labels;
mod negatives;
mod regime;
pub mod sample;
mod synthetic;
mod vocab;

pub use batch::{batch_document, BatchConfig, BatchedDocument, DEFAULT_MAX_SENTENCES, DEFAULT_MAX_TOKENS};
pub use document::{Corpus, Document, Sentence, Token};
pub use labels::{EventType, Label, LabelScheme, Tag, EVENT_TYPES, NUM_LABELS, NUM_TYPES};
pub use negatives::{mix_negatives, sample_negatives};
pub use regime::{regime_order, slice_regime, ten_step_schedule, RegimeSlice, TINY_SCHEDULE};
pub use synthetic::{generate_synthetic, GenConfig, SyntheticCorpus};
pub use vocab::{VocabConfig, OOV_ID, PAD_ID};
