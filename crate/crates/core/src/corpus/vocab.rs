use serde::{Deserialize, Serialize};

use super::document::Document;
use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const OOV_ID: u32 = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Hashed word vocabulary: ids `0` (padding) and `1` (unknown) are reserved,
/// every other word lands in `[2, size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabConfig {
    pub size: usize,
    pub seed: u64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            size: 8192,
            seed: 0,
        }
    }
}

impl VocabConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 3 || self.size > u32::MAX as usize {
            return Err(Error::Config(format!("vocabulary size {} out of range", self.size)));
        }
        Ok(())
    }

    pub fn token_id(&self, text: &str) -> u32 {
        if text.is_empty() {
            return OOV_ID;
        }
        let mut h = FNV_OFFSET;
        let mut feed = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        };
        self.seed.to_le_bytes().into_iter().for_each(&mut feed);
        text.to_lowercase().bytes().for_each(&mut feed);
        2 + (h % (self.size as u64 - 2)) as u32
    }

    /// One id sequence per sentence.
    pub fn tokenize_and_index(&self, doc: &Document) -> Vec<Vec<u32>> {
        doc.sentences
            .iter()
            .map(|s| s.tokens.iter().map(|t| self.token_id(&t.text)).collect())
            .collect()
    }
}
