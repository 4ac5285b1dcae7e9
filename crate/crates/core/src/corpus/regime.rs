use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::document::Corpus;
use crate::error::{contract, Result};

/// Kept-document counts for the small-data schedule.
pub const TINY_SCHEDULE: [usize; 5] = [20, 10, 5, 3, 1];

/// Ten steps from the full corpus down to a tenth: `floor(n·k/10)`.
pub fn ten_step_schedule(n: usize) -> Vec<usize> {
    (1..=10).rev().map(|k| n * k / 10).collect()
}

#[derive(Debug, Clone)]
pub struct RegimeSlice {
    pub kept: Corpus,
    pub discarded: Corpus,
}

/// Seeded permutation of document indices shared by every slice of a run.
pub fn regime_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Keeps a prefix of one seeded permutation per scheduled count, so smaller
/// kept sets are contained in larger ones.
pub fn slice_regime(corpus: &Corpus, schedule: &[usize], seed: u64) -> Result<Vec<RegimeSlice>> {
    let n = corpus.len();
    if let Some(&bad) = schedule.iter().find(|&&k| k > n) {
        return contract(format!("cannot keep {bad} of {n} documents"));
    }
    let order = regime_order(n, seed);
    Ok(schedule
        .iter()
        .map(|&k| RegimeSlice {
            kept: corpus.select(&order[..k], format!("{} kept {k}", corpus.provenance)),
            discarded: corpus.select(&order[k..], format!("{} discarded {}", corpus.provenance, n - k)),
        })
        .collect())
}
