//! Chunk-level evaluation and run aggregation.

mod chunks;
mod metrics;

pub use chunks::{extract_chunks, extract_chunks_in, Chunk};
pub use metrics::{aggregate_runs, binary_metrics, chunk_f1, AggregateResult, BinaryMetrics, Counts, ScoreReport};
