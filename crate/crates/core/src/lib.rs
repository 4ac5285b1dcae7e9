//! Hierarchical multi-task event tagger.
//!
//! Token-level BIO tagging is the main task; sentence and document binary
//! classification are auxiliary tasks sharing one encoder.

pub mod corpus;
pub mod experiments;
pub mod model;
mod error;
pub mod scoring;
pub mod training;

pub use error::{Error, Result};
