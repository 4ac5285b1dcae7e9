//! The hierarchical network: encoder, token and sentence bi-GRUs, and
//! three prediction heads.

mod checkpoint;
mod config;
mod network;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::ModelConfig;
pub use network::{Bound, Dropout, ForwardTrace, ForwardVars, HierModel, Prediction, TokenLayout};
pub use params::{Param, ParamGroup, ParamStore};
