//! Multi-task losses, AdamW and the training loop.

mod gradcheck;
mod history;
mod loss;
mod optim;
mod trainer;

pub use gradcheck::{check_model_gradients, FiniteDifference, ParamCheck};
pub use history::{history_csv, write_history_csv, EpochRecord, HISTORY_HEADER};
pub use loss::{compute_losses, document_gradients, loss_values, LossSpec, LossValues, LossVars, Variation};
pub use optim::{clip_gradients, optimizer_step, AdamConfig, OptimizerState};
pub use trainer::{batch_corpus, evaluate, score_corpus, split_dev, train, TrainConfig, TrainOutcome};
