//! The trainable questioner: a scene-grounded recurrent dialogue state shared
//! by a question generator and a dot-product guesser.

mod checkpoint;
mod gradcheck;
mod network;
mod params;
pub mod tensor;
mod train;

/// Length of an object's symbolic feature vector.
pub const FEATURE_DIM: usize = 25;

pub use checkpoint::Checkpoint;
pub use gradcheck::{gradient_check, GradCheckReport, FD_STEP};
pub use network::{
    batch_loss, decode_question, encode_turn, guess, guesser_scores, initial_state, loss_and_grads,
    object_features, scene_features, BatchLoss, DialogueState, Example, Phase,
};
pub use params::{init_params, DecodeMode, ModelConfig, ModelParams, TENSOR_NAMES};
pub use train::{phase_for_epoch, train, train_with_validation, EpochLog, TrainLog, TrainOutcome};
