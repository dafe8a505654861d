//! Conformer frame classifier: autograd, network, training and inference.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod infer;
pub mod net;
pub mod train;

pub use checkpoint::{blob_path, Checkpoint, NamedTensor, TrainingMeta, CHECKPOINT_FORMAT};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use graph::{Graph, ParamSet, Var};
pub use infer::{emissions_from_features, predict_emissions};
pub use net::{
    positional_encoding, ChordModel, ConformerBlock, ConvModule, Dropout, FeedForward, FrontModule, HeadVars,
    Heads, LayerNorm, Linear, ModelConfig, ModelOutput, SelfAttention, N_PITCH, N_ROOT,
};
pub use train::{evaluate_loss, frame_accuracy, train, train_with_progress, EpochStats, TrainConfig, TrainExample};
