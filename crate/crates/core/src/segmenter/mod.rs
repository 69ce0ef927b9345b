//! Transformer patch segmenter: linear patch embedding with learned
//! positions, pre-norm encoder blocks, a linear softmax head, and a
//! momentum-SGD trainer with hand-written backprop.

mod config;
mod forward;
mod io;
pub mod linalg;
mod train;
mod weights;

pub use config::SegmenterConfig;
pub use forward::{
    decode, embed, encode, frame_features, head_logits, partition, segment, segment_with_features,
    upsample_to_maps, PatchSequence, Segmentation,
};
pub use io::{decode_weights, encode_weights, load_weights, load_weights_for, save_weights, MAGIC};
pub use train::{
    loss, loss_and_grad, lr_schedule, patch_targets, sgd_update, train_step, train_step_example,
    TrainState, TrainingExample, DEFAULT_BASE_LR, DEFAULT_MOMENTUM, DEFAULT_WEIGHT_DECAY, LR_POWER,
};
pub use weights::{init_weights, LayerWeights, PositionalTable, SegmenterWeights};
