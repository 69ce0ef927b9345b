//! Video food segmentation.
//!
//! A small transformer segmenter labels a handful of seed frames; a
//! key-value memory with softmax attention then carries those masks through
//! every remaining frame. Near-duplicate frames are filtered with a DCT
//! perceptual hash before seeds are chosen, and a metric harness scores the
//! output per image, per scene and overall.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`, which is what the file formats store.

pub mod error;
pub mod keyframes;
pub mod memory;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod scalar;
pub mod segmenter;

pub use error::{Error, Result};
pub use keyframes::{dedup, hamming, phash, KeyframeSelection, PerceptualHash};
pub use raster::{Frame, MaskMap};
pub use scalar::Scalar;
pub use segmenter::SegmenterConfig;

pub type GrayRaster = raster::GrayRaster<f64>;
pub type ProbMap = raster::ProbMap<f64>;
pub type ProbMapF32 = raster::ProbMap<f32>;
pub type SegmenterWeights = segmenter::SegmenterWeights<f64>;
pub type SegmenterWeightsF32 = segmenter::SegmenterWeights<f32>;
pub type PatchSequence = segmenter::PatchSequence<f64>;
pub type TrainState = segmenter::TrainState<f64>;
pub type FeatureMap = memory::FeatureMap<f64>;
pub type MemoryBank = memory::MemoryBank<f64>;
pub type MemoryBankF32 = memory::MemoryBank<f32>;
pub type AttentionRead = memory::AttentionRead<f64>;
