//! Short/long-term key-value memory and the propagation loop that carries
//! seed masks through a whole frame sequence.
//!
//! Keys are encoder features of a frame (one vector per patch-grid cell);
//! values are per-cell class distributions. A read attends from every query
//! cell to every (entry, cell) slot in memory.

mod bank;
mod propagate;
mod read;

pub use bank::{MemoryBank, MemoryEntry, MemoryParams, ValueMap};
pub use propagate::{extract_features, propagate, propagate_with, Propagation, SeedInput};
pub use read::{attention_read, decode_read, softmax_read, AttentionRead};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::segmenter::PatchSequence;

/// Encoder features of one frame on its patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub grid_w: usize,
    pub grid_h: usize,
    pub dim: usize,
    pub data: Vec<T>,
    pub frame: usize,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(
        grid_w: usize,
        grid_h: usize,
        dim: usize,
        data: Vec<T>,
        frame: usize,
    ) -> Result<Self> {
        if grid_w == 0 || grid_h == 0 || dim == 0 {
            return Err(Error::InvalidDimensions(format!(
                "{grid_w}x{grid_h} feature map of dim {dim}"
            )));
        }
        if data.len() != grid_w * grid_h * dim {
            return Err(Error::DimensionMismatch(format!(
                "{grid_w}x{grid_h}x{dim} feature map needs {} values, got {}",
                grid_w * grid_h * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(Self {
            grid_w,
            grid_h,
            dim,
            data,
            frame,
        })
    }

    pub fn from_sequence(seq: PatchSequence<T>, frame: usize) -> Result<Self> {
        Self::new(seq.grid_w, seq.grid_h, seq.dim, seq.data, frame)
    }

    pub fn locations(&self) -> usize {
        self.grid_w * self.grid_h
    }

    #[inline]
    pub fn vector(&self, loc: usize) -> &[T] {
        &self.data[loc * self.dim..(loc + 1) * self.dim]
    }
}
