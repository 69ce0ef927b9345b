use std::collections::BTreeMap;
use std::time::Instant;

use super::bank::{MemoryBank, MemoryEntry, MemoryParams, ValueMap};
use super::read::{attention_read, decode_read};
use super::FeatureMap;
use crate::error::{Error, Result};
use crate::raster::{Frame, MaskMap};
use crate::scalar::Scalar;
use crate::segmenter::{frame_features, patch_targets, SegmenterWeights};

/// Encoder features of `frame`, tagged with its sequence index.
pub fn extract_features<T: Scalar>(
    frame: &Frame,
    weights: &SegmenterWeights<T>,
    index: usize,
) -> Result<FeatureMap<T>> {
    FeatureMap::from_sequence(frame_features(frame, weights)?, index)
}

/// An annotated frame. `features` may carry encoder output that was already
/// computed for this frame so it is not recomputed.
#[derive(Debug, Clone)]
pub struct SeedInput<T> {
    pub index: usize,
    pub mask: MaskMap,
    pub features: Option<FeatureMap<T>>,
}

impl<T> SeedInput<T> {
    pub fn new(index: usize, mask: MaskMap) -> Self {
        Self {
            index,
            mask,
            features: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Propagation {
    /// One mask per input frame.
    pub masks: Vec<MaskMap>,
    /// Wall time spent on each frame, in milliseconds. Seeded frames only
    /// count the memory update.
    pub frame_ms: Vec<f64>,
    /// Largest short-term ring size seen during the run.
    pub peak_stm: usize,
}

/// [`propagate_with`] for plain `index -> mask` seeds.
pub fn propagate<T: Scalar>(
    frames: &[Frame],
    seeds: &BTreeMap<usize, MaskMap>,
    weights: &SegmenterWeights<T>,
    params: MemoryParams,
) -> Result<Propagation> {
    let seeds = seeds
        .iter()
        .map(|(&i, m)| SeedInput::new(i, m.clone()))
        .collect();
    propagate_with(frames, seeds, weights, params)
}

fn seed_entry<T: Scalar>(
    frame: &Frame,
    seed: SeedInput<T>,
    weights: &SegmenterWeights<T>,
) -> Result<(MemoryEntry<T>, MaskMap)> {
    if (seed.mask.width(), seed.mask.height()) != (frame.width(), frame.height()) {
        return Err(Error::DimensionMismatch(format!(
            "seed mask for frame {} is {}x{}, frame is {}x{}",
            seed.index,
            seed.mask.width(),
            seed.mask.height(),
            frame.width(),
            frame.height()
        )));
    }
    let classes = weights.config.outputs();
    seed.mask.check_classes((classes - 1) as u16)?;
    let key = match seed.features {
        Some(mut f) => {
            f.frame = seed.index;
            f
        }
        None => extract_features(frame, weights, seed.index)?,
    };
    let labels = patch_targets(
        &seed.mask,
        weights.config.patch_size,
        key.grid_w,
        key.grid_h,
    );
    let value = ValueMap::one_hot(key.grid_w, key.grid_h, classes, &labels)?;
    Ok((MemoryEntry::new(key, value)?, seed.mask))
}

/// Carries seed masks through `frames` in order. Seeded frames output their
/// seed unchanged; every other frame is labelled by reading memory with its
/// own features, and the read is written back as that frame's value.
pub fn propagate_with<T: Scalar>(
    frames: &[Frame],
    seeds: Vec<SeedInput<T>>,
    weights: &SegmenterWeights<T>,
    params: MemoryParams,
) -> Result<Propagation> {
    params.validate()?;
    let first = frames
        .first()
        .ok_or(Error::Empty("no frames to propagate"))?;
    let (w, h) = (first.width(), first.height());
    if let Some((i, f)) = frames
        .iter()
        .enumerate()
        .find(|(_, f)| (f.width(), f.height()) != (w, h))
    {
        return Err(Error::DimensionMismatch(format!(
            "frame {i} is {}x{}, frame 0 is {w}x{h}",
            f.width(),
            f.height()
        )));
    }
    if seeds.is_empty() {
        return Err(Error::Empty("no seed masks"));
    }
    let mut pending = BTreeMap::new();
    for s in seeds {
        if s.index >= frames.len() {
            return Err(Error::InvalidConfig(format!(
                "seed index {} outside {} frames",
                s.index,
                frames.len()
            )));
        }
        let index = s.index;
        pending.insert(index, seed_entry(&frames[index], s, weights)?);
    }

    let mut bank = MemoryBank::new(params)?;
    for (entry, _) in pending.values() {
        bank.pin(entry.clone())?;
    }

    let patch = weights.config.patch_size;
    let mut masks = Vec::with_capacity(frames.len());
    let mut frame_ms = Vec::with_capacity(frames.len());
    let mut peak_stm = 0;
    for (t, frame) in frames.iter().enumerate() {
        let start = Instant::now();
        if let Some((entry, mask)) = pending.remove(&t) {
            bank.seed(entry)?;
            masks.push(mask);
        } else {
            let key = extract_features(frame, weights, t)?;
            let read = attention_read(&key, &bank)?;
            let (_, mask) = decode_read(&read, w, h, patch)?;
            let value = ValueMap::new(read.grid_w, read.grid_h, read.classes, read.read)?;
            bank.insert(MemoryEntry::new(key, value)?)?;
            masks.push(mask);
        }
        assert!(
            bank.stm_len() <= params.stm_cap,
            "short-term memory over capacity"
        );
        peak_stm = peak_stm.max(bank.stm_len());
        frame_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(Propagation {
        masks,
        frame_ms,
        peak_stm,
    })
}
