use std::collections::VecDeque;
use std::sync::Arc;

use super::FeatureMap;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Capacities of the two stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryParams {
    /// Most recent entries kept in short-term memory.
    pub stm_cap: usize,
    /// Frames with `index % ltm_stride == 0` enter long-term memory.
    pub ltm_stride: usize,
    /// Long-term capacity; oldest unpinned entries are evicted first.
    pub ltm_cap: usize,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self {
            stm_cap: 5,
            ltm_stride: 5,
            ltm_cap: 64,
        }
    }
}

impl MemoryParams {
    pub fn validate(&self) -> Result<()> {
        if self.stm_cap == 0 || self.ltm_stride == 0 || self.ltm_cap == 0 {
            return Err(Error::InvalidConfig(format!(
                "memory capacities and stride must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Per-cell class distributions on a patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueMap<T> {
    pub grid_w: usize,
    pub grid_h: usize,
    pub classes: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> ValueMap<T> {
    pub fn new(grid_w: usize, grid_h: usize, classes: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != grid_w * grid_h * classes || classes == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{grid_w}x{grid_h} value map with {classes} classes needs {} values, got {}",
                grid_w * grid_h * classes,
                data.len()
            )));
        }
        Ok(Self {
            grid_w,
            grid_h,
            classes,
            data,
        })
    }

    /// One-hot distributions from per-cell class labels.
    pub fn one_hot(grid_w: usize, grid_h: usize, classes: usize, labels: &[u16]) -> Result<Self> {
        if labels.len() != grid_w * grid_h {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {grid_w}x{grid_h} grid",
                labels.len()
            )));
        }
        let mut data = vec![T::zero(); labels.len() * classes];
        for (i, &c) in labels.iter().enumerate() {
            if c as usize >= classes {
                return Err(Error::InvalidConfig(format!(
                    "label {c} outside {classes} classes"
                )));
            }
            data[i * classes + c as usize] = T::one();
        }
        Self::new(grid_w, grid_h, classes, data)
    }

    #[inline]
    pub fn vector(&self, loc: usize) -> &[T] {
        &self.data[loc * self.classes..(loc + 1) * self.classes]
    }
}

/// A key feature map with its value distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry<T> {
    pub key: FeatureMap<T>,
    pub value: ValueMap<T>,
}

impl<T: Scalar> MemoryEntry<T> {
    pub fn new(key: FeatureMap<T>, value: ValueMap<T>) -> Result<Self> {
        if (key.grid_w, key.grid_h) != (value.grid_w, value.grid_h) {
            return Err(Error::DimensionMismatch(format!(
                "key grid {}x{} vs value grid {}x{}",
                key.grid_w, key.grid_h, value.grid_w, value.grid_h
            )));
        }
        Ok(Self { key, value })
    }

    pub fn frame(&self) -> usize {
        self.key.frame
    }
}

#[derive(Debug, Clone)]
struct LtmSlot<T> {
    entry: Arc<MemoryEntry<T>>,
    pinned: bool,
}

/// Grid, feature and class sizes every entry must share.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub grid_w: usize,
    pub grid_h: usize,
    pub dim: usize,
    pub classes: usize,
}

/// Short-term ring plus selectively filled long-term list. Both stores stay
/// sorted by frame index; seeded entries are pinned in long-term memory.
#[derive(Debug, Clone)]
pub struct MemoryBank<T> {
    params: MemoryParams,
    stm: VecDeque<Arc<MemoryEntry<T>>>,
    ltm: Vec<LtmSlot<T>>,
    layout: Option<Layout>,
}

impl<T: Scalar> MemoryBank<T> {
    pub fn new(params: MemoryParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            stm: VecDeque::new(),
            ltm: Vec::new(),
            layout: None,
        })
    }

    pub fn params(&self) -> MemoryParams {
        self.params
    }

    pub fn stm_len(&self) -> usize {
        self.stm.len()
    }

    pub fn ltm_len(&self) -> usize {
        self.ltm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stm.is_empty() && self.ltm.is_empty()
    }

    pub fn stm_frames(&self) -> Vec<usize> {
        self.stm.iter().map(|e| e.frame()).collect()
    }

    pub fn ltm_frames(&self) -> Vec<usize> {
        self.ltm.iter().map(|s| s.entry.frame()).collect()
    }

    pub(crate) fn layout(&self) -> Option<Layout> {
        self.layout
    }

    fn check_layout(&mut self, entry: &MemoryEntry<T>) -> Result<()> {
        let got = Layout {
            grid_w: entry.key.grid_w,
            grid_h: entry.key.grid_h,
            dim: entry.key.dim,
            classes: entry.value.classes,
        };
        match self.layout {
            None => {
                self.layout = Some(got);
                Ok(())
            }
            Some(l) if l == got => Ok(()),
            Some(l) => Err(Error::DimensionMismatch(format!(
                "memory holds {l:?}, entry has {got:?}"
            ))),
        }
    }

    fn stm_put(&mut self, entry: Arc<MemoryEntry<T>>) {
        let frame = entry.frame();
        match self.stm.binary_search_by_key(&frame, |e| e.frame()) {
            Ok(i) => self.stm[i] = entry,
            Err(i) => self.stm.insert(i, entry),
        }
        while self.stm.len() > self.params.stm_cap {
            self.stm.pop_front();
        }
    }

    fn ltm_put(&mut self, entry: Arc<MemoryEntry<T>>, pinned: bool) {
        let frame = entry.frame();
        match self.ltm.binary_search_by_key(&frame, |s| s.entry.frame()) {
            Ok(i) => {
                let slot = &mut self.ltm[i];
                slot.entry = entry;
                slot.pinned |= pinned;
            }
            Err(i) => self.ltm.insert(i, LtmSlot { entry, pinned }),
        }
        while self.ltm.len() > self.params.ltm_cap {
            match self.ltm.iter().position(|s| !s.pinned) {
                Some(i) => {
                    self.ltm.remove(i);
                }
                // only pins left; they are never evicted
                None => break,
            }
        }
    }

    /// Pins an annotated entry in long-term memory without touching the
    /// short-term ring.
    pub fn pin(&mut self, entry: MemoryEntry<T>) -> Result<()> {
        self.check_layout(&entry)?;
        self.ltm_put(Arc::new(entry), true);
        Ok(())
    }

    /// Adds an annotated entry to both stores, ignoring the stride. A second
    /// seed for the same frame replaces the first.
    pub fn seed(&mut self, entry: MemoryEntry<T>) -> Result<()> {
        self.check_layout(&entry)?;
        let entry = Arc::new(entry);
        self.stm_put(entry.clone());
        self.ltm_put(entry, true);
        Ok(())
    }

    /// Adds a propagated entry: always to the short-term ring, and to
    /// long-term memory when its frame index falls on the stride.
    pub fn insert(&mut self, entry: MemoryEntry<T>) -> Result<()> {
        self.check_layout(&entry)?;
        let frame = entry.frame();
        let entry = Arc::new(entry);
        if frame.is_multiple_of(self.params.ltm_stride) {
            self.ltm_put(entry.clone(), false);
        }
        self.stm_put(entry);
        Ok(())
    }

    /// Union of both stores, one entry per frame index, ascending.
    pub fn slots(&self) -> Vec<&MemoryEntry<T>> {
        let mut out: Vec<&MemoryEntry<T>> = Vec::with_capacity(self.stm.len() + self.ltm.len());
        let (mut i, mut j) = (0, 0);
        while i < self.stm.len() || j < self.ltm.len() {
            let a = self.stm.get(i).map(|e| e.frame());
            let b = self.ltm.get(j).map(|s| s.entry.frame());
            match (a, b) {
                (Some(fa), Some(fb)) if fa == fb => {
                    out.push(&self.stm[i]);
                    i += 1;
                    j += 1;
                }
                (Some(fa), Some(fb)) if fa < fb => {
                    out.push(&self.stm[i]);
                    i += 1;
                }
                (Some(_), None) => {
                    out.push(&self.stm[i]);
                    i += 1;
                }
                _ => {
                    out.push(&self.ltm[j].entry);
                    j += 1;
                }
            }
        }
        out
    }
}
