use super::bank::MemoryBank;
use super::FeatureMap;
use crate::error::{Error, Result};
use crate::raster::{MaskMap, ProbMap};
use crate::scalar::{softmax_in_place, Scalar};
use crate::segmenter::linalg::dot;
use crate::segmenter::{upsample_to_maps, PatchSequence};

/// Result of reading memory for every query cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRead<T> {
    pub grid_w: usize,
    pub grid_h: usize,
    pub slots: usize,
    pub classes: usize,
    /// `locations x slots` scaled dot-product similarities.
    pub scores: Vec<T>,
    /// `locations x slots` softmax weights.
    pub weights: Vec<T>,
    /// `locations x classes` convex combinations of slot values.
    pub read: Vec<T>,
}

impl<T: Scalar> AttentionRead<T> {
    pub fn locations(&self) -> usize {
        self.grid_w * self.grid_h
    }

    pub fn weights_at(&self, loc: usize) -> &[T] {
        &self.weights[loc * self.slots..(loc + 1) * self.slots]
    }

    pub fn read_at(&self, loc: usize) -> &[T] {
        &self.read[loc * self.classes..(loc + 1) * self.classes]
    }
}

/// Output of [`softmax_read`]: `(scores, weights, read)`, row-major per query.
pub type ReadParts<T> = (Vec<T>, Vec<T>, Vec<T>);

/// Scaled dot-product attention of `queries` (`n x dim`) over `keys`
/// (`slots x dim`) returning weighted sums of `values` (`slots x classes`).
pub fn softmax_read<T: Scalar>(
    queries: &[T],
    keys: &[T],
    values: &[T],
    dim: usize,
    classes: usize,
) -> Result<ReadParts<T>> {
    if dim == 0
        || classes == 0
        || !queries.len().is_multiple_of(dim)
        || !keys.len().is_multiple_of(dim)
    {
        return Err(Error::DimensionMismatch(format!(
            "queries {} / keys {} not multiples of dim {dim}",
            queries.len(),
            keys.len()
        )));
    }
    let slots = keys.len() / dim;
    if slots == 0 {
        return Err(Error::Empty("memory has no slots"));
    }
    if values.len() != slots * classes {
        return Err(Error::DimensionMismatch(format!(
            "{} value entries for {slots} slots of {classes} classes",
            values.len()
        )));
    }
    let n = queries.len() / dim;
    let scale = T::one() / T::from_usize_lossy(dim).sqrt();
    let mut scores = Vec::with_capacity(n * slots);
    for q in queries.chunks_exact(dim) {
        scores.extend(keys.chunks_exact(dim).map(|k| dot(q, k) * scale));
    }
    let mut weights = scores.clone();
    let mut read = vec![T::zero(); n * classes];
    for (row, out) in weights
        .chunks_exact_mut(slots)
        .zip(read.chunks_exact_mut(classes))
    {
        if !softmax_in_place(row) {
            return Err(Error::NonFinite("memory similarity"));
        }
        for (&a, v) in row.iter().zip(values.chunks_exact(classes)) {
            for (o, &vv) in out.iter_mut().zip(v) {
                *o += a * vv;
            }
        }
    }
    Ok((scores, weights, read))
}

/// Reads memory at every cell of `query`. Slots are all (entry, cell)
/// pairs over short- and long-term memory, one entry per frame index.
pub fn attention_read<T: Scalar>(
    query: &FeatureMap<T>,
    bank: &MemoryBank<T>,
) -> Result<AttentionRead<T>> {
    let layout = bank.layout().ok_or(Error::Empty("memory bank is empty"))?;
    if (query.grid_w, query.grid_h, query.dim) != (layout.grid_w, layout.grid_h, layout.dim) {
        return Err(Error::DimensionMismatch(format!(
            "query {}x{}x{} vs memory {}x{}x{}",
            query.grid_w, query.grid_h, query.dim, layout.grid_w, layout.grid_h, layout.dim
        )));
    }
    let entries = bank.slots();
    if entries.is_empty() {
        return Err(Error::Empty("memory bank is empty"));
    }
    let mut keys = Vec::with_capacity(entries.len() * query.data.len());
    let mut values = Vec::with_capacity(entries.len() * query.locations() * layout.classes);
    for e in &entries {
        keys.extend_from_slice(&e.key.data);
        values.extend_from_slice(&e.value.data);
    }
    let (scores, weights, read) =
        softmax_read(&query.data, &keys, &values, query.dim, layout.classes)?;
    Ok(AttentionRead {
        grid_w: query.grid_w,
        grid_h: query.grid_h,
        slots: entries.len() * query.locations(),
        classes: layout.classes,
        scores,
        weights,
        read,
    })
}

/// Turns per-cell read distributions into full-resolution maps.
pub fn decode_read<T: Scalar>(
    read: &AttentionRead<T>,
    width: usize,
    height: usize,
    patch: usize,
) -> Result<(ProbMap<T>, MaskMap)> {
    let seq = PatchSequence::new(read.grid_w, read.grid_h, read.classes, read.read.clone())?;
    upsample_to_maps(&seq, width, height, patch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{MemoryEntry, MemoryParams, ValueMap};

    fn bank_with(entries: Vec<MemoryEntry<f64>>) -> MemoryBank<f64> {
        let mut b = MemoryBank::new(MemoryParams::default()).unwrap();
        for e in entries {
            b.seed(e).unwrap();
        }
        b
    }

    #[test]
    fn single_slot_returns_its_value() {
        let key = FeatureMap::new(1, 1, 4, vec![0.3, -2.0, 1.0, 5.0], 0).unwrap();
        let value = ValueMap::new(1, 1, 3, vec![0.2, 0.5, 0.3]).unwrap();
        let b = bank_with(vec![MemoryEntry::new(key, value).unwrap()]);
        let q = FeatureMap::new(1, 1, 4, vec![9.0, 1.0, -1.0, 0.0], 1).unwrap();
        let r = attention_read(&q, &b).unwrap();
        assert_eq!(r.weights, vec![1.0]);
        assert_eq!(r.read, vec![0.2, 0.5, 0.3]);
    }

    #[test]
    fn identical_keys_average_values() {
        let keys = vec![1.0, 2.0, 1.0, 2.0];
        let values = vec![1.0, 0.0, 0.25, 0.75];
        let (_, w, r) = softmax_read(&[0.5, -1.0], &keys, &values, 2, 2).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        assert_eq!(r, vec![0.625, 0.375]);
    }

    #[test]
    fn two_slot_weights() {
        // scores d = 1 and 0 after the 1/sqrt(dim) scale
        let (s, w, _) = softmax_read(&[1.0], &[1.0, 0.0], &[1.0, 0.0], 1, 1).unwrap();
        assert_eq!(s, vec![1.0, 0.0]);
        let e = 1f64.exp();
        assert!((w[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((w[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((w[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn empty_and_mismatched_banks() {
        let b = MemoryBank::<f64>::new(MemoryParams::default()).unwrap();
        let q = FeatureMap::new(1, 1, 2, vec![0.0, 0.0], 0).unwrap();
        assert!(matches!(attention_read(&q, &b), Err(Error::Empty(_))));
        let key = FeatureMap::new(2, 1, 2, vec![0.0; 4], 0).unwrap();
        let value = ValueMap::one_hot(2, 1, 2, &[0, 1]).unwrap();
        let b = bank_with(vec![MemoryEntry::new(key, value).unwrap()]);
        assert!(matches!(
            attention_read(&q, &b),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn decode_read_examples() {
        let key = FeatureMap::new(2, 1, 2, vec![1.0, 0.0, 0.0, 1.0], 0).unwrap();
        let value = ValueMap::one_hot(2, 1, 3, &[2, 1]).unwrap();
        let b = bank_with(vec![MemoryEntry::new(key.clone(), value).unwrap()]);
        let mut r = attention_read(&key, &b).unwrap();
        // one-hot reads give block-constant masks
        r.read = vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let (p, m) = decode_read(&r, 7, 3, 4).unwrap();
        for y in 0..3 {
            for x in 0..7 {
                assert_eq!(m.get(x, y), if x < 4 { 2 } else { 1 });
            }
        }
        for px in p.data().chunks(3) {
            assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        // uniform reads fall back to class 0
        r.read = vec![1.0 / 3.0; 6];
        let (_, m) = decode_read(&r, 8, 4, 4).unwrap();
        assert!(m.data().iter().all(|&c| c == 0));
    }
}
