use std::borrow::Cow;

use super::linalg::{affine, dot, gelu, layer_norm, LnCache};
use super::weights::{LayerWeights, PositionalTable, SegmenterWeights};
use crate::error::{Error, Result};
use crate::raster::{argmax_lowest, pad_replicate, Frame, MaskMap, ProbMap};
use crate::scalar::{softmax_in_place, Scalar};

/// Row-major grid of equal-length vectors: raw patches, embeddings, encoder
/// states, or per-patch class distributions depending on the stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence<T> {
    pub grid_w: usize,
    pub grid_h: usize,
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> PatchSequence<T> {
    pub fn new(grid_w: usize, grid_h: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != grid_w * grid_h * dim {
            return Err(Error::DimensionMismatch(format!(
                "{grid_w}x{grid_h} grid of {dim}-vectors needs {} values, got {}",
                grid_w * grid_h * dim,
                data.len()
            )));
        }
        Ok(Self {
            grid_w,
            grid_h,
            dim,
            data,
        })
    }

    /// Number of patches.
    pub fn len(&self) -> usize {
        self.grid_w * self.grid_h
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn vector(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Splits a frame whose sides are multiples of `patch` into flattened
/// `patch x patch x 3` blocks scaled to `[0, 1]`.
pub fn partition<T: Scalar>(frame: &Frame, patch: usize) -> Result<PatchSequence<T>> {
    if patch == 0 || !frame.width().is_multiple_of(patch) || !frame.height().is_multiple_of(patch) {
        return Err(Error::InvalidDimensions(format!(
            "{}x{} frame is not divisible into {patch}-pixel patches",
            frame.width(),
            frame.height()
        )));
    }
    let (gw, gh) = (frame.width() / patch, frame.height() / patch);
    let max = T::lit(255.0);
    let mut data = Vec::with_capacity(frame.data().len());
    for py in 0..gh {
        for px in 0..gw {
            for y in py * patch..(py + 1) * patch {
                for x in px * patch..(px + 1) * patch {
                    for c in frame.pixel(x, y) {
                        data.push(T::lit(f64::from(c)) / max);
                    }
                }
            }
        }
    }
    PatchSequence::new(gw, gh, patch * patch * 3, data)
}

/// Linear patch embedding plus the positional vector of each grid cell.
pub fn embed<T: Scalar>(
    patches: &PatchSequence<T>,
    weights: &SegmenterWeights<T>,
) -> Result<PatchSequence<T>> {
    embed_with(patches, weights, &weights.pos)
}

pub(crate) fn embed_with<T: Scalar>(
    patches: &PatchSequence<T>,
    weights: &SegmenterWeights<T>,
    pos: &PositionalTable<T>,
) -> Result<PatchSequence<T>> {
    if patches.dim != weights.patch_w.cols {
        return Err(Error::DimensionMismatch(format!(
            "patch length {} vs projection input {}",
            patches.dim, weights.patch_w.cols
        )));
    }
    if (patches.grid_w, patches.grid_h) != (pos.grid_w, pos.grid_h) {
        return Err(Error::DimensionMismatch(format!(
            "patch grid {}x{} vs positional grid {}x{}",
            patches.grid_w, patches.grid_h, pos.grid_w, pos.grid_h
        )));
    }
    let n = patches.len();
    let mut z = affine(&patches.data, n, &weights.patch_w, &weights.patch_b);
    for (zi, pi) in z.iter_mut().zip(&pos.table.data) {
        *zi += *pi;
    }
    PatchSequence::new(patches.grid_w, patches.grid_h, weights.patch_w.rows, z)
}

/// Intermediate values of one encoder block, kept for backprop.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache<T> {
    pub ln1: LnCache<T>,
    pub h1: Vec<T>,
    pub q: Vec<T>,
    pub k: Vec<T>,
    pub v: Vec<T>,
    /// `heads x n x n` attention probabilities.
    pub attn: Vec<T>,
    pub ctx: Vec<T>,
    pub ln2: LnCache<T>,
    pub h2: Vec<T>,
    pub u: Vec<T>,
    pub g: Vec<T>,
}

fn check_finite<T: Scalar>(v: &[T], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// One pre-norm block: `x += MHSA(LN(x)); x += MLP(LN(x))`.
fn encoder_block<T: Scalar>(
    x: Vec<T>,
    n: usize,
    layer: &LayerWeights<T>,
    heads: usize,
) -> Result<(Vec<T>, LayerCache<T>)> {
    let d = layer.ln1_scale.len();
    let dh = d / heads;
    let scale = T::one() / T::from_usize_lossy(dh).sqrt();

    let (h1, ln1) = layer_norm(&x, n, &layer.ln1_scale, &layer.ln1_shift);
    let q = affine(&h1, n, &layer.wq, &layer.bq);
    let k = affine(&h1, n, &layer.wk, &layer.bk);
    let v = affine(&h1, n, &layer.wv, &layer.bv);

    let mut attn = vec![T::zero(); heads * n * n];
    let mut ctx = vec![T::zero(); n * d];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..n {
            let qi = &q[i * d + off..i * d + off + dh];
            let row = &mut attn[(h * n + i) * n..(h * n + i + 1) * n];
            for (j, r) in row.iter_mut().enumerate() {
                *r = dot(qi, &k[j * d + off..j * d + off + dh]) * scale;
            }
            if !softmax_in_place(row) {
                return Err(Error::NonFinite("encoder attention"));
            }
            let out = &mut ctx[i * d + off..i * d + off + dh];
            for (j, &a) in row.iter().enumerate() {
                let vj = &v[j * d + off..j * d + off + dh];
                for (o, &vv) in out.iter_mut().zip(vj) {
                    *o += a * vv;
                }
            }
        }
    }
    let attn_out = affine(&ctx, n, &layer.wo, &layer.bo);
    let x_mid: Vec<T> = x.iter().zip(&attn_out).map(|(&a, &b)| a + b).collect();

    let (h2, ln2) = layer_norm(&x_mid, n, &layer.ln2_scale, &layer.ln2_shift);
    let u = affine(&h2, n, &layer.mlp_w1, &layer.mlp_b1);
    let g: Vec<T> = u.iter().map(|&v| gelu(v)).collect();
    let mlp_out = affine(&g, n, &layer.mlp_w2, &layer.mlp_b2);
    let x_out: Vec<T> = x_mid.iter().zip(&mlp_out).map(|(&a, &b)| a + b).collect();
    check_finite(&x_out, "encoder output")?;

    Ok((
        x_out,
        LayerCache {
            ln1,
            h1,
            q,
            k,
            v,
            attn,
            ctx,
            ln2,
            h2,
            u,
            g,
        },
    ))
}

pub(crate) fn encode_cached<T: Scalar>(
    z0: &PatchSequence<T>,
    weights: &SegmenterWeights<T>,
) -> Result<(PatchSequence<T>, Vec<LayerCache<T>>)> {
    if z0.dim != weights.config.embed_dim {
        return Err(Error::DimensionMismatch(format!(
            "sequence dim {} vs embed_dim {}",
            z0.dim, weights.config.embed_dim
        )));
    }
    check_finite(&z0.data, "encoder input")?;
    let n = z0.len();
    let mut x = z0.data.clone();
    let mut caches = Vec::with_capacity(weights.layers.len());
    for layer in &weights.layers {
        let (next, cache) = encoder_block(x, n, layer, weights.config.heads)?;
        caches.push(cache);
        x = next;
    }
    Ok((PatchSequence::new(z0.grid_w, z0.grid_h, z0.dim, x)?, caches))
}

/// Runs the transformer encoder over every patch.
pub fn encode<T: Scalar>(
    z0: &PatchSequence<T>,
    weights: &SegmenterWeights<T>,
) -> Result<PatchSequence<T>> {
    encode_cached(z0, weights).map(|(z, _)| z)
}

/// Linear head `W_s z + b_s` without the softmax.
pub fn head_logits<T: Scalar>(
    z: &PatchSequence<T>,
    weights: &SegmenterWeights<T>,
) -> Result<PatchSequence<T>> {
    if z.dim != weights.head_w.cols {
        return Err(Error::DimensionMismatch(format!(
            "sequence dim {} vs head input {}",
            z.dim, weights.head_w.cols
        )));
    }
    let logits = affine(&z.data, z.len(), &weights.head_w, &weights.head_b);
    PatchSequence::new(z.grid_w, z.grid_h, weights.head_w.rows, logits)
}

/// Per-patch class distributions `softmax(W_s z + b_s)`.
pub fn decode<T: Scalar>(
    z: &PatchSequence<T>,
    weights: &SegmenterWeights<T>,
) -> Result<PatchSequence<T>> {
    let mut out = head_logits(z, weights)?;
    let dim = out.dim;
    for row in out.data.chunks_exact_mut(dim) {
        if !softmax_in_place(row) {
            return Err(Error::NonFinite("decoder logits"));
        }
    }
    Ok(out)
}

/// Nearest-neighbour replication of per-patch distributions onto a
/// `width x height` pixel grid, plus the argmax mask (lowest index on ties).
pub fn upsample_to_maps<T: Scalar>(
    dists: &PatchSequence<T>,
    width: usize,
    height: usize,
    patch: usize,
) -> Result<(ProbMap<T>, MaskMap)> {
    if dists.grid_w * patch < width || dists.grid_h * patch < height {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} grid of {patch}-pixel patches cannot cover {width}x{height}",
            dists.grid_w, dists.grid_h
        )));
    }
    let c = dists.dim;
    let labels: Vec<u16> = (0..dists.len())
        .map(|i| argmax_lowest(dists.vector(i)) as u16)
        .collect();
    let mut probs = Vec::with_capacity(width * height * c);
    let mut mask = Vec::with_capacity(width * height);
    for y in 0..height {
        let py = y / patch;
        for x in 0..width {
            let cell = py * dists.grid_w + x / patch;
            probs.extend_from_slice(dists.vector(cell));
            mask.push(labels[cell]);
        }
    }
    Ok((
        ProbMap::new(width, height, c, probs)?,
        MaskMap::new(width, height, mask)?,
    ))
}

/// Pads a frame up to whole patches and splits it.
pub(crate) fn padded_patches<T: Scalar>(frame: &Frame, patch: usize) -> Result<PatchSequence<T>> {
    let tw = frame.width().div_ceil(patch) * patch;
    let th = frame.height().div_ceil(patch) * patch;
    let padded = pad_replicate(frame, tw, th)?;
    partition(&padded, patch)
}

/// Positional table matching `grid`, resampled when the stored grid differs.
pub(crate) fn positional_for<T: Scalar>(
    weights: &SegmenterWeights<T>,
    grid_w: usize,
    grid_h: usize,
) -> Result<Cow<'_, PositionalTable<T>>> {
    if (weights.pos.grid_w, weights.pos.grid_h) == (grid_w, grid_h) {
        Ok(Cow::Borrowed(&weights.pos))
    } else {
        Ok(Cow::Owned(weights.pos.resized(grid_w, grid_h)?))
    }
}

/// Encoder features for an arbitrary-size frame: pad, partition, embed (with
/// the positional table resampled to the frame's grid if needed), encode.
pub fn frame_features<T: Scalar>(
    frame: &Frame,
    weights: &SegmenterWeights<T>,
) -> Result<PatchSequence<T>> {
    let patches = padded_patches(frame, weights.config.patch_size)?;
    let pos = positional_for(weights, patches.grid_w, patches.grid_h)?;
    let z0 = embed_with(&patches, weights, &pos)?;
    encode(&z0, weights)
}

/// Output of [`segment_with_features`].
#[derive(Debug, Clone)]
pub struct Segmentation<T> {
    pub probs: ProbMap<T>,
    pub mask: MaskMap,
    /// Encoder output the prediction was decoded from.
    pub features: PatchSequence<T>,
    /// Per-patch class distributions.
    pub patch_probs: PatchSequence<T>,
}

pub fn segment_with_features<T: Scalar>(
    frame: &Frame,
    weights: &SegmenterWeights<T>,
) -> Result<Segmentation<T>> {
    let features = frame_features(frame, weights)?;
    let patch_probs = decode(&features, weights)?;
    let (probs, mask) = upsample_to_maps(
        &patch_probs,
        frame.width(),
        frame.height(),
        weights.config.patch_size,
    )?;
    Ok(Segmentation {
        probs,
        mask,
        features,
        patch_probs,
    })
}

/// Full single-frame prediction.
pub fn segment<T: Scalar>(
    frame: &Frame,
    weights: &SegmenterWeights<T>,
) -> Result<(ProbMap<T>, MaskMap)> {
    segment_with_features(frame, weights).map(|s| (s.probs, s.mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmenter::{init_weights, SegmenterConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::new(w, h, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap()
    }

    fn tiny() -> SegmenterWeights<f64> {
        init_weights(SegmenterConfig::tiny(1)).unwrap()
    }

    #[test]
    fn partition_grids() {
        let p = partition::<f64>(&random_frame(16, 16, 0), 8).unwrap();
        assert_eq!((p.grid_w, p.grid_h, p.len()), (2, 2, 4));
        let f = random_frame(8, 8, 1);
        let p = partition::<f64>(&f, 8).unwrap();
        assert_eq!(p.len(), 1);
        let whole: Vec<f64> = f.data().iter().map(|&b| f64::from(b) / 255.0).collect();
        assert_eq!(p.vector(0), &whole[..]);
        let p = partition::<f64>(&random_frame(8, 16, 2), 8).unwrap();
        assert_eq!((p.grid_w, p.grid_h), (1, 2));
        assert!(partition::<f64>(&random_frame(9, 8, 2), 8).is_err());
    }

    #[test]
    fn partition_patch_layout() {
        // pixel (x, y) red channel = x + 10 y
        let mut f = Frame::filled(4, 4, [0, 0, 0]).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                f.set_pixel(x, y, [(x + 10 * y) as u8, 0, 0]);
            }
        }
        let p = partition::<f64>(&f, 2).unwrap();
        // second patch (grid x = 1, y = 0) starts at pixel (2, 0) then (3, 0), (2, 1)
        let v = p.vector(1);
        assert_eq!(v[0] * 255.0, 2.0);
        assert_eq!(v[3] * 255.0, 3.0);
        assert!((v[6] * 255.0 - 12.0).abs() < 1e-12);
    }

    #[test]
    fn embed_bias_only() {
        let mut w = tiny();
        w.patch_w.data.fill(0.0);
        w.pos.table.data.fill(0.0);
        w.patch_b = (0..8).map(|i| i as f64).collect();
        let p = partition::<f64>(&random_frame(8, 8, 4), 4).unwrap();
        let z = embed(&p, &w).unwrap();
        for i in 0..z.len() {
            assert_eq!(z.vector(i), &w.patch_b[..]);
        }
    }

    #[test]
    fn embed_zero_patch_gives_position() {
        let w = tiny();
        let p = partition::<f64>(&Frame::filled(8, 8, [0, 0, 0]).unwrap(), 4).unwrap();
        let z = embed(&p, &w).unwrap();
        assert_eq!(z.data, w.pos.table.data);
    }

    #[test]
    fn embed_matches_naive_product() {
        let w = tiny();
        let p = partition::<f64>(&random_frame(8, 8, 5), 4).unwrap();
        let z = embed(&p, &w).unwrap();
        for i in 0..p.len() {
            for o in 0..8 {
                let mut acc = 0.0;
                for k in 0..p.dim {
                    acc += w.patch_w.data[o * p.dim + k] * p.vector(i)[k];
                }
                let want = acc + w.patch_b[o] + w.pos.table.data[i * 8 + o];
                assert!((z.vector(i)[o] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn embed_grid_mismatch() {
        let w = tiny();
        let p = partition::<f64>(&random_frame(12, 8, 5), 4).unwrap();
        assert!(matches!(embed(&p, &w), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn zero_residual_branches_are_identity() {
        let mut w = init_weights::<f64>(SegmenterConfig::default()).unwrap();
        for l in &mut w.layers {
            l.wo.data.fill(0.0);
            l.bo.fill(0.0);
            l.mlp_w2.data.fill(0.0);
            l.mlp_b2.fill(0.0);
        }
        let p = partition::<f64>(&random_frame(32, 16, 6), 8).unwrap();
        let z0 = embed(&p, &w.interpolate_pos(4, 2).unwrap()).unwrap();
        assert_eq!(encode(&z0, &w).unwrap(), z0);
    }

    #[test]
    fn single_token_attends_to_itself() {
        let w = tiny();
        let p = partition::<f64>(&random_frame(4, 4, 7), 4).unwrap();
        let w1 = w.interpolate_pos(1, 1).unwrap();
        let (_, caches) = encode_cached(&embed(&p, &w1).unwrap(), &w1).unwrap();
        assert!(caches[0].attn.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn permutation_equivariance_without_positions() {
        let mut w = init_weights::<f64>(SegmenterConfig {
            pos_grid_w: 3,
            pos_grid_h: 2,
            ..SegmenterConfig::default()
        })
        .unwrap();
        w.pos.table.data.fill(0.0);
        let p = partition::<f64>(&random_frame(24, 16, 8), 8).unwrap();
        let z0 = embed(&p, &w).unwrap();
        let base = encode(&z0, &w).unwrap();
        let perm = [4usize, 2, 5, 0, 3, 1];
        let permuted: Vec<f64> = perm.iter().flat_map(|&i| z0.vector(i).to_vec()).collect();
        let zp = PatchSequence::new(3, 2, z0.dim, permuted).unwrap();
        let out = encode(&zp, &w).unwrap();
        for (slot, &src) in perm.iter().enumerate() {
            for (a, b) in out.vector(slot).iter().zip(base.vector(src)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exploded_weights_are_reported() {
        let mut w = tiny();
        w.layers[0].mlp_w2.data.fill(f64::MAX);
        let p = partition::<f64>(&random_frame(8, 8, 9), 4).unwrap();
        let z0 = embed(&p, &w).unwrap();
        assert!(matches!(encode(&z0, &w), Err(Error::NonFinite(_))));
    }

    #[test]
    fn decode_examples() {
        let mut w = tiny();
        let z = PatchSequence::new(2, 1, 8, (0..16).map(|i| i as f64 * 0.1).collect()).unwrap();
        w.head_w.data.fill(0.0);
        w.head_b.fill(0.0);
        let d = decode(&z, &w).unwrap();
        assert!(d.data.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));

        w.head_b = vec![10.0, 0.0, 0.0];
        let d = decode(&z, &w).unwrap();
        let want = 10f64.exp() / (10f64.exp() + 2.0);
        assert!((d.vector(0)[0] - want).abs() < 1e-15);

        let w = tiny();
        let base = decode(&z, &w).unwrap();
        let mut shifted = w.clone();
        shifted.head_b.iter_mut().for_each(|b| *b += 123.0);
        let d = decode(&z, &shifted).unwrap();
        for (a, b) in d.data.iter().zip(&base.data) {
            assert!((a - b).abs() < 1e-12);
        }
        for i in 0..d.len() {
            assert!((d.vector(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn upsample_examples() {
        let mut one_hot = vec![0.0f64; 4];
        one_hot[3] = 1.0;
        let d = PatchSequence::new(1, 1, 4, one_hot).unwrap();
        let (_, m) = upsample_to_maps(&d, 8, 8, 8).unwrap();
        assert!(m.data().iter().all(|&c| c == 3));

        let d = PatchSequence::new(1, 1, 3, vec![0.2, 0.4, 0.4]).unwrap();
        let (_, m) = upsample_to_maps(&d, 3, 3, 4).unwrap();
        assert!(m.data().iter().all(|&c| c == 1));

        let mut quads = vec![0.0f64; 16];
        for i in 0..4 {
            quads[i * 4 + i] = 1.0;
        }
        let d = PatchSequence::new(2, 2, 4, quads).unwrap();
        let (p, m) = upsample_to_maps(&d, 4, 4, 2).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(m.get(x, y) as usize, (y / 2) * 2 + x / 2);
            }
        }
        assert_eq!(p.pixel(3, 3), &[0.0, 0.0, 0.0, 1.0]);
        assert!(upsample_to_maps(&d, 5, 4, 2).is_err());
    }

    #[test]
    fn segment_pads_crops_and_is_deterministic() {
        let w = init_weights::<f64>(SegmenterConfig::default()).unwrap();
        let f = random_frame(30, 21, 10);
        let (p1, m1) = segment(&f, &w).unwrap();
        let (p2, m2) = segment(&f, &w).unwrap();
        assert_eq!((p1.width(), p1.height()), (30, 21));
        assert_eq!(p1, p2);
        assert_eq!(m1, m2);
        for px in p1.data().chunks(p1.classes()) {
            assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
