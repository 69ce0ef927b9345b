//! Patch-level cross-entropy, reverse-mode gradients through
//! decode/encode/embed, and momentum SGD with polynomial learning-rate decay.

use super::forward::{
    embed, encode_cached, head_logits, padded_patches, LayerCache, PatchSequence,
};
use super::linalg::{affine_backward, dot, gelu_grad, layer_norm_backward};
use super::weights::{LayerWeights, SegmenterWeights};
use crate::error::{Error, Result};
use crate::raster::{argmax_lowest, Frame, MaskMap};
use crate::scalar::Scalar;

/// Exponent of the polynomial decay.
pub const LR_POWER: f64 = 0.9;
pub const DEFAULT_BASE_LR: f64 = 1e-3;
pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.0005;

/// Majority class of every patch of a `grid_w x grid_h` grid laid over
/// `mask`. Pixels beyond the mask edge (padding) are ignored; ties go to
/// the lowest class index.
pub fn patch_targets(mask: &MaskMap, patch: usize, grid_w: usize, grid_h: usize) -> Vec<u16> {
    let classes = mask.max_class() as usize + 1;
    let mut counts = vec![0u32; classes];
    let mut out = Vec::with_capacity(grid_w * grid_h);
    for py in 0..grid_h {
        for px in 0..grid_w {
            counts.fill(0);
            for y in py * patch..((py + 1) * patch).min(mask.height()) {
                for x in px * patch..((px + 1) * patch).min(mask.width()) {
                    counts[mask.get(x, y) as usize] += 1;
                }
            }
            out.push(argmax_lowest(&counts) as u16);
        }
    }
    out
}

/// A frame already cut into patches, with one target class per patch.
#[derive(Debug, Clone)]
pub struct TrainingExample<T> {
    pub patches: PatchSequence<T>,
    pub targets: Vec<u16>,
}

impl<T: Scalar> TrainingExample<T> {
    pub fn new(frame: &Frame, gt: &MaskMap, patch: usize, classes: usize) -> Result<Self> {
        if (frame.width(), frame.height()) != (gt.width(), gt.height()) {
            return Err(Error::DimensionMismatch(format!(
                "frame {}x{} vs ground truth {}x{}",
                frame.width(),
                frame.height(),
                gt.width(),
                gt.height()
            )));
        }
        gt.check_classes(classes as u16)?;
        let patches = padded_patches(frame, patch)?;
        let targets = patch_targets(gt, patch, patches.grid_w, patches.grid_h);
        Ok(Self { patches, targets })
    }
}

fn check_targets<T: Scalar>(ex: &TrainingExample<T>, weights: &SegmenterWeights<T>) -> Result<()> {
    if ex.targets.len() != ex.patches.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {} patches",
            ex.targets.len(),
            ex.patches.len()
        )));
    }
    if let Some(&t) = ex
        .targets
        .iter()
        .find(|&&t| t as usize >= weights.config.outputs())
    {
        return Err(Error::InvalidConfig(format!(
            "target class {t} outside {} outputs",
            weights.config.outputs()
        )));
    }
    Ok(())
}

/// Per-patch `log-sum-exp(logits) - logits[target]`, averaged.
fn cross_entropy<T: Scalar>(logits: &PatchSequence<T>, targets: &[u16]) -> (T, Vec<T>) {
    let c = logits.dim;
    let n = T::from_usize_lossy(logits.len());
    let mut total = T::zero();
    let mut dlogits = vec![T::zero(); logits.data.len()];
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.vector(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[t as usize];
        let d = &mut dlogits[i * c..(i + 1) * c];
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = (row[k] - lse).exp() / n;
        }
        d[t as usize] -= T::one() / n;
    }
    (total / n, dlogits)
}

/// Mean patch cross-entropy of the current weights.
pub fn loss<T: Scalar>(weights: &SegmenterWeights<T>, ex: &TrainingExample<T>) -> Result<T> {
    check_targets(ex, weights)?;
    let z0 = embed(&ex.patches, weights)?;
    let (zl, _) = encode_cached(&z0, weights)?;
    let logits = head_logits(&zl, weights)?;
    Ok(cross_entropy(&logits, &ex.targets).0)
}

fn block_backward<T: Scalar>(
    cache: &LayerCache<T>,
    layer: &LayerWeights<T>,
    grad: &mut LayerWeights<T>,
    dx_out: &[T],
    n: usize,
    heads: usize,
) -> Vec<T> {
    let d = layer.ln1_scale.len();
    let dh = d / heads;
    let scale = T::one() / T::from_usize_lossy(dh).sqrt();

    // MLP branch
    let dg = affine_backward(
        &cache.g,
        n,
        &layer.mlp_w2,
        dx_out,
        &mut grad.mlp_w2,
        &mut grad.mlp_b2,
    );
    let du: Vec<T> = dg
        .iter()
        .zip(&cache.u)
        .map(|(&g, &u)| g * gelu_grad(u))
        .collect();
    let dh2 = affine_backward(
        &cache.h2,
        n,
        &layer.mlp_w1,
        &du,
        &mut grad.mlp_w1,
        &mut grad.mlp_b1,
    );
    let dmid = layer_norm_backward(
        &cache.ln2,
        &layer.ln2_scale,
        &dh2,
        &mut grad.ln2_scale,
        &mut grad.ln2_shift,
    );
    let dx_mid: Vec<T> = dx_out.iter().zip(&dmid).map(|(&a, &b)| a + b).collect();

    // attention branch
    let dctx = affine_backward(
        &cache.ctx,
        n,
        &layer.wo,
        &dx_mid,
        &mut grad.wo,
        &mut grad.bo,
    );
    let mut dq = vec![T::zero(); n * d];
    let mut dk = vec![T::zero(); n * d];
    let mut dv = vec![T::zero(); n * d];
    let mut dp = vec![T::zero(); n];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..n {
            let probs = &cache.attn[(h * n + i) * n..(h * n + i + 1) * n];
            let dci = &dctx[i * d + off..i * d + off + dh];
            for j in 0..n {
                dp[j] = dot(dci, &cache.v[j * d + off..j * d + off + dh]);
                let dvj = &mut dv[j * d + off..j * d + off + dh];
                for (o, &g) in dvj.iter_mut().zip(dci) {
                    *o += probs[j] * g;
                }
            }
            let s = dot(probs, &dp);
            let qi = &cache.q[i * d + off..i * d + off + dh];
            for j in 0..n {
                let ds = probs[j] * (dp[j] - s) * scale;
                if ds == T::zero() {
                    continue;
                }
                let kj = &cache.k[j * d + off..j * d + off + dh];
                for t in 0..dh {
                    dq[i * d + off + t] += ds * kj[t];
                    dk[j * d + off + t] += ds * qi[t];
                }
            }
        }
    }
    let mut dh1 = affine_backward(&cache.h1, n, &layer.wq, &dq, &mut grad.wq, &mut grad.bq);
    for (branch, (w, gw, gb)) in [
        (&dk, (&layer.wk, &mut grad.wk, &mut grad.bk)),
        (&dv, (&layer.wv, &mut grad.wv, &mut grad.bv)),
    ] {
        let part = affine_backward(&cache.h1, n, w, branch, gw, gb);
        dh1.iter_mut().zip(part).for_each(|(a, b)| *a += b);
    }
    let din = layer_norm_backward(
        &cache.ln1,
        &layer.ln1_scale,
        &dh1,
        &mut grad.ln1_scale,
        &mut grad.ln1_shift,
    );
    dx_mid.iter().zip(din).map(|(&a, b)| a + b).collect()
}

/// Loss and the gradient of every parameter, by reverse-mode
/// differentiation through head, encoder blocks, and patch embedding.
pub fn loss_and_grad<T: Scalar>(
    weights: &SegmenterWeights<T>,
    ex: &TrainingExample<T>,
) -> Result<(T, SegmenterWeights<T>)> {
    check_targets(ex, weights)?;
    let n = ex.patches.len();
    let z0 = embed(&ex.patches, weights)?;
    let (zl, caches) = encode_cached(&z0, weights)?;
    let logits = head_logits(&zl, weights)?;
    let (loss, dlogits) = cross_entropy(&logits, &ex.targets);

    let mut grad = weights.zeros_like();
    let mut dz = affine_backward(
        &zl.data,
        n,
        &weights.head_w,
        &dlogits,
        &mut grad.head_w,
        &mut grad.head_b,
    );
    for ((cache, layer), gl) in caches
        .iter()
        .zip(&weights.layers)
        .zip(grad.layers.iter_mut())
        .rev()
    {
        dz = block_backward(cache, layer, gl, &dz, n, weights.config.heads);
    }
    for (g, &d) in grad.pos.table.data.iter_mut().zip(&dz) {
        *g += d;
    }
    affine_backward(
        &ex.patches.data,
        n,
        &weights.patch_w,
        &dz,
        &mut grad.patch_w,
        &mut grad.patch_b,
    );
    Ok((loss, grad))
}

/// Optimizer state for momentum SGD.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub iter: usize,
    pub max_iter: usize,
    pub base_lr: T,
    pub momentum: T,
    pub weight_decay: T,
    pub velocity: SegmenterWeights<T>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(weights: &SegmenterWeights<T>, max_iter: usize) -> Self {
        Self {
            iter: 0,
            max_iter,
            base_lr: T::lit(DEFAULT_BASE_LR),
            momentum: T::lit(DEFAULT_MOMENTUM),
            weight_decay: T::lit(DEFAULT_WEIGHT_DECAY),
            velocity: weights.zeros_like(),
        }
    }
}

/// `base_lr * (1 - iter / max_iter)^0.9`.
pub fn lr_schedule<T: Scalar>(state: &TrainState<T>) -> Result<T> {
    if state.max_iter == 0 {
        return Err(Error::InvalidConfig("max_iter must be >= 1".into()));
    }
    if state.iter > state.max_iter {
        return Err(Error::InvalidConfig(format!(
            "iteration {} beyond max_iter {}",
            state.iter, state.max_iter
        )));
    }
    let progress = T::from_usize_lossy(state.iter) / T::from_usize_lossy(state.max_iter);
    Ok(state.base_lr * (T::one() - progress).powf(T::lit(LR_POWER)))
}

/// Applies `v = momentum * v - lr * (g + decay * w); w += v` to every parameter.
pub fn sgd_update<T: Scalar>(
    weights: &mut SegmenterWeights<T>,
    state: &mut TrainState<T>,
    grad: &SegmenterWeights<T>,
    lr: T,
) {
    // weights, gradient and velocity share one layout; walk them flattened
    let grads = grad.flatten();
    let mut vel = state.velocity.flatten();
    let (momentum, decay) = (state.momentum, state.weight_decay);
    let mut offset = 0;
    weights.for_each_tensor_mut(|_, w| {
        for (k, wk) in w.iter_mut().enumerate() {
            let v = &mut vel[offset + k];
            *v = momentum * *v - lr * (grads[offset + k] + decay * *wk);
            *wk += *v;
        }
        offset += w.len();
    });
    let mut it = vel.into_iter();
    state
        .velocity
        .for_each_tensor_mut(|_, v| v.iter_mut().for_each(|x| *x = it.next().unwrap()));
}

/// One optimization step on a single frame. Returns the loss before the update.
pub fn train_step<T: Scalar>(
    weights: &mut SegmenterWeights<T>,
    state: &mut TrainState<T>,
    frame: &Frame,
    gt: &MaskMap,
) -> Result<T> {
    let ex = TrainingExample::new(frame, gt, weights.config.patch_size, weights.config.classes)?;
    train_step_example(weights, state, &ex)
}

pub fn train_step_example<T: Scalar>(
    weights: &mut SegmenterWeights<T>,
    state: &mut TrainState<T>,
    ex: &TrainingExample<T>,
) -> Result<T> {
    if state.iter >= state.max_iter {
        return Err(Error::InvalidConfig(format!(
            "schedule exhausted after {} iterations",
            state.max_iter
        )));
    }
    let lr = lr_schedule(state)?;
    let (loss, grad) = loss_and_grad(weights, ex)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    sgd_update(weights, state, &grad, lr);
    state.iter += 1;
    Ok(loss)
}
