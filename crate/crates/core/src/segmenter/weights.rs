use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::SegmenterConfig;
use super::linalg::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Learned positional vectors, one per patch-grid cell (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalTable<T> {
    pub grid_w: usize,
    pub grid_h: usize,
    /// `grid_w * grid_h` rows of `embed_dim`.
    pub table: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub ln1_scale: Vec<T>,
    pub ln1_shift: Vec<T>,
    pub wq: Matrix<T>,
    pub bq: Vec<T>,
    pub wk: Matrix<T>,
    pub bk: Vec<T>,
    pub wv: Matrix<T>,
    pub bv: Vec<T>,
    pub wo: Matrix<T>,
    pub bo: Vec<T>,
    pub ln2_scale: Vec<T>,
    pub ln2_shift: Vec<T>,
    pub mlp_w1: Matrix<T>,
    pub mlp_b1: Vec<T>,
    pub mlp_w2: Matrix<T>,
    pub mlp_b2: Vec<T>,
}

/// Every learnable tensor of the segmenter. Also used as the gradient and
/// momentum container, since those share its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmenterWeights<T> {
    pub config: SegmenterConfig,
    pub patch_w: Matrix<T>,
    pub patch_b: Vec<T>,
    pub pos: PositionalTable<T>,
    pub layers: Vec<LayerWeights<T>>,
    pub head_w: Matrix<T>,
    pub head_b: Vec<T>,
}

impl<T: Scalar> LayerWeights<T> {
    fn zeros(d: usize, hidden: usize) -> Self {
        let v = || vec![T::zero(); d];
        Self {
            ln1_scale: v(),
            ln1_shift: v(),
            wq: Matrix::zeros(d, d),
            bq: v(),
            wk: Matrix::zeros(d, d),
            bk: v(),
            wv: Matrix::zeros(d, d),
            bv: v(),
            wo: Matrix::zeros(d, d),
            bo: v(),
            ln2_scale: v(),
            ln2_shift: v(),
            mlp_w1: Matrix::zeros(hidden, d),
            mlp_b1: vec![T::zero(); hidden],
            mlp_w2: Matrix::zeros(d, hidden),
            mlp_b2: v(),
        }
    }
}

impl<T: Scalar> SegmenterWeights<T> {
    /// All-zero tensors shaped for `config`.
    pub fn zeros(config: SegmenterConfig) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let cells = config.pos_grid_w * config.pos_grid_h;
        Ok(Self {
            config,
            patch_w: Matrix::zeros(d, config.patch_dim()),
            patch_b: vec![T::zero(); d],
            pos: PositionalTable {
                grid_w: config.pos_grid_w,
                grid_h: config.pos_grid_h,
                table: Matrix::zeros(cells, d),
            },
            layers: (0..config.layers)
                .map(|_| LayerWeights::zeros(d, config.hidden_dim()))
                .collect(),
            head_w: Matrix::zeros(config.outputs(), d),
            head_b: vec![T::zero(); config.outputs()],
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_tensor_mut(|_, t| t.iter_mut().for_each(|v| *v = T::zero()));
        z
    }

    /// Visits tensors in declaration order (the on-disk order).
    pub fn for_each_tensor(&self, mut f: impl FnMut(&str, &[T])) {
        f("patch_w", &self.patch_w.data);
        f("patch_b", &self.patch_b);
        f("pos", &self.pos.table.data);
        for l in &self.layers {
            f("ln1_scale", &l.ln1_scale);
            f("ln1_shift", &l.ln1_shift);
            f("wq", &l.wq.data);
            f("bq", &l.bq);
            f("wk", &l.wk.data);
            f("bk", &l.bk);
            f("wv", &l.wv.data);
            f("bv", &l.bv);
            f("wo", &l.wo.data);
            f("bo", &l.bo);
            f("ln2_scale", &l.ln2_scale);
            f("ln2_shift", &l.ln2_shift);
            f("mlp_w1", &l.mlp_w1.data);
            f("mlp_b1", &l.mlp_b1);
            f("mlp_w2", &l.mlp_w2.data);
            f("mlp_b2", &l.mlp_b2);
        }
        f("head_w", &self.head_w.data);
        f("head_b", &self.head_b);
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&str, &mut [T])) {
        f("patch_w", &mut self.patch_w.data);
        f("patch_b", &mut self.patch_b);
        f("pos", &mut self.pos.table.data);
        for l in &mut self.layers {
            f("ln1_scale", &mut l.ln1_scale);
            f("ln1_shift", &mut l.ln1_shift);
            f("wq", &mut l.wq.data);
            f("bq", &mut l.bq);
            f("wk", &mut l.wk.data);
            f("bk", &mut l.bk);
            f("wv", &mut l.wv.data);
            f("bv", &mut l.bv);
            f("wo", &mut l.wo.data);
            f("bo", &mut l.bo);
            f("ln2_scale", &mut l.ln2_scale);
            f("ln2_shift", &mut l.ln2_shift);
            f("mlp_w1", &mut l.mlp_w1.data);
            f("mlp_b1", &mut l.mlp_b1);
            f("mlp_w2", &mut l.mlp_w2.data);
            f("mlp_b2", &mut l.mlp_b2);
        }
        f("head_w", &mut self.head_w.data);
        f("head_b", &mut self.head_b);
    }

    /// Flattened copy of every value in declaration order.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        self.for_each_tensor(|_, t| out.extend_from_slice(t));
        out
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|_, t| n += t.len());
        n
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_tensor(|_, t| ok &= t.iter().all(|v| v.is_finite()));
        ok
    }

    /// Elementwise conversion to another scalar type.
    pub fn cast<U: Scalar>(&self) -> SegmenterWeights<U> {
        let mut out = SegmenterWeights::<U>::zeros(self.config).expect("config already valid");
        out.pos = PositionalTable {
            grid_w: self.pos.grid_w,
            grid_h: self.pos.grid_h,
            table: Matrix::zeros(self.pos.table.rows, self.pos.table.cols),
        };
        let flat: Vec<U> = self
            .flatten()
            .into_iter()
            .map(|v| U::lit(v.as_f64()))
            .collect();
        let mut it = flat.into_iter();
        out.for_each_tensor_mut(|_, t| t.iter_mut().for_each(|v| *v = it.next().unwrap()));
        out
    }

    /// Resamples the positional table onto a new patch grid.
    pub fn interpolate_pos(&self, grid_w: usize, grid_h: usize) -> Result<Self> {
        let mut out = self.clone();
        out.pos = self.pos.resized(grid_w, grid_h)?;
        out.config.pos_grid_w = grid_w;
        out.config.pos_grid_h = grid_h;
        Ok(out)
    }
}

/// Seeded initialization: Glorot-uniform matrices, zero biases, unit
/// layer-norm scales, and `N(0, 0.02)` positional vectors.
pub fn init_weights<T: Scalar>(config: SegmenterConfig) -> Result<SegmenterWeights<T>> {
    let mut w = SegmenterWeights::<f64>::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 0.02).expect("valid std");

    let glorot = |m: &mut Matrix<f64>, rng: &mut ChaCha8Rng| {
        let s = (6.0 / (m.rows + m.cols) as f64).sqrt();
        m.data.iter_mut().for_each(|v| *v = rng.random_range(-s..s));
    };

    glorot(&mut w.patch_w, &mut rng);
    w.pos
        .table
        .data
        .iter_mut()
        .for_each(|v| *v = normal.sample(&mut rng));
    for l in &mut w.layers {
        l.ln1_scale.fill(1.0);
        l.ln2_scale.fill(1.0);
        for m in [
            &mut l.wq,
            &mut l.wk,
            &mut l.wv,
            &mut l.wo,
            &mut l.mlp_w1,
            &mut l.mlp_w2,
        ] {
            glorot(m, &mut rng);
        }
    }
    glorot(&mut w.head_w, &mut rng);
    Ok(w.cast())
}

impl<T: Scalar> PositionalTable<T> {
    /// Bilinear resampling with half-pixel centers and edge clamping, applied
    /// independently to every channel.
    pub fn resized(&self, grid_w: usize, grid_h: usize) -> Result<Self> {
        if grid_w == 0 || grid_h == 0 {
            return Err(Error::InvalidDimensions(format!(
                "positional grid {grid_w}x{grid_h}"
            )));
        }
        if grid_w == self.grid_w && grid_h == self.grid_h {
            return Ok(self.clone());
        }
        let d = self.table.cols;
        let sample = |dst: usize, src: usize, i: usize| -> (usize, usize, T) {
            let pos =
                ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, T::lit(pos - lo as f64))
        };
        let mut table = Matrix::zeros(grid_w * grid_h, d);
        for y in 0..grid_h {
            let (y0, y1, fy) = sample(grid_h, self.grid_h, y);
            for x in 0..grid_w {
                let (x0, x1, fx) = sample(grid_w, self.grid_w, x);
                let r00 = self.table.row(y0 * self.grid_w + x0);
                let r01 = self.table.row(y0 * self.grid_w + x1);
                let r10 = self.table.row(y1 * self.grid_w + x0);
                let r11 = self.table.row(y1 * self.grid_w + x1);
                let one = T::one();
                let out = &mut table.data[(y * grid_w + x) * d..(y * grid_w + x + 1) * d];
                for k in 0..d {
                    let top = r00[k] * (one - fx) + r01[k] * fx;
                    let bottom = r10[k] * (one - fx) + r11[k] * fx;
                    out[k] = top * (one - fy) + bottom * fy;
                }
            }
        }
        Ok(Self {
            grid_w,
            grid_h,
            table,
        })
    }
}
