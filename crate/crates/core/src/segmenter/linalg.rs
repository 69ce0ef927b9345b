//! Dense row-major helpers for the patch segmenter.

use crate::scalar::Scalar;

/// Row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `y = x W^T + b` for `n` stacked row vectors `x` (`n x W.cols`).
pub fn affine<T: Scalar>(x: &[T], n: usize, w: &Matrix<T>, b: &[T]) -> Vec<T> {
    debug_assert_eq!(x.len(), n * w.cols);
    let mut y = Vec::with_capacity(n * w.rows);
    for i in 0..n {
        let xi = &x[i * w.cols..(i + 1) * w.cols];
        for (o, &bo) in b.iter().enumerate().take(w.rows) {
            y.push(dot(xi, w.row(o)) + bo);
        }
    }
    y
}

/// Backward of [`affine`]: accumulates `dW += dy^T x`, `db += sum dy`, and
/// returns `dx = dy W`.
pub fn affine_backward<T: Scalar>(
    x: &[T],
    n: usize,
    w: &Matrix<T>,
    dy: &[T],
    dw: &mut Matrix<T>,
    db: &mut [T],
) -> Vec<T> {
    let (out, inp) = (w.rows, w.cols);
    let mut dx = vec![T::zero(); n * inp];
    for i in 0..n {
        let xi = &x[i * inp..(i + 1) * inp];
        let dyi = &dy[i * out..(i + 1) * out];
        let dxi = &mut dx[i * inp..(i + 1) * inp];
        for o in 0..out {
            let g = dyi[o];
            if g == T::zero() {
                continue;
            }
            db[o] += g;
            let wrow = w.row(o);
            let dwrow = &mut dw.data[o * inp..(o + 1) * inp];
            for k in 0..inp {
                dwrow[k] += g * xi[k];
                dxi[k] += g * wrow[k];
            }
        }
    }
    dx
}

pub const LN_EPS: f64 = 1e-5;

/// Normalized activations and per-row inverse std, kept for backward.
#[derive(Debug, Clone)]
pub struct LnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

pub fn layer_norm<T: Scalar>(x: &[T], n: usize, scale: &[T], shift: &[T]) -> (Vec<T>, LnCache<T>) {
    let d = scale.len();
    let df = T::from_usize_lossy(d);
    let eps = T::lit(LN_EPS);
    let mut y = Vec::with_capacity(n * d);
    let mut xhat = Vec::with_capacity(n * d);
    let mut inv_std = Vec::with_capacity(n);
    for row in x.chunks_exact(d).take(n) {
        let mean = row.iter().copied().sum::<T>() / df;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / df;
        let is = T::one() / (var + eps).sqrt();
        inv_std.push(is);
        for k in 0..d {
            let h = (row[k] - mean) * is;
            xhat.push(h);
            y.push(h * scale[k] + shift[k]);
        }
    }
    (y, LnCache { xhat, inv_std })
}

pub fn layer_norm_backward<T: Scalar>(
    cache: &LnCache<T>,
    scale: &[T],
    dy: &[T],
    dscale: &mut [T],
    dshift: &mut [T],
) -> Vec<T> {
    let d = scale.len();
    let df = T::from_usize_lossy(d);
    let mut dx = vec![T::zero(); dy.len()];
    for (i, &is) in cache.inv_std.iter().enumerate() {
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let g = &dy[i * d..(i + 1) * d];
        let mut mean_dxh = T::zero();
        let mut mean_dxh_xh = T::zero();
        for k in 0..d {
            dscale[k] += g[k] * xh[k];
            dshift[k] += g[k];
            let dxh = g[k] * scale[k];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[k];
        }
        mean_dxh /= df;
        mean_dxh_xh /= df;
        for k in 0..d {
            let dxh = g[k] * scale[k];
            dx[i * d + k] = is * (dxh - mean_dxh - xh[k] * mean_dxh_xh);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
#[inline]
pub fn gelu<T: Scalar>(u: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    half * u * (T::one() + (c * (u + a * u * u * u)).tanh())
}

#[inline]
pub fn gelu_grad<T: Scalar>(u: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    let t = (c * (u + a * u * u * u)).tanh();
    half * (T::one() + t) + half * u * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * a * u * u)
}
