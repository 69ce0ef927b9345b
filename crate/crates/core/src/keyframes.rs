//! Perceptual hashing and greedy near-duplicate keyframe selection.
//!
//! The hash follows the classic DCT recipe: luma, box-filter to 32x32,
//! orthonormal 2-D DCT-II, keep the 8x8 low-frequency block (DC included),
//! and set one bit per coefficient strictly above the block median.

use std::fmt;

use crate::error::{Error, Result};
use crate::raster::{resize_area, to_grayscale, Frame, GrayRaster};
use crate::scalar::Scalar;

/// Default Hamming threshold for near-duplicate frames.
pub const DEFAULT_HAMMING_THRESHOLD: u32 = 12;

const REDUCED: usize = 32;
const BLOCK: usize = 8;

/// 64-bit DCT hash. Bit `i` (value `1 << i`) belongs to coefficient `i` of
/// the 8x8 block in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PerceptualHash(pub u64);

impl PerceptualHash {
    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn popcount(self) -> u32 {
        self.0.count_ones()
    }

    pub fn hamming(self, other: PerceptualHash) -> u32 {
        hamming(self, other)
    }
}

impl fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Number of differing bits.
pub fn hamming(a: PerceptualHash, b: PerceptualHash) -> u32 {
    (a.0 ^ b.0).count_ones()
}

/// Orthonormal DCT-II basis: `basis[k][n] = a_k cos(pi (2n + 1) k / 2N)`.
fn dct_basis<T: Scalar>(n: usize) -> Vec<T> {
    let nf = n as f64;
    let mut basis = Vec::with_capacity(n * n);
    for k in 0..n {
        let scale = if k == 0 {
            (1.0 / nf).sqrt()
        } else {
            (2.0 / nf).sqrt()
        };
        for i in 0..n {
            let angle = std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf);
            basis.push(T::lit(scale * angle.cos()));
        }
    }
    basis
}

/// Separable orthonormal 2-D DCT-II of a square `n x n` block (`Y = C X C^T`).
pub fn dct2d<T: Scalar>(input: &[T], n: usize) -> Vec<T> {
    assert_eq!(input.len(), n * n, "dct2d expects a square block");
    let c = dct_basis::<T>(n);
    // rows: tmp = X C^T
    let mut tmp = vec![T::zero(); n * n];
    for r in 0..n {
        let row = &input[r * n..(r + 1) * n];
        for k in 0..n {
            let basis = &c[k * n..(k + 1) * n];
            tmp[r * n + k] = row.iter().zip(basis).map(|(&x, &b)| x * b).sum();
        }
    }
    // columns: Y = C tmp
    let mut out = vec![T::zero(); n * n];
    for k in 0..n {
        let basis = &c[k * n..(k + 1) * n];
        for col in 0..n {
            let mut acc = T::zero();
            for (r, &b) in basis.iter().enumerate() {
                acc += b * tmp[r * n + col];
            }
            out[k * n + col] = acc;
        }
    }
    out
}

/// Hash of an already-gray raster.
pub fn phash_gray<T: Scalar>(gray: &GrayRaster<T>) -> PerceptualHash {
    let reduced = resize_area(gray, REDUCED, REDUCED).expect("nonzero target");
    let mut coeffs = dct2d(reduced.data(), REDUCED);

    // Round-off leaves ~1e-14 residue where the exact transform is zero (for
    // instance every AC term of a flat image). Snap it to zero so those
    // coefficients tie with the median instead of landing on a random side.
    let peak = coeffs.iter().fold(T::zero(), |m, &c| m.max(c.abs()));
    let floor = peak * T::epsilon() * T::lit((REDUCED * REDUCED) as f64);
    for c in coeffs.iter_mut() {
        if c.abs() <= floor {
            *c = T::zero();
        }
    }

    let block: Vec<T> = (0..BLOCK)
        .flat_map(|r| coeffs[r * REDUCED..r * REDUCED + BLOCK].iter().copied())
        .collect();
    let mut sorted = block.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite coefficients"));
    let mid = sorted.len() / 2;
    let median = (sorted[mid - 1] + sorted[mid]) / T::lit(2.0);

    let bits = block
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > median)
        .fold(0u64, |acc, (i, _)| acc | (1u64 << i));
    PerceptualHash(bits)
}

pub fn phash(frame: &Frame) -> PerceptualHash {
    phash_gray(&to_grayscale::<f64>(frame))
}

/// Result of greedy keyframe selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyframeSelection {
    pub kept: Vec<usize>,
    pub threshold: u32,
}

/// Greedy scan in temporal order over precomputed hashes: a frame is kept
/// iff it is farther than `threshold` from every frame kept so far.
pub fn dedup_hashes(hashes: &[PerceptualHash], threshold: u32) -> Result<KeyframeSelection> {
    if hashes.is_empty() {
        return Err(Error::Empty("no frames to deduplicate"));
    }
    let mut kept: Vec<usize> = Vec::new();
    for (t, &h) in hashes.iter().enumerate() {
        if kept.iter().all(|&k| hamming(hashes[k], h) > threshold) {
            kept.push(t);
        }
    }
    Ok(KeyframeSelection { kept, threshold })
}

pub fn dedup(frames: &[Frame], threshold: u32) -> Result<KeyframeSelection> {
    let hashes: Vec<_> = frames.iter().map(phash).collect();
    dedup_hashes(&hashes, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_frame(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::new(w, h, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap()
    }

    /// Direct O(n^4) evaluation of the orthonormal 2-D DCT-II.
    fn dct_oracle(x: &[f64], n: usize) -> Vec<f64> {
        let a = |k: usize| {
            if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            }
        };
        let pi = std::f64::consts::PI;
        let mut out = vec![0.0; n * n];
        for u in 0..n {
            for v in 0..n {
                let mut s = 0.0;
                for r in 0..n {
                    for c in 0..n {
                        s += x[r * n + c]
                            * ((pi * (2 * r + 1) as f64 * u as f64) / (2.0 * n as f64)).cos()
                            * ((pi * (2 * c + 1) as f64 * v as f64) / (2.0 * n as f64)).cos();
                    }
                }
                out[u * n + v] = a(u) * a(v) * s;
            }
        }
        out
    }

    #[test]
    fn separable_dct_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..255.0)).collect();
        let fast = dct2d(&x, 8);
        let slow = dct_oracle(&x, 8);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn dct_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = dct2d(&x, 32);
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ey: f64 = y.iter().map(|v| v * v).sum();
        assert!((ex - ey).abs() < 1e-9 * ex);
    }

    #[test]
    fn uniform_frame_sets_only_dc() {
        for gray in [1u8, 77, 128, 255] {
            let h = phash(&Frame::filled(48, 40, [gray; 3]).unwrap());
            assert_eq!(h.0, 1, "gray level {gray}");
        }
        // black has no positive coefficient at all
        assert_eq!(phash(&Frame::filled(8, 8, [0; 3]).unwrap()).0, 0);
    }

    #[test]
    fn hamming_examples() {
        let h = PerceptualHash(0xdead_beef);
        assert_eq!(hamming(h, h), 0);
        assert_eq!(hamming(PerceptualHash(0), PerceptualHash(u64::MAX)), 64);
        assert_eq!(hamming(PerceptualHash(0b1010), PerceptualHash(0b0110)), 2);
    }

    #[test]
    fn one_pixel_change_is_near() {
        for seed in 0..8 {
            let f = noise_frame(64, 64, seed);
            let mut g = f.clone();
            let mut p = g.pixel(10, 20);
            p[1] = if p[1] == 255 { 254 } else { p[1] + 1 };
            g.set_pixel(10, 20, p);
            let d = hamming(phash(&f), phash(&g));
            assert!(d <= DEFAULT_HAMMING_THRESHOLD, "seed {seed}: distance {d}");
        }
    }

    #[test]
    fn scale_invariance_before_dct() {
        let f = noise_frame(40, 30, 11);
        let g = to_grayscale::<f64>(&f);
        let base = phash_gray(&g);
        for alpha in [0.5, 2.0, 3.0, 0.1] {
            assert_eq!(phash_gray(&g.scaled(alpha)), base, "alpha {alpha}");
        }
    }

    #[test]
    fn dedup_examples() {
        let a = noise_frame(32, 32, 1);
        let b = noise_frame(32, 32, 2);
        assert_eq!(dedup(&[a.clone(), a.clone()], 12).unwrap().kept, vec![0]);
        assert_eq!(
            dedup(&[a.clone(), b.clone(), a.clone()], 64).unwrap().kept,
            vec![0]
        );
        let sel = dedup(&[a.clone(), b.clone(), a.clone(), b.clone()], 0).unwrap();
        assert_eq!(sel.kept, vec![0, 1]);
        assert!(matches!(dedup(&[], 12), Err(Error::Empty(_))));
    }

    #[test]
    fn f32_and_f64_agree_on_noise() {
        let f = noise_frame(64, 64, 5);
        let h64 = phash(&f);
        let h32 = phash_gray(&to_grayscale::<f32>(&f));
        assert!(hamming(h64, h32) <= 2);
    }
}
