//! Deterministic synthetic scenes with analytic ground truth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{save_frame, save_mask, Frame, MaskMap};

/// A textured background with a solid square sliding horizontally one
/// pixel per frame, bouncing between the left and right margins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SquareScene {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub side: usize,
    pub top: usize,
    pub seed: u64,
}

impl Default for SquareScene {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            frames: 60,
            side: 48,
            top: 8,
            seed: 0,
        }
    }
}

const SQUARE_RGB: [u8; 3] = [220, 40, 30];

impl SquareScene {
    /// Left edge of the square in frame `t`.
    pub fn square_x(&self, t: usize) -> usize {
        let span = self.width.saturating_sub(self.side);
        if span == 0 {
            return 0;
        }
        let phase = t % (2 * span);
        if phase <= span {
            phase
        } else {
            2 * span - phase
        }
    }

    fn background(&self) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut data = Vec::with_capacity(self.width * self.height * 3);
        for y in 0..self.height {
            for x in 0..self.width {
                let stripe = if (x / 4 + y / 4) % 2 == 0 { 60 } else { 0 };
                let g = 90 + stripe + rng.random_range(0..40u8);
                let b = 150 - stripe + rng.random_range(0..40u8);
                data.extend_from_slice(&[rng.random_range(0..30u8), g, b]);
            }
        }
        Frame::new(self.width, self.height, data).expect("scene dims are positive")
    }

    /// Ground-truth mask for frame `t`: class 1 inside the square.
    pub fn mask(&self, t: usize) -> MaskMap {
        let x0 = self.square_x(t);
        let mut m = MaskMap::filled(self.width, self.height, 0).expect("scene dims are positive");
        for y in self.top..(self.top + self.side).min(self.height) {
            for x in x0..(x0 + self.side).min(self.width) {
                m.set(x, y, 1);
            }
        }
        m
    }

    /// All frames and their ground-truth masks.
    pub fn render(&self) -> (Vec<Frame>, Vec<MaskMap>) {
        let bg = self.background();
        let mut frames = Vec::with_capacity(self.frames);
        let mut masks = Vec::with_capacity(self.frames);
        for t in 0..self.frames {
            let mask = self.mask(t);
            let mut f = bg.clone();
            for y in 0..self.height {
                for x in 0..self.width {
                    if mask.get(x, y) == 1 {
                        f.set_pixel(x, y, SQUARE_RGB);
                    }
                }
            }
            frames.push(f);
            masks.push(mask);
        }
        (frames, masks)
    }

    /// Writes `frames/NNNN.ppm` and `gt/NNNN.pgm` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let (frames, masks) = self.render();
        let fdir = dir.join("frames");
        let gdir = dir.join("gt");
        for d in [&fdir, &gdir] {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d.as_path(), e))?;
        }
        for (t, (f, m)) in frames.iter().zip(&masks).enumerate() {
            save_frame(f, fdir.join(format!("{t:04}.ppm")))?;
            save_mask(m, gdir.join(format!("{t:04}.pgm")))?;
        }
        Ok(())
    }
}
