use crate::error::{Error, Result};

/// Shape and seed of a patch segmenter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SegmenterConfig {
    /// Side of each square patch, in pixels.
    pub patch_size: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    /// Food classes, not counting background; the head emits `classes + 1` scores.
    pub classes: usize,
    /// MLP hidden width as a multiple of `embed_dim`.
    pub mlp_ratio: usize,
    pub seed: u64,
    /// Patch grid the positional table is laid out for.
    pub pos_grid_w: usize,
    pub pos_grid_h: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            patch_size: 8,
            embed_dim: 64,
            layers: 2,
            heads: 4,
            classes: 1,
            mlp_ratio: 4,
            seed: 0,
            pos_grid_w: 8,
            pos_grid_h: 8,
        }
    }
}

impl SegmenterConfig {
    /// The small configuration used for gradient checks.
    pub fn tiny(seed: u64) -> Self {
        Self {
            patch_size: 4,
            embed_dim: 8,
            layers: 1,
            heads: 2,
            classes: 2,
            mlp_ratio: 4,
            seed,
            pos_grid_w: 2,
            pos_grid_h: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("patch_size", self.patch_size),
            ("embed_dim", self.embed_dim),
            ("layers", self.layers),
            ("heads", self.heads),
            ("mlp_ratio", self.mlp_ratio),
            ("pos_grid_w", self.pos_grid_w),
            ("pos_grid_h", self.pos_grid_h),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.classes > 255 {
            return Err(Error::InvalidConfig(format!(
                "{} classes do not fit 8-bit masks",
                self.classes
            )));
        }
        Ok(())
    }

    /// Flattened patch length `P * P * 3`.
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn hidden_dim(&self) -> usize {
        self.embed_dim * self.mlp_ratio
    }

    /// Output classes including background.
    pub fn outputs(&self) -> usize {
        self.classes + 1
    }

    /// Patch grid covering a `width x height` frame after edge padding.
    pub fn grid_for(&self, width: usize, height: usize) -> (usize, usize) {
        (
            width.div_ceil(self.patch_size),
            height.div_ceil(self.patch_size),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(SegmenterConfig::default().validate().is_ok());
        assert!(SegmenterConfig::tiny(0).validate().is_ok());
        let bad = SegmenterConfig {
            heads: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SegmenterConfig {
            patch_size: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn grid_rounds_up() {
        let c = SegmenterConfig::default();
        assert_eq!(c.grid_for(16, 16), (2, 2));
        assert_eq!(c.grid_for(17, 8), (3, 1));
    }
}
