//! Image and mask rasters, their netpbm file formats, and the resampling
//! primitives used by hashing and segmentation.

mod ops;
mod pnm;

pub use ops::{pad_replicate, resize_area, to_grayscale};
pub use pnm::{
    decode_frame, decode_mask, encode_frame, encode_mask, load_frame, load_mask, save_frame,
    save_mask,
};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of color channels in a [`Frame`].
pub const CHANNELS: usize = 3;

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions(format!("{width}x{height} raster")));
    }
    Ok(())
}

/// 8-bit RGB raster, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * CHANNELS {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} frame needs {} samples, got {}",
                width,
                height,
                width * height * CHANNELS,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Frame filled with a single color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        check_dims(width, height)?;
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * CHANNELS;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Single-channel floating-point raster with values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayRaster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> GrayRaster<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} gray raster needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v * factor).collect(),
        }
    }

    pub fn mean(&self) -> T {
        self.data.iter().copied().sum::<T>() / T::from_usize_lossy(self.data.len())
    }
}

/// Per-pixel class index raster. `0` is background.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskMap {
    width: usize,
    height: usize,
    data: Vec<u16>,
}

impl MaskMap {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} mask needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, class: u16) -> Result<Self> {
        Self::new(width, height, vec![class; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, class: u16) {
        self.data[y * self.width + x] = class;
    }

    pub fn max_class(&self) -> u16 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Fails if any index exceeds `max_class`.
    pub fn check_classes(&self, max_class: u16) -> Result<()> {
        match self.data.iter().find(|&&c| c > max_class) {
            Some(&c) => Err(Error::InvalidConfig(format!(
                "mask class {c} exceeds class count {max_class}"
            ))),
            None => Ok(()),
        }
    }

    pub fn same_dims<T>(&self, other: &ProbMap<T>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-pixel class probability field with `classes` entries per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap<T> {
    width: usize,
    height: usize,
    classes: usize,
    data: Vec<T>,
}

impl<T: Scalar> ProbMap<T> {
    pub fn new(width: usize, height: usize, classes: usize, data: Vec<T>) -> Result<Self> {
        check_dims(width, height)?;
        if classes == 0 {
            return Err(Error::InvalidDimensions("zero classes".into()));
        }
        if data.len() != width * height * classes {
            return Err(Error::DimensionMismatch(format!(
                "{}x{}x{} probability map needs {} samples, got {}",
                width,
                height,
                classes,
                width * height * classes,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            classes,
            data,
        })
    }

    /// One-hot probabilities from a hard mask.
    pub fn one_hot(mask: &MaskMap, classes: usize) -> Result<Self> {
        let mut data = vec![T::zero(); mask.width * mask.height * classes];
        for (i, &c) in mask.data.iter().enumerate() {
            let c = c as usize;
            if c >= classes {
                return Err(Error::InvalidConfig(format!(
                    "mask class {c} outside {classes} classes"
                )));
            }
            data[i * classes + c] = T::one();
        }
        Self::new(mask.width, mask.height, classes, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let i = (y * self.width + x) * self.classes;
        &self.data[i..i + self.classes]
    }

    #[inline]
    pub fn prob(&self, pixel_index: usize, class: usize) -> T {
        self.data[pixel_index * self.classes + class]
    }

    /// Per-pixel argmax, ties resolved toward the lowest class index.
    pub fn argmax(&self) -> MaskMap {
        let data = self
            .data
            .chunks_exact(self.classes)
            .map(|p| argmax_lowest(p) as u16)
            .collect();
        MaskMap {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Index of the largest entry; the first one wins on ties.
pub fn argmax_lowest<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
