use super::{Frame, GrayRaster};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// BT.601 luma of every pixel.
pub fn to_grayscale<T: Scalar>(frame: &Frame) -> GrayRaster<T> {
    let [wr, wg, wb] = LUMA.map(T::lit);
    let data = frame
        .data()
        .chunks_exact(3)
        .map(|p| {
            wr * T::lit(f64::from(p[0]))
                + wg * T::lit(f64::from(p[1]))
                + wb * T::lit(f64::from(p[2]))
        })
        .collect();
    GrayRaster::new(frame.width(), frame.height(), data).expect("dims preserved")
}

/// Overlap of each output cell with the source cells along one axis.
/// The output cell `o` back-projects to `[o * src / dst, (o + 1) * src / dst)`.
fn area_weights<T: Scalar>(src: usize, dst: usize) -> Vec<Vec<(usize, T)>> {
    (0..dst)
        .map(|o| {
            // numerators over a common denominator `dst` keep boundaries exact
            let lo = o * src;
            let hi = (o + 1) * src;
            let first = lo / dst;
            let last = (hi - 1) / dst;
            (first..=last)
                .map(|s| {
                    let cell_lo = (s * dst).max(lo);
                    let cell_hi = ((s + 1) * dst).min(hi);
                    (s, T::from_usize_lossy(cell_hi - cell_lo))
                })
                .collect()
        })
        .collect()
}

/// Box-filter downsampling (or upsampling): every output pixel is the
/// area-weighted mean of the source pixels under its footprint.
pub fn resize_area<T: Scalar>(
    g: &GrayRaster<T>,
    out_w: usize,
    out_h: usize,
) -> Result<GrayRaster<T>> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidDimensions(format!(
            "resize target {out_w}x{out_h}"
        )));
    }
    let wx = area_weights::<T>(g.width(), out_w);
    let wy = area_weights::<T>(g.height(), out_h);
    // Each footprint spans `src` units out of `dst` on its axis.
    let norm = T::from_usize_lossy(g.width()) * T::from_usize_lossy(g.height());
    let mut out = Vec::with_capacity(out_w * out_h);
    for ry in &wy {
        for rx in &wx {
            let mut acc = T::zero();
            for &(sy, ay) in ry {
                let mut row = T::zero();
                for &(sx, ax) in rx {
                    row += ax * g.get(sx, sy);
                }
                acc += ay * row;
            }
            out.push(acc / norm);
        }
    }
    GrayRaster::new(out_w, out_h, out)
}

/// Grows `frame` to `target_w x target_h` by copying the last column and row
/// outward. Pixels inside the original extent are untouched.
pub fn pad_replicate(frame: &Frame, target_w: usize, target_h: usize) -> Result<Frame> {
    if target_w < frame.width() || target_h < frame.height() {
        return Err(Error::InvalidDimensions(format!(
            "cannot pad {}x{} down to {}x{}",
            frame.width(),
            frame.height(),
            target_w,
            target_h
        )));
    }
    if target_w == frame.width() && target_h == frame.height() {
        return Ok(frame.clone());
    }
    let mut data = Vec::with_capacity(target_w * target_h * 3);
    for y in 0..target_h {
        let sy = y.min(frame.height() - 1);
        for x in 0..target_w {
            let sx = x.min(frame.width() - 1);
            data.extend_from_slice(&frame.pixel(sx, sy));
        }
    }
    Frame::new(target_w, target_h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn luma_examples() {
        let f = Frame::new(3, 1, vec![255, 255, 255, 0, 0, 0, 255, 0, 0]).unwrap();
        let g = to_grayscale::<f64>(&f);
        assert!((g.get(0, 0) - 255.0).abs() < 1e-12);
        assert_eq!(g.get(1, 0), 0.0);
        assert!((g.get(2, 0) - 0.299 * 255.0).abs() < 1e-12);
        assert!((g.get(2, 0) - 76.245).abs() < 1e-12);
    }

    #[test]
    fn constant_resize() {
        let g = GrayRaster::constant(64, 64, 10.0f64).unwrap();
        let r = resize_area(&g, 32, 32).unwrap();
        assert!(r.data().iter().all(|&v| (v - 10.0).abs() < 1e-12));
    }

    #[test]
    fn two_to_one() {
        let g = GrayRaster::new(2, 1, vec![0.0f64, 255.0]).unwrap();
        assert_eq!(resize_area(&g, 1, 1).unwrap().data(), &[127.5]);
    }

    #[test]
    fn checkerboard_to_single_pixel() {
        // 5 white, 4 black: 5 * 255 / 9
        let data: Vec<f64> = (0..9)
            .map(|i| if i % 2 == 0 { 255.0 } else { 0.0 })
            .collect();
        let g = GrayRaster::new(3, 3, data).unwrap();
        let r = resize_area(&g, 1, 1).unwrap();
        assert!((r.data()[0] - 1275.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn fractional_footprints() {
        // 3 -> 2: cells [0, 1.5) and [1.5, 3)
        let g = GrayRaster::new(3, 1, vec![0.0f64, 3.0, 6.0]).unwrap();
        let r = resize_area(&g, 2, 1).unwrap();
        assert!((r.data()[0] - 1.0).abs() < 1e-12);
        assert!((r.data()[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_target_rejected() {
        let g = GrayRaster::constant(2, 2, 1.0f32).unwrap();
        assert!(resize_area(&g, 0, 1).is_err());
    }

    #[test]
    fn pad_examples() {
        let f = Frame::new(2, 2, (0..12).collect()).unwrap();
        assert_eq!(pad_replicate(&f, 2, 2).unwrap(), f);
        let p = pad_replicate(&f, 3, 2).unwrap();
        for y in 0..2 {
            assert_eq!(p.pixel(2, y), p.pixel(1, y));
            assert_eq!(p.pixel(0, y), f.pixel(0, y));
        }
        let red = Frame::filled(1, 1, [255, 0, 0]).unwrap();
        assert_eq!(
            pad_replicate(&red, 3, 3).unwrap(),
            Frame::filled(3, 3, [255, 0, 0]).unwrap()
        );
        assert!(pad_replicate(&f, 1, 2).is_err());
    }

    proptest! {
        #[test]
        fn resize_preserves_mean_on_even_division(
            fx in 1usize..5, fy in 1usize..5, ow in 1usize..6, oh in 1usize..6,
            vals in proptest::collection::vec(0.0f64..255.0, 600)
        ) {
            let (w, h) = (ow * fx, oh * fy);
            let g = GrayRaster::new(w, h, vals[..w * h].to_vec()).unwrap();
            let r = resize_area(&g, ow, oh).unwrap();
            prop_assert!((r.mean() - g.mean()).abs() < 1e-9);
        }

        #[test]
        fn pad_is_idempotent(w in 1usize..6, h in 1usize..6, tw in 0usize..4, th in 0usize..4) {
            let f = Frame::new(w, h, (0..w * h * 3).map(|i| (i * 37 % 256) as u8).collect()).unwrap();
            let once = pad_replicate(&f, w + tw, h + th).unwrap();
            let twice = pad_replicate(&once, w + tw, h + th).unwrap();
            prop_assert_eq!(&once, &twice);
            for y in 0..h {
                for x in 0..w {
                    prop_assert_eq!(once.pixel(x, y), f.pixel(x, y));
                }
            }
        }
    }
}
