//! Resampling with the align-corners = false convention: output pixel `i` of
//! `n` covering a source span of length `len` starting at `x0` maps to the
//! continuous source coordinate `x0 + (i + 0.5) * len / n`.

use super::{BBox, BinaryMask, ScalarMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Nearest,
    Bilinear,
}

#[inline]
fn nearest_index(origin: usize, span: usize, out: usize, i: usize, limit: usize) -> usize {
    let src = origin + ((i as f64 + 0.5) * span as f64 / out as f64).floor() as usize;
    src.min(origin + span - 1).min(limit - 1)
}

/// Nearest-neighbour resample of `region` of `mask` to `out_w x out_h`.
pub fn resample_mask_region(mask: &BinaryMask, region: BBox, out_w: usize, out_h: usize) -> BinaryMask {
    let xs: Vec<usize> =
        (0..out_w).map(|i| nearest_index(region.x0, region.width(), out_w, i, mask.width())).collect();
    let mut out = BinaryMask::new(out_w, out_h);
    for j in 0..out_h {
        let sy = nearest_index(region.y0, region.height(), out_h, j, mask.height());
        for (i, &sx) in xs.iter().enumerate() {
            out.set(i, j, mask.get(sx, sy));
        }
    }
    out
}

/// Bilinear sample at continuous pixel-index coordinates, clamped to the raster.
#[inline]
pub fn sample_bilinear(map: &ScalarMap, x: f64, y: f64) -> f32 {
    let (w, h) = map.dims();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (xf, yf) = (x.floor(), y.floor());
    let (x0, y0) = (xf as usize, yf as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (ax, ay) = (x - xf, y - yf);
    let top = map.get(x0, y0) as f64 * (1.0 - ax) + map.get(x1, y0) as f64 * ax;
    let bottom = map.get(x0, y1) as f64 * (1.0 - ax) + map.get(x1, y1) as f64 * ax;
    (top * (1.0 - ay) + bottom * ay) as f32
}

/// Resample `region` of `map` to `out_w x out_h`.
pub fn resample_scalar_region(
    map: &ScalarMap,
    region: BBox,
    out_w: usize,
    out_h: usize,
    mode: Interpolation,
) -> ScalarMap {
    match mode {
        Interpolation::Nearest => {
            let mut out = ScalarMap::new(out_w, out_h);
            for j in 0..out_h {
                let sy = nearest_index(region.y0, region.height(), out_h, j, map.height());
                for i in 0..out_w {
                    let sx = nearest_index(region.x0, region.width(), out_w, i, map.width());
                    out.set(i, j, map.get(sx, sy));
                }
            }
            out
        }
        Interpolation::Bilinear => {
            let sx = region.width() as f64 / out_w as f64;
            let sy = region.height() as f64 / out_h as f64;
            ScalarMap::from_fn(out_w, out_h, |i, j| {
                let x = region.x0 as f64 + (i as f64 + 0.5) * sx - 0.5;
                let y = region.y0 as f64 + (j as f64 + 0.5) * sy - 0.5;
                sample_bilinear(map, x, y)
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker2() -> BinaryMask {
        BinaryMask::from_fn(2, 2, |x, y| (x + y) % 2 == 0)
    }

    #[test]
    fn same_size_is_identity() {
        let m = BinaryMask::from_fn(5, 3, |x, y| (x * 7 + y * 3) % 4 == 0);
        assert_eq!(m.resize(5, 3), m);
        let s = ScalarMap::from_fn(5, 3, |x, y| (x * 10 + y) as f32);
        assert_eq!(s.resize(5, 3, Interpolation::Bilinear), s);
        assert_eq!(s.resize(5, 3, Interpolation::Nearest), s);
    }

    #[test]
    fn checkerboard_upsamples_to_blocks() {
        let up = checker2().resize(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(up.get(x, y), (x / 2 + y / 2) % 2 == 0);
            }
        }
    }

    #[test]
    fn constant_stays_constant() {
        let s = ScalarMap::filled(3, 7, 2.5);
        let r = s.resize(11, 2, Interpolation::Bilinear);
        assert!(r.as_slice().iter().all(|&v| (v - 2.5).abs() < 1e-6));
    }

    #[test]
    fn bilinear_upsample_of_ramp() {
        // 2-pixel ramp [0, 1] doubled: samples at -0.25, 0.25, 0.75, 1.25 -> clamp, 0.25, 0.75, clamp
        let s = ScalarMap::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let r = s.resize(4, 1, Interpolation::Bilinear);
        assert_eq!(r.as_slice(), &[0.0, 0.25, 0.75, 1.0]);
    }
}
