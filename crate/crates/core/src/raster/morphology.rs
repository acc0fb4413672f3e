//! Binary morphology with Euclidean disk structuring elements, and disk stamping.
//!
//! A pixel offset `(dx, dy)` belongs to the disk of radius `r` iff
//! `dx² + dy² <= r²` (distance between pixel centres).

use super::distance::squared_distance_to;
use super::{BinaryMask, ScalarMap};

/// Offsets of the Euclidean disk of radius `radius`, in row-major order.
pub fn disk_offsets(radius: f64) -> Vec<(isize, isize)> {
    let r = radius.max(0.0);
    let reach = r.floor() as isize;
    let mut out = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if ((dx * dx + dy * dy) as f64) <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Morphological dilation by a disk of `radius` pixels.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let limit = (radius * radius) as f64;
    let sq = squared_distance_to(mask, false);
    let (w, h) = mask.dims();
    BinaryMask { width: w, height: h, bits: sq.into_iter().map(|d| d <= limit).collect() }
}

/// Morphological erosion by a disk of `radius` pixels. Pixels outside the
/// raster count as false, so erosion also eats in from the image border.
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let limit = (radius * radius) as f64;
    let sq = squared_distance_to(&mask.not(), true);
    let (w, h) = mask.dims();
    BinaryMask { width: w, height: h, bits: sq.into_iter().map(|d| d > limit).collect() }
}

/// Sets every pixel within `radius` of `(x, y)` to `value`, clipped at the borders.
pub fn stamp_disk(map: &mut ScalarMap, x: usize, y: usize, radius: f64, value: f32) {
    let (w, h) = map.dims();
    for (dx, dy) in disk_offsets(radius) {
        let (px, py) = (x as isize + dx, y as isize + dy);
        if px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
            map.set(px as usize, py as usize, value);
        }
    }
}
