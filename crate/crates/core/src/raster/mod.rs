//! Raster primitives shared by every stage of the pipeline.
//!
//! Masks, real-valued maps and label maps are stored row-major with the
//! pixel `(x, y)` at index `y * width + x`.

mod components;
mod distance;
pub mod io;
mod morphology;
mod resize;

pub use components::{
    component_bbox, component_containing, component_mask, component_sizes, connected_components,
    largest_component, Connectivity,
};
pub use distance::{distance_transform, squared_distance_to};
pub use morphology::{dilate, disk_offsets, erode, stamp_disk};
pub use resize::{
    resample_mask_region, resample_scalar_region, sample_bilinear, Interpolation,
};

use serde::{Deserialize, Serialize};

use crate::error::RasterError;

/// Axis-aligned pixel rectangle, half-open on the max edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        debug_assert!(x0 < x1 && y0 < y1, "empty box ({x0},{y0},{x1},{y1})");
        Self { x0, y0, x1, y1 }
    }

    /// Box covering a whole `width x height` raster.
    pub fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width, height)
    }

    /// One-pixel box.
    pub fn pixel(x: usize, y: usize) -> Self {
        Self::new(x, y, x + 1, y + 1)
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1 <= self.x1 && other.y1 <= self.y1
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox::new(
            self.x0.min(other.x0),
            self.y0.min(other.y0),
            self.x1.max(other.x1),
            self.y1.max(other.y1),
        )
    }

    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        (x0 < x1 && y0 < y1).then(|| BBox::new(x0, y0, x1, y1))
    }

    /// `[x0, y0, x1, y1]`, the wire layout used in audit records and HTTP responses.
    pub fn to_array(&self) -> [usize; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

/// Click polarity: positive marks foreground, negative marks background.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn is_positive(self) -> bool {
        matches!(self, Polarity::Positive)
    }
}

impl std::str::FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "positive" | "pos" | "+" => Ok(Polarity::Positive),
            "negative" | "neg" | "-" => Ok(Polarity::Negative),
            other => Err(format!("unknown polarity {other:?} (expected positive|negative)")),
        }
    }
}

/// A user click. `ordinal` is assigned by the session (1-based); `0` means unassigned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Click {
    pub x: usize,
    pub y: usize,
    pub polarity: Polarity,
    pub ordinal: u32,
}

impl Click {
    pub fn new(x: usize, y: usize, polarity: Polarity) -> Self {
        Self { x, y, polarity, ordinal: 0 }
    }

    pub fn positive(x: usize, y: usize) -> Self {
        Self::new(x, y, Polarity::Positive)
    }

    pub fn negative(x: usize, y: usize) -> Self {
        Self::new(x, y, Polarity::Negative)
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<(), RasterError> {
    if width == 0 || height == 0 {
        return Err(RasterError::EmptyRaster { width, height });
    }
    if width * height != len {
        return Err(RasterError::BufferLength { width, height, len });
    }
    Ok(())
}

/// Boolean raster: previous masks, ground truth, binarized predictions.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BinaryMask({}x{}", self.width, self.height)?;
        if self.width * self.height <= 256 {
            for row in self.bits.chunks(self.width) {
                f.write_str("\n  ")?;
                for &b in row {
                    f.write_str(if b { "#" } else { "." })?;
                }
            }
        } else {
            write!(f, ", {} set", self.count())?;
        }
        f.write_str(")")
    }
}

impl BinaryMask {
    /// All-false mask. Panics on a zero dimension.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn filled(width: usize, height: usize) -> Self {
        let mut m = Self::new(width, height);
        m.bits.fill(true);
        m
    }

    pub fn from_vec(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        check_dims(width, height, bits.len())?;
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    /// Mask with every pixel of `bbox` set.
    pub fn from_box(width: usize, height: usize, bbox: BBox) -> Self {
        Self::from_fn(width, height, |x, y| bbox.contains(x, y))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bounds(&self) -> BBox {
        BBox::full(self.width, self.height)
    }

    pub fn in_bounds(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn as_mut_slice(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    /// Number of true pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// `true` when no pixel is set.
    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Tight box around the true pixels.
    pub fn bbox(&self) -> Option<BBox> {
        let mut out: Option<BBox> = None;
        for y in 0..self.height {
            let row = &self.bits[y * self.width..(y + 1) * self.width];
            let Some(first) = row.iter().position(|&b| b) else { continue };
            let last = row.iter().rposition(|&b| b).unwrap_or(first);
            let b = BBox::new(first, y, last + 1, y + 1);
            out = Some(out.map_or(b, |o| o.union(&b)));
        }
        out
    }

    pub fn same_dims(&self, other: &BinaryMask) -> Result<(), RasterError> {
        if self.dims() != other.dims() {
            return Err(RasterError::DimensionMismatch { left: self.dims(), right: other.dims() });
        }
        Ok(())
    }

    /// Logical AND NOT: pixels set here and clear in `other`.
    pub fn and_not(&self, other: &BinaryMask) -> Result<BinaryMask, RasterError> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask, RasterError> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask, RasterError> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask { width: self.width, height: self.height, bits: self.bits.iter().map(|&b| !b).collect() }
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask, RasterError> {
        self.same_dims(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect();
        Ok(BinaryMask { width: self.width, height: self.height, bits })
    }

    /// Converts to a `{-v, +v}` logit map.
    pub fn to_logits(&self, v: f32) -> ScalarMap {
        ScalarMap {
            width: self.width,
            height: self.height,
            values: self.bits.iter().map(|&b| if b { v } else { -v }).collect(),
        }
    }

    /// Nearest-neighbour resize (align-corners = false).
    pub fn resize(&self, width: usize, height: usize) -> BinaryMask {
        resample_mask_region(self, self.bounds(), width, height)
    }
}

/// Intersection over union. Two empty masks score 1.0.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, RasterError> {
    a.same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.bits.iter().zip(&b.bits) {
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Pixel-wise exclusive or.
pub fn xor_diff(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask, RasterError> {
    a.zip_with(b, |p, q| p != q)
}

/// Real-valued raster: logits, detail/boundary maps, click maps, image planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, v: f32) -> Self {
        assert!(width > 0 && height > 0, "map dimensions must be positive");
        Self { width, height, values: vec![v; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, values: Vec<f32>) -> Result<Self, RasterError> {
        check_dims(width, height, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite { index: i });
        }
        Ok(Self { width, height, values })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.values[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bounds(&self) -> BBox {
        BBox::full(self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.values[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.values
    }

    /// Pixels strictly above `threshold`.
    pub fn threshold(&self, threshold: f32) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.values.iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn mean(&self) -> f32 {
        (self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64) as f32
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn same_dims(&self, other: &ScalarMap) -> Result<(), RasterError> {
        if self.dims() != other.dims() {
            return Err(RasterError::DimensionMismatch { left: self.dims(), right: other.dims() });
        }
        Ok(())
    }

    pub fn resize(&self, width: usize, height: usize, mode: Interpolation) -> ScalarMap {
        resample_scalar_region(self, self.bounds(), width, height, mode)
    }
}

/// Three colour planes of an RGB image as real-valued maps in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlanes {
    pub channels: [ScalarMap; 3],
}

impl ImagePlanes {
    pub fn from_rgb(img: &image::RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let plane = |c: usize| {
            ScalarMap::from_fn(w, h, |x, y| img.get_pixel(x as u32, y as u32).0[c] as f32 / 255.0)
        };
        Self { channels: [plane(0), plane(1), plane(2)] }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn map(&self, f: impl Fn(&ScalarMap) -> ScalarMap) -> Self {
        Self { channels: [f(&self.channels[0]), f(&self.channels[1]), f(&self.channels[2])] }
    }

    /// Per-pixel mean over the three channels.
    pub fn luminance_mean(&self) -> ScalarMap {
        let [r, g, b] = &self.channels;
        let (w, h) = self.dims();
        ScalarMap::from_fn(w, h, |x, y| (r.get(x, y) + g.get(x, y) + b.get(x, y)) / 3.0)
    }
}

/// Integer label raster. For component labelings 0 is background and the
/// foreground labels are contiguous `1..=count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: u32,
}

impl LabelMap {
    pub fn from_vec(width: usize, height: usize, labels: Vec<u32>) -> Result<Self, RasterError> {
        check_dims(width, height, labels.len())?;
        let count = labels.iter().copied().max().unwrap_or(0);
        Ok(Self { width, height, labels, count })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Largest label in use (the number of components for a labeling).
    pub fn count(&self) -> u32 {
        self.count
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_identity_disjoint_and_shifted() {
        let a = BinaryMask::from_box(4, 4, BBox::new(0, 0, 2, 2));
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let far = BinaryMask::from_box(4, 4, BBox::new(2, 2, 4, 4));
        assert_eq!(iou(&a, &far).unwrap(), 0.0);
        let shifted = BinaryMask::from_box(4, 4, BBox::new(1, 0, 3, 2));
        assert!((iou(&a, &shifted).unwrap() - 2.0 / 6.0).abs() < 1e-12);
        let empty = BinaryMask::new(4, 4);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn iou_rejects_dimension_mismatch() {
        let err = iou(&BinaryMask::new(3, 4), &BinaryMask::new(4, 3)).unwrap_err();
        assert!(matches!(err, RasterError::DimensionMismatch { .. }));
    }

    #[test]
    fn xor_of_halves() {
        let left = BinaryMask::from_box(4, 4, BBox::new(0, 0, 2, 4));
        let top = BinaryMask::from_box(4, 4, BBox::new(0, 0, 4, 2));
        let d = xor_diff(&left, &top).unwrap();
        assert_eq!(d.count(), 8);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(d.get(x, y), (x < 2) != (y < 2));
            }
        }
        assert!(xor_diff(&left, &left).unwrap().is_empty());
        let full = BinaryMask::filled(4, 4);
        assert_eq!(xor_diff(&full, &BinaryMask::new(4, 4)).unwrap(), full);
    }

    #[test]
    fn bbox_of_mask() {
        let mut m = BinaryMask::new(6, 5);
        assert_eq!(m.bbox(), None);
        m.set(1, 3, true);
        m.set(4, 1, true);
        assert_eq!(m.bbox(), Some(BBox::new(1, 1, 5, 4)));
    }

    #[test]
    fn constructors_validate() {
        assert!(BinaryMask::from_vec(0, 3, vec![]).is_err());
        assert!(BinaryMask::from_vec(2, 2, vec![true; 3]).is_err());
        assert!(ScalarMap::from_vec(1, 1, vec![f32::NAN]).is_err());
    }
}
