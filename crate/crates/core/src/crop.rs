//! Target Crop / Focus Crop geometry, crop extraction, RoIAlign and paste-back.
//!
//! Boxes stay in continuous coordinates while they are expanded and clamped;
//! extraction rounds outward (`floor` on the min edge, `ceil` on the max edge)
//! so no mask pixel is ever cropped away. Crops are clamped at the image
//! border, never padded, and resized to the fixed network resolution without
//! preserving aspect ratio.

use serde::{Deserialize, Serialize};

use crate::error::RasterError;
use crate::raster::{
    component_bbox, component_containing, connected_components, resample_mask_region,
    resample_scalar_region, sample_bilinear, xor_diff, BBox, BinaryMask, Click, Connectivity,
    ImagePlanes, Interpolation, ScalarMap,
};

/// Expansion ratio applied to the Target Crop box.
pub const TARGET_CROP_RATIO: f64 = 1.4;
/// Expansion ratio applied to the Focus Crop box.
pub const FOCUS_CROP_RATIO: f64 = 1.4;
/// Smallest crop side in source pixels; smaller boxes are padded symmetrically.
pub const MIN_CROP_SIDE: usize = 16;
/// Side of the fallback Focus Crop square, as a fraction of the longer image side.
pub const FOCUS_FALLBACK_FRACTION: f64 = 0.3;

/// Network input resolutions of a model configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSeries {
    /// 128x128 segmentor, 256x256 refiner.
    S1,
    /// 256x256 segmentor, 256x256 refiner.
    #[default]
    S2,
}

impl ModelSeries {
    pub fn segmentor_input(self) -> (usize, usize) {
        match self {
            ModelSeries::S1 => (128, 128),
            ModelSeries::S2 => (256, 256),
        }
    }

    pub fn refiner_input(self) -> (usize, usize) {
        (256, 256)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelSeries::S1 => "s1",
            ModelSeries::S2 => "s2",
        }
    }
}

impl std::fmt::Display for ModelSeries {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelSeries {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(ModelSeries::S1),
            "s2" => Ok(ModelSeries::S2),
            other => Err(format!("unknown series {other:?}; expected one of s1, s2")),
        }
    }
}

/// Box in continuous pixel coordinates (pixel `i` spans `[i, i + 1)`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxF {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoxF {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn contains_box(&self, other: &BoxF) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1 <= self.x1 && other.y1 <= self.y1
    }

    /// Outward rounding to whole pixels, clamped to `bounds`; never empty.
    pub fn to_pixels(&self, bounds: BBox) -> BBox {
        let clampx = |v: f64| (v.max(bounds.x0 as f64).min(bounds.x1 as f64)) as usize;
        let clampy = |v: f64| (v.max(bounds.y0 as f64).min(bounds.y1 as f64)) as usize;
        let mut x0 = clampx(self.x0.floor());
        let mut y0 = clampy(self.y0.floor());
        let mut x1 = clampx(self.x1.ceil());
        let mut y1 = clampy(self.y1.ceil());
        if x1 <= x0 {
            x0 = x0.min(bounds.x1 - 1);
            x1 = x0 + 1;
        }
        if y1 <= y0 {
            y0 = y0.min(bounds.y1 - 1);
            y1 = y0 + 1;
        }
        BBox::new(x0, y0, x1, y1)
    }
}

impl From<BBox> for BoxF {
    fn from(b: BBox) -> Self {
        BoxF::new(b.x0 as f64, b.y0 as f64, b.x1 as f64, b.y1 as f64)
    }
}

/// Scales `b` about its centre by `ratio` and clamps the result to `bounds`.
pub fn expand_box(b: BoxF, ratio: f64, bounds: BBox) -> BoxF {
    let (cx, cy) = ((b.x0 + b.x1) / 2.0, (b.y0 + b.y1) / 2.0);
    let (hw, hh) = (b.width() * ratio / 2.0, b.height() * ratio / 2.0);
    BoxF::new(
        (cx - hw).max(bounds.x0 as f64),
        (cy - hh).max(bounds.y0 as f64),
        (cx + hw).min(bounds.x1 as f64),
        (cy + hh).min(bounds.y1 as f64),
    )
}

fn pad_axis(lo: usize, hi: usize, min: usize, blo: usize, bhi: usize) -> (usize, usize) {
    let len = hi - lo;
    let target = min.min(bhi - blo);
    if len >= target {
        return (lo, hi);
    }
    let grow = target - len;
    let mut start = lo.saturating_sub(grow / 2).max(blo);
    if start + target > bhi {
        start = bhi - target;
    }
    (start, start + target)
}

/// Pads `b` symmetrically so each side is at least `min` pixels (or the full
/// bounds extent when the image is smaller), shifting it back inside `bounds`.
pub fn enforce_min_side(b: BBox, min: usize, bounds: BBox) -> BBox {
    let (x0, x1) = pad_axis(b.x0, b.x1, min, bounds.x0, bounds.x1);
    let (y0, y1) = pad_axis(b.y0, b.y1, min, bounds.y0, bounds.y1);
    BBox::new(x0, y0, x1, y1)
}

/// Source rectangle plus the resolution it is resampled to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "CropSpecWire", from = "CropSpecWire")]
pub struct CropSpec {
    pub bbox: BBox,
    pub out_w: usize,
    pub out_h: usize,
    pub expand_ratio: f64,
}

/// Audit-log layout: `{"box":[x0,y0,x1,y1],"out":[w,h],"ratio":r}`.
#[derive(Serialize, Deserialize)]
struct CropSpecWire {
    #[serde(rename = "box")]
    bbox: [usize; 4],
    out: [usize; 2],
    ratio: f64,
}

impl From<CropSpec> for CropSpecWire {
    fn from(c: CropSpec) -> Self {
        CropSpecWire { bbox: c.bbox.to_array(), out: [c.out_w, c.out_h], ratio: c.expand_ratio }
    }
}

impl From<CropSpecWire> for CropSpec {
    fn from(w: CropSpecWire) -> Self {
        let [x0, y0, x1, y1] = w.bbox;
        CropSpec { bbox: BBox { x0, y0, x1, y1 }, out_w: w.out[0], out_h: w.out[1], expand_ratio: w.ratio }
    }
}

impl CropSpec {
    pub fn new(bbox: BBox, (out_w, out_h): (usize, usize), expand_ratio: f64) -> Self {
        Self { bbox, out_w, out_h, expand_ratio }
    }

    pub fn out_dims(&self) -> (usize, usize) {
        (self.out_w, self.out_h)
    }

    /// Box area over image area.
    pub fn area_ratio(&self, (w, h): (usize, usize)) -> f64 {
        self.bbox.area() as f64 / (w * h) as f64
    }

    /// Maps a continuous global coordinate into the crop's output frame.
    pub fn to_local(&self, gx: f64, gy: f64) -> (f64, f64) {
        (
            (gx - self.bbox.x0 as f64) * self.out_w as f64 / self.bbox.width() as f64,
            (gy - self.bbox.y0 as f64) * self.out_h as f64 / self.bbox.height() as f64,
        )
    }

    /// Maps a global box into the crop's output frame.
    pub fn local_box(&self, b: BoxF) -> BoxF {
        let (x0, y0) = self.to_local(b.x0, b.y0);
        let (x1, y1) = self.to_local(b.x1, b.y1);
        BoxF::new(x0, y0, x1, y1)
    }

    /// Output-frame pixel holding the centre of global pixel `(x, y)`, if inside the crop.
    pub fn local_pixel(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        if !self.bbox.contains(x, y) {
            return None;
        }
        let (lx, ly) = self.to_local(x as f64 + 0.5, y as f64 + 0.5);
        Some(((lx.floor() as usize).min(self.out_w - 1), (ly.floor() as usize).min(self.out_h - 1)))
    }
}

/// Target Crop: the box around the previous mask and the new click, expanded
/// by `ratio`. An empty previous mask leaves nothing to anchor on, so the whole
/// image is used.
pub fn target_crop(prev_mask: &BinaryMask, click: &Click, ratio: f64, series: ModelSeries) -> CropSpec {
    let bounds = prev_mask.bounds();
    let out = series.segmentor_input();
    let Some(mask_box) = prev_mask.bbox() else {
        return CropSpec::new(bounds, out, ratio);
    };
    let external = mask_box.union(&BBox::pixel(click.x, click.y));
    let expanded = expand_box(external.into(), ratio, bounds).to_pixels(bounds);
    CropSpec::new(enforce_min_side(expanded, MIN_CROP_SIDE, bounds), out, ratio)
}

/// Focus Crop: the box of the connected difference region (8-connected) between
/// the coarse prediction and the previous mask that contains the click,
/// expanded by `ratio`. `None` when the click is not on a difference pixel.
pub fn focus_crop(
    coarse_pred: &BinaryMask,
    prev_mask: &BinaryMask,
    click: &Click,
    ratio: f64,
    series: ModelSeries,
) -> Result<Option<CropSpec>, RasterError> {
    let diff = xor_diff(coarse_pred, prev_mask)?;
    if !diff.get(click.x, click.y) {
        return Ok(None);
    }
    let labels = connected_components(&diff, Connectivity::Eight);
    let Some(label) = component_containing(&labels, click.x, click.y) else {
        return Ok(None);
    };
    let bounds = prev_mask.bounds();
    let comp = component_bbox(&labels, label).expect("label has pixels");
    let expanded = expand_box(comp.into(), ratio, bounds).to_pixels(bounds);
    Ok(Some(CropSpec::new(enforce_min_side(expanded, MIN_CROP_SIDE, bounds), series.refiner_input(), ratio)))
}

/// Fallback Focus Crop: a square of side `0.3 * max(width, height)` centred on
/// the click, clamped to the image.
pub fn focus_fallback(click: &Click, (w, h): (usize, usize), series: ModelSeries) -> CropSpec {
    let bounds = BBox::full(w, h);
    let half = FOCUS_FALLBACK_FRACTION * w.max(h) as f64 / 2.0;
    let (cx, cy) = (click.x as f64 + 0.5, click.y as f64 + 0.5);
    let b = BoxF::new(cx - half, cy - half, cx + half, cy + half).to_pixels(bounds);
    CropSpec::new(enforce_min_side(b, MIN_CROP_SIDE, bounds), series.refiner_input(), 1.0)
}

pub fn crop_mask(mask: &BinaryMask, spec: &CropSpec) -> BinaryMask {
    resample_mask_region(mask, spec.bbox, spec.out_w, spec.out_h)
}

pub fn crop_scalar(map: &ScalarMap, spec: &CropSpec) -> ScalarMap {
    resample_scalar_region(map, spec.bbox, spec.out_w, spec.out_h, Interpolation::Bilinear)
}

pub fn crop_image(image: &ImagePlanes, spec: &CropSpec) -> ImagePlanes {
    image.map(|c| crop_scalar(c, spec))
}

/// RoIAlign with one bilinear sample at each bin centre.
///
/// `roi` is in the feature maps' continuous coordinates (pixel centres at
/// `i + 0.5`); samples outside the maps are clamped to the border.
pub fn roi_align(features: &[ScalarMap], roi: BoxF, out_w: usize, out_h: usize) -> Vec<ScalarMap> {
    let bw = roi.width() / out_w as f64;
    let bh = roi.height() / out_h as f64;
    features
        .iter()
        .map(|f| {
            ScalarMap::from_fn(out_w, out_h, |i, j| {
                let x = roi.x0 + (i as f64 + 0.5) * bw - 0.5;
                let y = roi.y0 + (j as f64 + 0.5) * bh - 0.5;
                sample_bilinear(f, x, y)
            })
        })
        .collect()
}

fn check_local(local: (usize, usize), spec: &CropSpec) -> Result<(), RasterError> {
    if local != spec.out_dims() {
        return Err(RasterError::DimensionMismatch { left: local, right: spec.out_dims() });
    }
    Ok(())
}

#[inline]
fn local_nearest(g: usize, origin: usize, span: usize, out: usize) -> usize {
    let l = ((g - origin) as f64 + 0.5) * out as f64 / span as f64;
    (l.floor() as usize).min(out - 1)
}

/// Writes `local` back into `dst` over `spec.bbox` (nearest), leaving every
/// other pixel untouched. Returns the written region.
pub fn paste_mask(dst: &mut BinaryMask, local: &BinaryMask, spec: &CropSpec) -> Result<BBox, RasterError> {
    let region = spec.bbox;
    paste_mask_within(dst, local, spec, region).map(|r| r.unwrap_or(region))
}

/// Like [`paste_mask`] but only writes inside `limit`. Returns the written
/// region, or `None` when the crop and `limit` do not overlap.
pub fn paste_mask_within(
    dst: &mut BinaryMask,
    local: &BinaryMask,
    spec: &CropSpec,
    limit: BBox,
) -> Result<Option<BBox>, RasterError> {
    check_local(local.dims(), spec)?;
    let Some(region) = spec.bbox.intersect(&limit).and_then(|r| r.intersect(&dst.bounds())) else {
        return Ok(None);
    };
    let b = spec.bbox;
    for gy in region.y0..region.y1 {
        let ly = local_nearest(gy, b.y0, b.height(), spec.out_h);
        for gx in region.x0..region.x1 {
            let lx = local_nearest(gx, b.x0, b.width(), spec.out_w);
            dst.set(gx, gy, local.get(lx, ly));
        }
    }
    Ok(Some(region))
}

/// Bilinear paste-back of a real-valued local map.
pub fn paste_scalar(dst: &mut ScalarMap, local: &ScalarMap, spec: &CropSpec) -> Result<BBox, RasterError> {
    check_local(local.dims(), spec)?;
    let b = spec.bbox;
    let sx = spec.out_w as f64 / b.width() as f64;
    let sy = spec.out_h as f64 / b.height() as f64;
    for gy in b.y0..b.y1 {
        let ly = ((gy - b.y0) as f64 + 0.5) * sy - 0.5;
        for gx in b.x0..b.x1 {
            let lx = ((gx - b.x0) as f64 + 0.5) * sx - 0.5;
            dst.set(gx, gy, sample_bilinear(local, lx, ly));
        }
    }
    Ok(b)
}

/// Mean crop-box area as a fraction of the image area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropAreaStats {
    pub target_mean: f64,
    pub focus_mean: f64,
    pub clicks: usize,
}

/// Averages per-click `(target_ratio, focus_ratio)` pairs; `None` for no clicks.
pub fn crop_area_stats(ratios: impl IntoIterator<Item = (f64, f64)>) -> Option<CropAreaStats> {
    let (mut t, mut f, mut n) = (0.0, 0.0, 0usize);
    for (tr, fr) in ratios {
        t += tr;
        f += fr;
        n += 1;
    }
    (n > 0).then(|| CropAreaStats { target_mean: t / n as f64, focus_mean: f / n as f64, clicks: n })
}
