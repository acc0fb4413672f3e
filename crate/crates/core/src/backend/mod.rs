//! Segmentor / Refiner contracts and the logit fusion that combines them.
//!
//! The Segmentor sees the Target Crop (image, previous mask, positive and
//! negative click maps) and emits coarse logits plus a feature stack. The
//! Refiner sees the Focus Crop together with RoIAligned features and coarse
//! logits and emits a Detail Map and a Boundary Map. Every tensor carries the
//! [`CropSpec`] it was cut with so test backends can resample ground truth
//! into the same frame; real networks ignore it.

mod external;
#[cfg(feature = "onnx")]
mod onnx;
mod oracle;

pub use external::{load_external_backend, ExternalBackend, InferenceRuntime, IoSpec, Tensor};
pub use oracle::{ConstantBackend, NoiseConfig, NoisyOracleBackend, OracleBackend};

use crate::crop::CropSpec;
use crate::error::{BackendError, RasterError};
use crate::raster::{BinaryMask, ImagePlanes, Interpolation, ScalarMap};

/// Magnitude of the saturated logits emitted by test backends.
pub const ORACLE_LOGIT: f32 = 10.0;
/// Downsampling factor used to derive boundary supervision targets.
pub const BOUNDARY_DOWNSAMPLE: usize = 8;

#[derive(Clone, Debug)]
pub struct SegmentorInput {
    pub image: ImagePlanes,
    pub prev_mask: BinaryMask,
    pub pos_clicks: ScalarMap,
    pub neg_clicks: ScalarMap,
    pub crop: CropSpec,
}

#[derive(Clone, Debug)]
pub struct CoarseOutput {
    /// Coarse logits at segmentor resolution.
    pub logits: ScalarMap,
    /// Feature channels at `1 / feature_stride` of the segmentor resolution.
    pub feature: Vec<ScalarMap>,
    pub feature_stride: usize,
}

#[derive(Clone, Debug)]
pub struct RefinerInput {
    pub image: ImagePlanes,
    pub pos_clicks: ScalarMap,
    pub neg_clicks: ScalarMap,
    /// RoIAligned feature channels at `1 / feature_stride` of refiner resolution.
    pub roi_feature: Vec<ScalarMap>,
    /// RoIAligned coarse logits at refiner resolution.
    pub roi_logits: ScalarMap,
    pub crop: CropSpec,
}

#[derive(Clone, Debug)]
pub struct RefineOutput {
    pub detail: ScalarMap,
    pub boundary: ScalarMap,
}

/// A segmentation model pair. Implementations are immutable once built and
/// must be callable from several threads at once.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn segment(&self, input: &SegmentorInput) -> Result<CoarseOutput, BackendError>;

    fn refine(&self, input: &RefinerInput) -> Result<RefineOutput, BackendError>;
}

fn shape_check(tensor: &str, expected: (usize, usize), got: (usize, usize)) -> Result<(), BackendError> {
    if expected != got {
        return Err(BackendError::ShapeMismatch {
            tensor: tensor.to_string(),
            expected: vec![expected.1, expected.0],
            got: vec![got.1, got.0],
        });
    }
    Ok(())
}

impl SegmentorInput {
    /// Checks that every tensor is at the crop's output resolution.
    pub fn validate(&self) -> Result<(), BackendError> {
        let want = self.crop.out_dims();
        shape_check("image", want, self.image.dims())?;
        shape_check("prev_mask", want, self.prev_mask.dims())?;
        shape_check("pos_clicks", want, self.pos_clicks.dims())?;
        shape_check("neg_clicks", want, self.neg_clicks.dims())
    }
}

impl RefinerInput {
    pub fn validate(&self) -> Result<(), BackendError> {
        let want = self.crop.out_dims();
        shape_check("image", want, self.image.dims())?;
        shape_check("pos_clicks", want, self.pos_clicks.dims())?;
        shape_check("neg_clicks", want, self.neg_clicks.dims())?;
        shape_check("roi_logits", want, self.roi_logits.dims())
    }
}

impl CoarseOutput {
    pub fn validate(&self, crop: &CropSpec) -> Result<(), BackendError> {
        shape_check("logits", crop.out_dims(), self.logits.dims())?;
        let s = self.feature_stride.max(1);
        if crop.out_w % s != 0 || crop.out_h % s != 0 {
            return Err(BackendError::ShapeMismatch {
                tensor: "feature".into(),
                expected: vec![crop.out_h, crop.out_w],
                got: vec![crop.out_h / s, crop.out_w / s],
            });
        }
        for f in &self.feature {
            shape_check("feature", (crop.out_w / s, crop.out_h / s), f.dims())?;
        }
        Ok(())
    }
}

impl RefineOutput {
    pub fn validate(&self, crop: &CropSpec) -> Result<(), BackendError> {
        shape_check("detail", crop.out_dims(), self.detail.dims())?;
        shape_check("boundary", crop.out_dims(), self.boundary.dims())
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Refined logits `sigmoid(M_b) * M_d + (1 - sigmoid(M_b)) * M_l`.
///
/// Evaluated as `M_l + sigmoid(M_b) * (M_d - M_l)` in `f64`, so equal inputs
/// pass through unchanged and the result never leaves `[min, max]` of the two.
pub fn fuse(boundary: &ScalarMap, detail: &ScalarMap, coarse: &ScalarMap) -> Result<ScalarMap, RasterError> {
    boundary.same_dims(detail)?;
    boundary.same_dims(coarse)?;
    let values = boundary
        .as_slice()
        .iter()
        .zip(detail.as_slice())
        .zip(coarse.as_slice())
        .map(|((&b, &d), &l)| {
            let (d, l) = (d as f64, l as f64);
            (l + sigmoid(b as f64) * (d - l)) as f32
        })
        .collect();
    ScalarMap::from_vec(boundary.width(), boundary.height(), values)
}

/// Pixels that change when `gt` is nearest-downsampled by 8 and resized back.
pub fn boundary_target(gt: &BinaryMask) -> BinaryMask {
    let (w, h) = gt.dims();
    let small_w = ((w as f64 / BOUNDARY_DOWNSAMPLE as f64).round() as usize).max(1);
    let small_h = ((h as f64 / BOUNDARY_DOWNSAMPLE as f64).round() as usize).max(1);
    let round_trip = gt.resize(small_w, small_h).resize(w, h);
    crate::raster::xor_diff(gt, &round_trip).expect("same dims")
}

/// Stride-`stride` feature stack of (logits, image mean, positive map, negative map).
pub(crate) fn summary_features(input: &SegmentorInput, logits: &ScalarMap, stride: usize) -> Vec<ScalarMap> {
    let (w, h) = (input.crop.out_w / stride, input.crop.out_h / stride);
    [logits.clone(), input.image.luminance_mean(), input.pos_clicks.clone(), input.neg_clicks.clone()]
        .iter()
        .map(|m| m.resize(w, h, Interpolation::Bilinear))
        .collect()
}
