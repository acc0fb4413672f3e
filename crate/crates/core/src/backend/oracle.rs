//! Ground-truth-driven test backends.
//!
//! These isolate pipeline logic from learned models: the oracle segments by
//! resampling the ground truth into the crop frame, the noisy oracle degrades
//! that prediction in controlled ways, and the constant backend predicts the
//! same logit everywhere.

use rand::Rng;

use super::{
    boundary_target, summary_features, Backend, CoarseOutput, RefineOutput, RefinerInput,
    SegmentorInput, ORACLE_LOGIT,
};
use crate::crop::crop_mask;
use crate::error::BackendError;
use crate::raster::{disk_offsets, squared_distance_to, stamp_disk, BinaryMask, ScalarMap};
use crate::seed::rng_for;

const FEATURE_STRIDE: usize = 4;

fn gt_logits(gt: &BinaryMask, input_crop: &crate::crop::CropSpec) -> (BinaryMask, ScalarMap) {
    let local = crop_mask(gt, input_crop);
    let logits = local.to_logits(ORACLE_LOGIT);
    (local, logits)
}

/// Refiner shared by the oracle backends: the Detail Map is the ground truth
/// in the Focus Crop and the Boundary Map opens the gate on its boundary target.
fn oracle_refine(gt: &BinaryMask, input: &RefinerInput) -> Result<RefineOutput, BackendError> {
    input.validate()?;
    let (local, detail) = gt_logits(gt, &input.crop);
    let boundary = boundary_target(&local).to_logits(ORACLE_LOGIT);
    Ok(RefineOutput { detail, boundary })
}

/// Predicts `+10` on ground-truth pixels and `-10` elsewhere.
#[derive(Clone, Debug)]
pub struct OracleBackend {
    gt: BinaryMask,
}

impl OracleBackend {
    pub fn new(gt: BinaryMask) -> Self {
        Self { gt }
    }
}

impl Backend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn segment(&self, input: &SegmentorInput) -> Result<CoarseOutput, BackendError> {
        input.validate()?;
        let (_, logits) = gt_logits(&self.gt, &input.crop);
        let feature = summary_features(input, &logits, FEATURE_STRIDE);
        Ok(CoarseOutput { logits, feature, feature_stride: FEATURE_STRIDE })
    }

    fn refine(&self, input: &RefinerInput) -> Result<RefineOutput, BackendError> {
        oracle_refine(&self.gt, input)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Radius (segmentor pixels) of the disk blur applied to the ground truth.
    pub blur_radius: f64,
    /// Probability that a segmentation call adds one spurious blob.
    pub blob_rate: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { blur_radius: 2.0, blob_rate: 0.2, seed: 0 }
    }
}

/// Oracle whose coarse prediction is degraded.
///
/// The ground truth in the crop is box-averaged over a disk of
/// `blur_radius` and mapped to logits, which rounds corners and drops thin
/// parts after thresholding. With probability `blob_rate` a false-positive
/// disk of radius 5-12% of the crop side is added away from the object. The
/// random stream is a pure function of the seed and the call's crop and
/// clicks, so identical calls give identical outputs. Refinement is exact.
#[derive(Clone, Debug)]
pub struct NoisyOracleBackend {
    gt: BinaryMask,
    noise: NoiseConfig,
}

impl NoisyOracleBackend {
    pub fn new(gt: BinaryMask, noise: NoiseConfig) -> Self {
        Self { gt, noise }
    }

    fn blurred_logits(&self, local: &BinaryMask) -> ScalarMap {
        let (w, h) = local.dims();
        let offsets = disk_offsets(self.noise.blur_radius);
        ScalarMap::from_fn(w, h, |x, y| {
            let (mut on, mut n) = (0usize, 0usize);
            for &(dx, dy) in &offsets {
                let (px, py) = (x as isize + dx, y as isize + dy);
                if px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                    n += 1;
                    on += local.get(px as usize, py as usize) as usize;
                }
            }
            ORACLE_LOGIT * (2.0 * on as f32 / n as f32 - 1.0)
        })
    }

    fn add_blob(&self, input: &SegmentorInput, local: &BinaryMask, logits: &mut ScalarMap) {
        let b = input.crop.bbox;
        let click_sums = [input.pos_clicks.as_slice(), input.neg_clicks.as_slice()]
            .map(|m| m.iter().map(|&v| v as f64).sum::<f64>().to_le_bytes());
        let mut rng = rng_for(
            self.noise.seed,
            &[b"segment", &bytes_of(&b.to_array()), &click_sums[0], &click_sums[1]],
        );
        if rng.random::<f64>() >= self.noise.blob_rate {
            return;
        }
        let (w, h) = local.dims();
        let side = w.min(h) as f64;
        let radius = rng.random_range(0.05..0.12) * side;
        let dist = squared_distance_to(local, false);
        for _ in 0..20 {
            let (cx, cy) = (rng.random_range(0..w), rng.random_range(0..h));
            let clear = radius + 2.0;
            if dist[cy * w + cx] > clear * clear {
                stamp_disk(logits, cx, cy, radius, ORACLE_LOGIT);
                return;
            }
        }
    }
}

fn bytes_of(v: &[usize; 4]) -> Vec<u8> {
    v.iter().flat_map(|x| (*x as u64).to_le_bytes()).collect()
}

impl Backend for NoisyOracleBackend {
    fn name(&self) -> &str {
        "noisy"
    }

    fn segment(&self, input: &SegmentorInput) -> Result<CoarseOutput, BackendError> {
        input.validate()?;
        let local = crop_mask(&self.gt, &input.crop);
        let mut logits = self.blurred_logits(&local);
        if self.noise.blob_rate > 0.0 {
            self.add_blob(input, &local, &mut logits);
        }
        let feature = summary_features(input, &logits, FEATURE_STRIDE);
        Ok(CoarseOutput { logits, feature, feature_stride: FEATURE_STRIDE })
    }

    fn refine(&self, input: &RefinerInput) -> Result<RefineOutput, BackendError> {
        oracle_refine(&self.gt, input)
    }
}

/// Emits one logit value everywhere and keeps the refinement gate closed.
#[derive(Clone, Debug)]
pub struct ConstantBackend {
    logit: f32,
}

impl ConstantBackend {
    pub fn new(logit: f32) -> Self {
        Self { logit }
    }

    /// Always predicts background.
    pub fn empty() -> Self {
        Self::new(-ORACLE_LOGIT)
    }
}

impl Backend for ConstantBackend {
    fn name(&self) -> &str {
        "empty"
    }

    fn segment(&self, input: &SegmentorInput) -> Result<CoarseOutput, BackendError> {
        input.validate()?;
        let (w, h) = input.crop.out_dims();
        let logits = ScalarMap::filled(w, h, self.logit);
        let feature = summary_features(input, &logits, FEATURE_STRIDE);
        Ok(CoarseOutput { logits, feature, feature_stride: FEATURE_STRIDE })
    }

    fn refine(&self, input: &RefinerInput) -> Result<RefineOutput, BackendError> {
        input.validate()?;
        let (w, h) = input.crop.out_dims();
        Ok(RefineOutput {
            detail: ScalarMap::filled(w, h, self.logit),
            boundary: ScalarMap::filled(w, h, -ORACLE_LOGIT),
        })
    }
}
