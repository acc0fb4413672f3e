//! Defective initial masks built from superpixels.
//!
//! Starting from the ground truth, whole superpixels are flipped near the
//! boundary, added outside the object, or cut out of it until the IOU with the
//! ground truth falls into `[min_iou, max_iou)`. Overshooting below the band
//! restarts from the ground truth.

mod slic;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use slic::{rgb_to_lab, slic, SlicConfig};

use crate::error::{CorruptError, DatasetError};
use crate::eval::{Dataset, MIN_MASK_PIXELS};
use crate::raster::io::{encode_mask_png, save_mask};
use crate::raster::{dilate, erode, iou, BinaryMask, ImagePlanes, LabelMap};
use crate::seed::rng_for;

/// Superpixel counts drawn uniformly per defect.
pub const SLIC_SIZES: [usize; 6] = [50, 100, 200, 300, 500, 700];
/// Radius of the band around the object boundary eligible for boundary defects.
pub const BOUNDARY_BAND_RADIUS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorType {
    Boundary,
    External,
    Internal,
}

impl ErrorType {
    pub const ALL: [ErrorType; 3] = [ErrorType::Boundary, ErrorType::External, ErrorType::Internal];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectConfig {
    /// Probabilities of (boundary, external, internal) defects.
    pub error_probs: [f64; 3],
    pub min_iou: f64,
    pub max_iou: f64,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for DefectConfig {
    fn default() -> Self {
        Self { error_probs: [0.65, 0.25, 0.10], min_iou: 0.75, max_iou: 0.85, max_attempts: 50, seed: 0 }
    }
}

impl DefectConfig {
    pub fn validate(&self) -> Result<(), CorruptError> {
        let sum: f64 = self.error_probs.iter().sum();
        if self.error_probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(CorruptError::Config(format!("error_probs {:?} must be non-negative and sum to 1", self.error_probs)));
        }
        if !(0.0 < self.min_iou && self.min_iou < self.max_iou && self.max_iou <= 1.0) {
            return Err(CorruptError::Config(format!(
                "need 0 < min_iou < max_iou <= 1, got [{}, {})",
                self.min_iou, self.max_iou
            )));
        }
        if self.max_attempts == 0 {
            return Err(CorruptError::Config("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

/// `dilate(gt, r) & !erode(gt, r)`.
pub fn boundary_band(gt: &BinaryMask, radius: usize) -> BinaryMask {
    dilate(gt, radius).and_not(&erode(gt, radius)).expect("same dims")
}

/// Draws a defect type with the given (boundary, external, internal) probabilities.
pub fn sample_error_type(rng: &mut impl Rng, probs: &[f64; 3]) -> ErrorType {
    let u: f64 = rng.random();
    if u < probs[0] {
        ErrorType::Boundary
    } else if u < probs[0] + probs[1] {
        ErrorType::External
    } else {
        ErrorType::Internal
    }
}

#[derive(Default)]
struct SuperpixelStats {
    size: usize,
    in_gt: usize,
    in_sim: usize,
    in_band: bool,
    touches_union: bool,
}

fn superpixel_stats(sp: &LabelMap, sim: &BinaryMask, gt: &BinaryMask, band: &BinaryMask) -> Vec<SuperpixelStats> {
    let (w, h) = sp.dims();
    let union = sim.or(gt).expect("same dims");
    let mut stats: Vec<SuperpixelStats> = (0..=sp.count()).map(|_| SuperpixelStats::default()).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let s = &mut stats[sp.as_slice()[i] as usize];
            s.size += 1;
            s.in_gt += gt.as_slice()[i] as usize;
            s.in_sim += sim.as_slice()[i] as usize;
            s.in_band |= band.as_slice()[i];
            if !s.touches_union {
                'n: for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && union.get(nx as usize, ny as usize) {
                            s.touches_union = true;
                            break 'n;
                        }
                    }
                }
            }
        }
    }
    stats
}

/// Superpixel labels eligible for a defect of type `t`.
fn eligible(t: ErrorType, stats: &[SuperpixelStats]) -> Vec<u32> {
    stats
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, s)| {
            s.size > 0
                && match t {
                    ErrorType::Boundary => s.in_band,
                    ErrorType::External => s.in_gt == 0 && s.touches_union && s.in_sim < s.size,
                    ErrorType::Internal => s.in_gt == s.size && s.in_sim > 0,
                }
        })
        .map(|(l, _)| l as u32)
        .collect()
}

/// Applies one defect of type `t` to `sim` using a randomly chosen eligible
/// superpixel. Returns the new mask and the superpixel label, or `None` when
/// no superpixel is eligible.
///
/// Boundary defects flip a superpixel touching the boundary band; external
/// defects fill a superpixel disjoint from the object that touches (8-neighbour)
/// the current mask or the object; internal defects clear a superpixel lying
/// inside the object. Superpixels whose change would be a no-op are skipped.
pub fn apply_defect(
    t: ErrorType,
    superpixels: &LabelMap,
    sim: &BinaryMask,
    gt: &BinaryMask,
    rng: &mut impl Rng,
) -> Option<(BinaryMask, u32)> {
    let band = boundary_band(gt, BOUNDARY_BAND_RADIUS);
    let stats = superpixel_stats(superpixels, sim, gt, &band);
    let candidates = eligible(t, &stats);
    if candidates.is_empty() {
        return None;
    }
    let label = candidates[rng.random_range(0..candidates.len())];
    let mut out = sim.clone();
    for (m, &l) in out.as_mut_slice().iter_mut().zip(superpixels.as_slice()) {
        if l == label {
            *m = match t {
                ErrorType::Boundary => !*m,
                ErrorType::External => true,
                ErrorType::Internal => false,
            };
        }
    }
    Some((out, label))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectStep {
    pub error_type: ErrorType,
    pub k: usize,
    pub superpixel: u32,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DefectOutcome {
    pub mask: BinaryMask,
    pub iou: f64,
    /// Every defect applied, including those discarded by a restart.
    pub steps: Vec<DefectStep>,
    pub restarts: usize,
}

/// Corrupts `gt` until its IOU lands in `[min_iou, max_iou)`.
///
/// Each attempt draws a defect type and a superpixel count and applies one
/// defect; when the drawn type has no eligible superpixel the remaining types
/// are tried in order of probability. Superpixel maps are computed once per
/// count.
pub fn simulate_defective_mask(
    image: &ImagePlanes,
    gt: &BinaryMask,
    cfg: &DefectConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DefectOutcome, CorruptError> {
    cfg.validate()?;
    if gt.count() < MIN_MASK_PIXELS {
        return Err(CorruptError::TooSmall(gt.count()));
    }
    if image.dims() != gt.dims() {
        return Err(CorruptError::Raster(crate::error::RasterError::DimensionMismatch {
            left: image.dims(),
            right: gt.dims(),
        }));
    }
    let mut cache: BTreeMap<usize, LabelMap> = BTreeMap::new();
    let mut sim = gt.clone();
    let mut steps = Vec::new();
    let mut restarts = 0;
    for _ in 0..cfg.max_attempts {
        let drawn = sample_error_type(rng, &cfg.error_probs);
        let k = SLIC_SIZES[rng.random_range(0..SLIC_SIZES.len())];
        if !cache.contains_key(&k) {
            cache.insert(k, slic(image, &SlicConfig::new(k))?);
        }
        let sp = &cache[&k];
        let mut order = vec![drawn];
        let mut rest: Vec<ErrorType> = ErrorType::ALL.into_iter().filter(|&t| t != drawn).collect();
        rest.sort_by(|a, b| cfg.error_probs[*b as usize].total_cmp(&cfg.error_probs[*a as usize]));
        order.extend(rest);
        let Some((t, (next, label))) = order.iter().find_map(|&t| apply_defect(t, sp, &sim, gt, rng).map(|r| (t, r)))
        else {
            log::debug!("no eligible superpixel for any defect type at k={k}");
            continue;
        };
        if t != drawn {
            log::debug!("no eligible superpixel for {drawn:?} at k={k}; used {t:?}");
        }
        let v = iou(&next, gt)?;
        steps.push(DefectStep { error_type: t, k, superpixel: label, iou: v });
        if v >= cfg.min_iou && v < cfg.max_iou {
            return Ok(DefectOutcome { mask: next, iou: v, steps, restarts });
        }
        if v < cfg.min_iou {
            sim = gt.clone();
            restarts += 1;
        } else {
            sim = next;
        }
    }
    Err(CorruptError::AttemptsExhausted(cfg.max_attempts))
}

/// Per-sample RNG derived from the run seed and the sample id.
pub fn sample_rng(seed: u64, id: &str) -> ChaCha8Rng {
    rng_for(seed, &[b"defect", id.as_bytes()])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub id: String,
    pub iou: f64,
    pub defects: Vec<DefectStep>,
    pub restarts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFailure {
    pub id: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DefectConfig,
    pub samples: Vec<ManifestSample>,
    pub failures: Vec<ManifestFailure>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorruptError + '_ {
    move |source| CorruptError::Io { path: path.to_path_buf(), source }
}

/// Writes `init_masks/<id>.png` for every usable sample of `dataset` under
/// `out` plus `manifest.json`. When `out` differs from the dataset root the
/// images and masks are copied too, so `out` is itself a complete dataset.
/// Per-sample failures are recorded in the manifest; samples with masks under
/// the size threshold are left out.
pub fn build_benchmark(dataset: &Dataset, out: &Path, cfg: &DefectConfig) -> Result<Manifest, CorruptError> {
    cfg.validate()?;
    let init_dir = out.join("init_masks");
    std::fs::create_dir_all(&init_dir).map_err(io_err(&init_dir))?;
    let copy = !same_dir(&dataset.root, out);
    if copy {
        for d in ["images", "masks"] {
            let p = out.join(d);
            std::fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
    }
    let results: Vec<Option<Result<ManifestSample, ManifestFailure>>> = dataset
        .entries
        .par_iter()
        .map(|entry| {
            let sample = match entry.load(false) {
                Ok(Some(s)) => s,
                Ok(None) => return Ok(None),
                Err(e @ DatasetError::DimensionMismatch { .. }) => return Err(CorruptError::Dataset(e)),
                Err(e) => return Ok(Some(Err(ManifestFailure { id: entry.id.clone(), error: e.to_string() }))),
            };
            let mut rng = sample_rng(cfg.seed, &sample.id);
            let outcome = match simulate_defective_mask(&sample.image, &sample.gt, cfg, &mut rng) {
                Ok(o) => o,
                Err(e) => {
                    log::warn!("sample {}: {e}", sample.id);
                    return Ok(Some(Err(ManifestFailure { id: sample.id, error: e.to_string() })));
                }
            };
            let path = init_dir.join(format!("{}.png", sample.id));
            let written = save_mask(&outcome.mask, &path).map_err(|e| e.to_string()).and_then(|_| {
                if !copy {
                    return Ok(());
                }
                copy_into(&entry.image, &out.join("images")).and_then(|_| copy_into(&entry.mask, &out.join("masks")))
            });
            Ok(Some(match written {
                Ok(()) => Ok(ManifestSample {
                    id: sample.id,
                    iou: outcome.iou,
                    defects: outcome.steps,
                    restarts: outcome.restarts,
                }),
                Err(error) => Err(ManifestFailure { id: sample.id, error }),
            }))
        })
        .collect::<Result<_, CorruptError>>()?;
    let mut manifest = Manifest { config: cfg.clone(), samples: Vec::new(), failures: Vec::new() };
    for r in results.into_iter().flatten() {
        match r {
            Ok(s) => manifest.samples.push(s),
            Err(f) => manifest.failures.push(f),
        }
    }
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

fn copy_into(file: &Path, dir: &Path) -> Result<(), String> {
    let name: PathBuf = file.file_name().map(PathBuf::from).ok_or_else(|| format!("bad path {}", file.display()))?;
    std::fs::copy(file, dir.join(name)).map(|_| ()).map_err(|e| format!("{}: {e}", file.display()))
}

/// PNG bytes of a defective mask, for byte-level reproducibility checks.
pub fn defective_mask_png(
    image: &ImagePlanes,
    gt: &BinaryMask,
    cfg: &DefectConfig,
    id: &str,
) -> Result<Vec<u8>, CorruptError> {
    let outcome = simulate_defective_mask(image, gt, cfg, &mut sample_rng(cfg.seed, id))?;
    Ok(encode_mask_png(&outcome.mask)?)
}
