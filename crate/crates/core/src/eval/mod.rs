//! Automated click-simulation protocol and NoC / NoF metrics.
//!
//! Each simulated click goes to the interior-most pixel of the largest error
//! region. A sample stops once the highest target IOU is reached or the click
//! budget is spent. NoC averages clicks-to-target with failures counted as the
//! budget; NoF counts failures.

mod dataset;

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, Sample, SampleEntry, MIN_MASK_PIXELS};

use crate::backend::Backend;
use crate::crop::{crop_area_stats, CropAreaStats, ModelSeries};
use crate::error::EvalError;
use crate::raster::{
    component_mask, connected_components, distance_transform, iou, largest_component, xor_diff, BinaryMask, Click,
    Connectivity, ImagePlanes, Polarity,
};
use crate::session::Session;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    #[default]
    Scratch,
    Init,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "scratch" | "from_scratch" => Ok(EvalMode::Scratch),
            "init" | "from_initial_mask" => Ok(EvalMode::Init),
            other => Err(format!("unknown mode {other:?} (expected scratch|init)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub targets: Vec<f64>,
    pub max_clicks: usize,
    pub mode: EvalMode,
    pub series: ModelSeries,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { targets: vec![0.85, 0.90, 0.95], max_clicks: 20, mode: EvalMode::Scratch, series: ModelSeries::S2, seed: 0 }
    }
}

impl EvalConfig {
    /// Checks the ranges and sorts the targets ascending.
    pub fn validated(mut self) -> Result<Self, EvalError> {
        if self.targets.is_empty() {
            return Err(EvalError::Config("at least one target IOU is required".into()));
        }
        if let Some(t) = self.targets.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(EvalError::Config(format!("target IOU {t} is outside (0, 1]")));
        }
        if self.max_clicks == 0 {
            return Err(EvalError::Config("max_clicks must be at least 1".into()));
        }
        self.targets.sort_by(f64::total_cmp);
        self.targets.dedup();
        Ok(self)
    }
}

/// Next simulated click: the distance-transform argmax of the largest
/// 8-connected error region (lowest row-major index on ties), positive when
/// that pixel is a false negative.
pub fn simulate_next_click(pred: &BinaryMask, gt: &BinaryMask) -> Result<Click, EvalError> {
    let error = xor_diff(pred, gt)?;
    let labels = connected_components(&error, Connectivity::Eight);
    let label = largest_component(&labels).ok_or(EvalError::NoError)?;
    let region = component_mask(&labels, label);
    let dt = distance_transform(&region);
    let mut best = (0usize, f32::NEG_INFINITY);
    for (i, (&d, &r)) in dt.as_slice().iter().zip(region.as_slice()).enumerate() {
        if r && d > best.1 {
            best = (i, d);
        }
    }
    let (x, y) = (best.0 % gt.width(), best.0 / gt.width());
    let polarity = if gt.get(x, y) { Polarity::Positive } else { Polarity::Negative };
    Ok(Click::new(x, y, polarity))
}

/// Raw per-sample results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub initial_iou: f64,
    /// IOU after each click.
    pub ious: Vec<f64>,
    /// Clicks needed per target; `max_clicks + 1` when the target was missed.
    pub clicks_to_target: Vec<usize>,
    pub failed: Vec<bool>,
    /// Per-click `(target, focus)` crop-area ratios.
    pub crop_ratios: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs the protocol on one sample. Backend failures end the sample as a
/// failure at every target, with the message kept in `error`.
pub fn run_sample(
    id: &str,
    image: ImagePlanes,
    gt: &BinaryMask,
    initial_mask: Option<BinaryMask>,
    backend: Arc<dyn Backend>,
    cfg: &EvalConfig,
) -> Result<SampleRecord, EvalError> {
    let initial = match cfg.mode {
        EvalMode::Init => initial_mask,
        EvalMode::Scratch => None,
    };
    let n = cfg.targets.len();
    let mut session = Session::new(image, initial, cfg.series, backend).map_err(|e| EvalError::Config(e.to_string()))?;
    let initial_iou = iou(session.mask(), gt)?;
    let miss = cfg.max_clicks + 1;
    let mut ctt: Vec<usize> = cfg.targets.iter().map(|&t| if initial_iou >= t { 0 } else { miss }).collect();
    let mut record = SampleRecord {
        id: id.to_string(),
        initial_iou,
        ious: Vec::new(),
        clicks_to_target: Vec::new(),
        failed: Vec::new(),
        crop_ratios: Vec::new(),
        error: None,
    };
    for k in 1..=cfg.max_clicks {
        if ctt.iter().all(|&c| c != miss) {
            break;
        }
        let click = simulate_next_click(session.mask(), gt)?;
        let result = match session.add_click(click) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("sample {id}: click {k} failed: {e}");
                record.error = Some(e.to_string());
                ctt = vec![miss; n];
                break;
            }
        };
        let dims = session.dims();
        record.crop_ratios.push((result.target_crop.area_ratio(dims), result.focus_crop.area_ratio(dims)));
        let v = iou(session.mask(), gt)?;
        record.ious.push(v);
        for (c, &t) in ctt.iter_mut().zip(&cfg.targets) {
            if *c == miss && v >= t {
                *c = k;
            }
        }
    }
    record.failed = ctt.iter().map(|&c| c == miss).collect();
    record.clicks_to_target = ctt;
    Ok(record)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStats {
    pub target: f64,
    pub noc: f64,
    pub nof: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: EvalConfig,
    pub backend: String,
    pub samples: Vec<SampleRecord>,
    pub thresholds: Vec<ThresholdStats>,
    /// Mean IOU after `k` clicks for `k = 1..=max_clicks`; finished samples carry their last value.
    pub miou_curve: Vec<f64>,
    pub crop_areas: Option<CropAreaStats>,
}

impl Report {
    pub fn noc(&self, target: f64) -> Option<f64> {
        self.threshold(target).map(|t| t.noc)
    }

    pub fn nof(&self, target: f64) -> Option<usize> {
        self.threshold(target).map(|t| t.nof)
    }

    fn threshold(&self, target: f64) -> Option<&ThresholdStats> {
        self.thresholds.iter().find(|t| (t.target - target).abs() < 1e-9)
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(file, self).map_err(std::io::Error::other)
    }
}

/// `sum / n` rounded half-up to two decimals using integer arithmetic.
fn mean_2dp(sum: u64, n: u64) -> f64 {
    let hundredths = (200 * sum + n) / (2 * n);
    hundredths as f64 / 100.0
}

/// Aggregates records into NoC / NoF per target and the mIoU curve.
pub fn aggregate(mut records: Vec<SampleRecord>, cfg: &EvalConfig, backend: &str) -> Result<Report, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let n = records.len() as u64;
    let thresholds = cfg
        .targets
        .iter()
        .enumerate()
        .map(|(i, &target)| {
            let sum: u64 = records
                .iter()
                .map(|r| if r.failed[i] { cfg.max_clicks } else { r.clicks_to_target[i] } as u64)
                .sum();
            ThresholdStats { target, noc: mean_2dp(sum, n), nof: records.iter().filter(|r| r.failed[i]).count() }
        })
        .collect();
    let miou_curve = (0..cfg.max_clicks)
        .map(|k| {
            let total: f64 = records
                .iter()
                .map(|r| r.ious.get(k).or(r.ious.last()).copied().unwrap_or(r.initial_iou))
                .sum();
            total / n as f64
        })
        .collect();
    let crop_areas = crop_area_stats(records.iter().flat_map(|r| r.crop_ratios.iter().copied()));
    Ok(Report { config: cfg.clone(), backend: backend.to_string(), samples: records, thresholds, miou_curve, crop_areas })
}

/// Evaluates `entries` in parallel. `make_backend` builds the backend for a
/// loaded sample (test backends need its ground truth). Skipped samples are
/// left out; dataset errors abort the run.
pub fn evaluate<F>(entries: &[SampleEntry], cfg: &EvalConfig, backend_name: &str, make_backend: F) -> Result<Report, EvalError>
where
    F: Fn(&Sample) -> Arc<dyn Backend> + Sync,
{
    let cfg = cfg.clone().validated()?;
    let with_init = cfg.mode == EvalMode::Init;
    let records: Vec<Option<SampleRecord>> = entries
        .par_iter()
        .map(|entry| {
            let Some(sample) = entry.load(with_init)? else {
                return Ok(None);
            };
            let backend = make_backend(&sample);
            run_sample(&sample.id, sample.image, &sample.gt, sample.init_mask, backend, &cfg).map(Some)
        })
        .collect::<Result<_, EvalError>>()?;
    aggregate(records.into_iter().flatten().collect(), &cfg, backend_name)
}

/// Evaluates already-loaded samples in parallel.
pub fn evaluate_samples<F>(samples: &[Sample], cfg: &EvalConfig, backend_name: &str, make_backend: F) -> Result<Report, EvalError>
where
    F: Fn(&Sample) -> Arc<dyn Backend> + Sync,
{
    let cfg = cfg.clone().validated()?;
    let records = samples
        .par_iter()
        .map(|s| run_sample(&s.id, s.image.clone(), &s.gt, s.init_mask.clone(), make_backend(s), &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate(records, &cfg, backend_name)
}

/// One CSV row per sample: id, initial IOU, final IOU, clicks used, then
/// clicks-to-target and failure flag per target.
pub fn write_csv(report: &Report, out: impl std::io::Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "initial_iou".into(), "final_iou".into(), "clicks".into()];
    for t in &report.config.targets {
        header.push(format!("noc@{t:.2}"));
        header.push(format!("failed@{t:.2}"));
    }
    w.write_record(&header)?;
    for r in &report.samples {
        let final_iou = r.ious.last().copied().unwrap_or(r.initial_iou);
        let mut row = vec![r.id.clone(), format!("{:.6}", r.initial_iou), format!("{final_iou:.6}"), r.ious.len().to_string()];
        for (c, f) in r.clicks_to_target.iter().zip(&r.failed) {
            row.push(c.to_string());
            row.push(f.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
