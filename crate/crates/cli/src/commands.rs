use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use cropseg::backend::NoiseConfig;
use cropseg::corrupt::{build_benchmark, DefectConfig, Manifest};
use cropseg::eval::{evaluate, write_csv, Dataset, EvalConfig, EvalMode, Report};
use cropseg::seed::derive_seed;
use cropseg::synthetic::{generate_scenes, write_dataset, SceneConfig};
use cropseg::ModelSeries;

use crate::backends::{reference_backend, BackendKind, ModelPaths};

#[derive(Clone, Debug)]
pub struct EvalArgs {
    pub dataset: PathBuf,
    pub mode: EvalMode,
    pub series: ModelSeries,
    pub backend: BackendKind,
    pub model: Option<ModelPaths>,
    pub targets: Vec<f64>,
    pub max_clicks: usize,
    pub seed: u64,
    pub noise_blur_radius: f64,
    pub noise_blob_rate: f64,
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

pub fn run_eval(args: &EvalArgs) -> anyhow::Result<Report> {
    let cfg = EvalConfig {
        targets: args.targets.clone(),
        max_clicks: args.max_clicks,
        mode: args.mode,
        series: args.series,
        seed: args.seed,
    }
    .validated()?;
    let dataset = Dataset::open(&args.dataset)?;
    if dataset.entries.is_empty() {
        bail!("no samples under {}", args.dataset.display());
    }
    let shared = match args.backend {
        BackendKind::External => {
            let paths = args.model.as_ref().context("--backend external needs --model")?;
            Some(paths.load(args.series).with_context(|| format!("loading {}", paths.model.display()))?)
        }
        _ => None,
    };
    let noise = NoiseConfig { blur_radius: args.noise_blur_radius, blob_rate: args.noise_blob_rate, seed: 0 };
    let report = evaluate(&dataset.entries, &cfg, args.backend.name(), |sample| match &shared {
        Some(b) => Arc::clone(b),
        None => {
            let noise = NoiseConfig { seed: derive_seed(cfg.seed, &[b"noise", sample.id.as_bytes()]), ..noise };
            reference_backend(args.backend, Some(&sample.gt), noise).expect("reference backends only need gt")
        }
    })?;
    if let Some(path) = &args.report {
        report.write_json(path).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.csv {
        let file = std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        write_csv(&report, file)?;
    }
    Ok(report)
}

/// Human-readable summary of a report.
pub fn format_report(report: &Report) -> String {
    let mut out = format!("backend {} on {} samples ({:?} mode)\n", report.backend, report.samples.len(), report.config.mode);
    for t in &report.thresholds {
        out.push_str(&format!("  NoC@{:.2} = {:.2}   NoF@{:.2} = {}\n", t.target, t.noc, t.target, t.nof));
    }
    if let Some(c) = &report.crop_areas {
        out.push_str(&format!(
            "  crop area: target {:.3}, focus {:.3} (mean over {} clicks)\n",
            c.target_mean, c.focus_mean, c.clicks
        ));
    }
    let errors = report.samples.iter().filter(|r| r.error.is_some()).count();
    if errors > 0 {
        out.push_str(&format!("  {errors} samples aborted on backend errors\n"));
    }
    out
}

pub fn run_corrupt(dataset: &Path, out: &Path, cfg: &DefectConfig) -> anyhow::Result<Manifest> {
    let ds = Dataset::open(dataset)?;
    let manifest = build_benchmark(&ds, out, cfg)?;
    Ok(manifest)
}

pub fn run_synth(out: &Path, count: usize, seed: u64, cfg: &SceneConfig) -> anyhow::Result<()> {
    write_dataset(out, &generate_scenes(seed, count, cfg))?;
    Ok(())
}
