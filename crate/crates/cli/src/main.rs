use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use cropseg::corrupt::DefectConfig;
use cropseg::eval::EvalMode;
use cropseg::synthetic::SceneConfig;
use cropseg::ModelSeries;

use cropseg_cli::backends::{BackendKind, ModelPaths};
use cropseg_cli::commands::{self, EvalArgs};
use cropseg_cli::config::{FileConfig, ServiceConfig};

#[derive(Parser)]
#[command(name = "cropseg", version, about = "Click-based interactive segmentation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the click-simulation protocol over a dataset and report NoC / NoF.
    Eval(EvalCmd),
    /// Build a benchmark of defective initial masks from a dataset.
    Corrupt(CorruptCmd),
    /// Write a synthetic dataset of seeded scenes.
    Synth(SynthCmd),
    /// Serve interactive sessions over HTTP.
    Serve(ServeCmd),
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "scratch")]
    mode: EvalMode,
    #[arg(long, default_value = "s2")]
    series: ModelSeries,
    #[arg(long, default_value = "oracle")]
    backend: BackendKind,
    /// Exported segmentor, required for `--backend external`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Io spec for the model; defaults to io.json next to it.
    #[arg(long)]
    io_spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.85,0.90,0.95")]
    targets: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    max_clicks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Blur radius of the noisy backend, in segmentor pixels.
    #[arg(long, default_value_t = 2.0)]
    noise_blur_radius: f64,
    /// Spurious-blob probability of the noisy backend.
    #[arg(long, default_value_t = 0.2)]
    noise_blob_rate: f64,
    /// Write the full JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write one CSV row per sample here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CorruptCmd {
    #[arg(long)]
    dataset: PathBuf,
    /// Output root; receives init_masks/, manifest.json and copies of the data.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.75)]
    min_iou: f64,
    #[arg(long, default_value_t = 0.85)]
    max_iou: f64,
    #[arg(long, default_value_t = 50)]
    max_attempts: usize,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 480)]
    width: usize,
    #[arg(long, default_value_t = 360)]
    height: usize,
}

#[derive(Args)]
struct ServeCmd {
    /// TOML file with service settings; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    /// Backend used when a request does not name one.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    io_spec: Option<PathBuf>,
    /// Series used when a request does not name one.
    #[arg(long)]
    series: Option<String>,
    #[arg(long)]
    session_ttl_secs: Option<u64>,
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            if record.target() == "cropseg::request" {
                writeln!(buf, "{}", record.args())
            } else {
                let line = serde_json::json!({
                    "level": record.level().as_str(),
                    "target": record.target(),
                    "message": record.args().to_string(),
                });
                writeln!(buf, "{line}")
            }
        })
        .init();
}

fn main() -> anyhow::Result<()> {
    init_logging();
    match Cli::parse().command {
        Command::Eval(c) => {
            let args = EvalArgs {
                dataset: c.dataset,
                mode: c.mode,
                series: c.series,
                backend: c.backend,
                model: c.model.map(|m| ModelPaths::new(m, c.io_spec)),
                targets: c.targets,
                max_clicks: c.max_clicks,
                seed: c.seed,
                noise_blur_radius: c.noise_blur_radius,
                noise_blob_rate: c.noise_blob_rate,
                report: c.report,
                csv: c.csv,
            };
            let report = commands::run_eval(&args)?;
            print!("{}", commands::format_report(&report));
        }
        Command::Corrupt(c) => {
            let cfg = DefectConfig {
                min_iou: c.min_iou,
                max_iou: c.max_iou,
                max_attempts: c.max_attempts,
                seed: c.seed,
                ..Default::default()
            };
            let manifest = commands::run_corrupt(&c.dataset, &c.out, &cfg)?;
            println!(
                "wrote {} defective masks to {} ({} failures)",
                manifest.samples.len(),
                c.out.join("init_masks").display(),
                manifest.failures.len()
            );
        }
        Command::Synth(c) => {
            let cfg = SceneConfig { width: c.width, height: c.height, ..Default::default() };
            commands::run_synth(&c.out, c.count, c.seed, &cfg)?;
            println!("wrote {} scenes to {}", c.count, c.out.display());
        }
        Command::Serve(c) => {
            let file = match &c.config {
                Some(p) => FileConfig::load(p)?,
                None => FileConfig::default(),
            };
            let flags = FileConfig {
                host: c.host,
                port: c.port,
                backend: c.backend,
                series: c.series,
                model: c.model,
                io_spec: c.io_spec,
                session_ttl_secs: c.session_ttl_secs,
                ..Default::default()
            };
            let cfg = ServiceConfig::try_from(flags.or(file))?;
            let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
            runtime.block_on(cropseg_cli::service::serve(cfg))?;
        }
    }
    Ok(())
}
