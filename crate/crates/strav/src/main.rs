use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use strav::config::{Alignment, Assembly, ConfigOverrides};
use strav::core::losses::LossWeights;
use strav::core::pipeline::{Pipeline, PipelineConfig};
use strav::core::synthgen;
use strav::report::{self, LossJob};
use strav::store::DirStore;
use strav::io;

#[derive(Parser)]
#[command(name = "strav", version, about = "High-resolution video inpainting by spatial-temporal residual aggregation")]
struct Cli {
    /// Worker threads (0 = one per core). Output does not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inpaint a directory of frames.
    Inpaint(InpaintArgs),
    /// Write a synthetic test sequence.
    Synth(SynthArgs),
    /// Compare two frame directories.
    Eval(EvalArgs),
    /// Evaluate the training loss suite on an inpainted sequence.
    EvalLosses(EvalLossesArgs),
}

#[derive(Args, Default)]
struct Settings {
    /// TOML file whose keys are pipeline settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Downsampling factor between full and processing resolution
    #[arg(long)]
    scale: Option<usize>,
    /// Reference window (frames).
    #[arg(long)]
    refs: Option<usize>,
    /// References at most this many frames away also get flow alignment
    #[arg(long)]
    flow_radius: Option<usize>,
    /// Temporal attention temperature.
    #[arg(long)]
    temp: Option<f32>,
    /// Spatial attention temperature.
    #[arg(long)]
    spatial_temp: Option<f32>,
    /// Spatial attention patch side at processing resolution
    #[arg(long)]
    patch: Option<usize>,
    /// Feature pyramid levels
    #[arg(long)]
    pyramid_levels: Option<usize>,
    #[arg(long, value_enum)]
    alignment: Option<Alignment>,
    #[arg(long, value_enum)]
    assembly: Option<Assembly>,
}

impl Settings {
    fn resolve(&self, emit_intermediates: bool) -> anyhow::Result<PipelineConfig> {
        let file = match &self.config {
            Some(p) => ConfigOverrides::load(p)?,
            None => ConfigOverrides::default(),
        };
        let flags = ConfigOverrides {
            scale: self.scale,
            reference_window: self.refs,
            flow_radius: self.flow_radius,
            temperature: self.temp,
            spatial_temperature: self.spatial_temp,
            patch: self.patch,
            emit_intermediates: emit_intermediates.then_some(true),
            pyramid_levels: self.pyramid_levels,
            alignment: self.alignment,
            assembly: self.assembly,
            ..Default::default()
        };
        let mut cfg = PipelineConfig::default();
        file.merged(&flags).apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct InpaintArgs {
    /// Directory of RGB PNG frames
    #[arg(long)]
    frames: PathBuf,
    /// Directory of hole masks with the same file names (gray >= 128 is a hole)
    #[arg(long)]
    masks: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth frames; enables the metrics CSV.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Where to write the metrics CSV (default: OUT/metrics.csv).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Also write low-res results, leftover and coverage masks and top-1 maps.
    #[arg(long)]
    emit_intermediates: bool,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Args)]
struct SynthArgs {
    /// One of: static, pan, local-deform, two-texture, no-coverage.
    #[arg(long)]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    frames: usize,
    /// Low-resolution size as HEIGHTxWIDTH.
    #[arg(long, default_value = "512x512", value_parser = parse_size)]
    low: (usize, usize),
    /// Ratio between the written frames and the low-resolution size
    #[arg(long, default_value_t = 4)]
    scale: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// First frame directory
    #[arg(long)]
    a: PathBuf,
    /// Second frame directory
    #[arg(long)]
    b: PathBuf,
    /// Masks restricting the comparison.
    #[arg(long)]
    region: Option<PathBuf>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalLossesArgs {
    /// Directory of RGB PNG frames
    #[arg(long)]
    frames: PathBuf,
    /// Directory of hole masks with the same file names (gray >= 128 is a hole)
    #[arg(long)]
    masks: PathBuf,
    /// Ground-truth frames
    #[arg(long)]
    gt: PathBuf,
    /// Completed frames.
    #[arg(long)]
    outputs: PathBuf,
    #[command(flatten)]
    settings: Settings,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once('x').ok_or("expected HEIGHTxWIDTH")?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((p(h)?, p(w)?))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn inpaint(a: &InpaintArgs) -> anyhow::Result<()> {
    let cfg = a.settings.resolve(a.emit_intermediates)?;
    let mut store = DirStore::open(&a.frames, &a.masks, &a.out)?;
    info!("inpainting {} frames from {}", store.names().len(), a.frames.display());
    let reports = Pipeline::new(cfg)?.run(&mut store)?;
    for r in &reports {
        if r.spatial_only {
            warn!("frame {}: no usable reference, spatial-only fill", r.index);
        }
        if r.no_spatial_context {
            warn!("frame {}: no hole-free context patch, leftover kept diffused", r.index);
        }
        info!("frame {}: {} references, {} hole px, {} leftover px", r.index, r.aligned_references, r.hole_pixels, r.leftover_pixels);
    }
    if let Some(gt) = &a.gt {
        let rows = report::compare_dirs(&a.out, gt, None)?;
        let path = a.metrics.clone().unwrap_or_else(|| a.out.join("metrics.csv"));
        write_text(&path, &report::metrics_csv(&rows))?;
        info!("metrics written to {}", path.display());
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    if !synthgen::SUITES.contains(&a.suite.as_str()) {
        bail!("unknown suite {:?}; expected one of {:?}", a.suite, synthgen::SUITES);
    }
    let spec = synthgen::suite(&a.suite, a.seed, a.low, a.scale, a.frames)?;
    for k in 0..spec.frames {
        let f = synthgen::render_frame(&spec, k)?;
        let name = io::frame_name(k);
        for (dir, img) in [("frames", &f.frame), ("gt", &f.ground_truth)] {
            let d = a.out.join(dir);
            io::create_dir(&d)?;
            io::write_frame(&d.join(&name), img)?;
        }
        let d = a.out.join("masks");
        io::create_dir(&d)?;
        io::write_mask(&d.join(&name), &f.mask)?;
    }
    info!("wrote {} frames to {}", spec.frames, a.out.display());
    Ok(())
}

fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    let csv = report::metrics_csv(&report::compare_dirs(&a.a, &a.b, a.region.as_deref())?);
    match &a.out {
        Some(p) => write_text(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn eval_losses(a: &EvalLossesArgs) -> anyhow::Result<()> {
    let cfg = a.settings.resolve(false)?;
    let job = LossJob { frames: &a.frames, masks: &a.masks, ground_truth: &a.gt, outputs: &a.outputs };
    let r = report::sequence_losses(&job, &cfg)?;
    print!("{}", report::losses_text(&r, &LossWeights::default()));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        warn!("thread pool: {e}");
    }
    let result = match &cli.command {
        Command::Inpaint(a) => inpaint(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
        Command::EvalLosses(a) => eval_losses(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
