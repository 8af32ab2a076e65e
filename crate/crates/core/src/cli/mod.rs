//! The `lift` command-line tool.
//!
//! Every subcommand reads an optional TOML config (`--config`), applies
//! flag overrides, and writes its outputs plus `manifest.toml` into the
//! output directory. Logging follows `LIFT_LOG` (`quiet`, `info`, `debug`).

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_compare, cmd_fit, cmd_interp, cmd_meta, cmd_modulate, cmd_query, cmd_spectra, load_dataset, model_name,
    CompareOptions, DataSource, InterpOptions, MetaOptions, ModulateOptions, QueryOptions, SpectraOptions,
};
pub use config::{ArchConfig, LatentConfig, ModelKind, PartitionConfig, RunConfig, RunSection, TaskKind};
pub use manifest::{sha256_hex, Artifact, Manifest, Outputs, MANIFEST_NAME};

use crate::error::{LiftError, Result};
use crate::signals::Degradation;

#[derive(Debug, Parser)]
#[command(name = "lift", version, about = "Fit, meta-train and analyse sinusoidal neural fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one network to one signal
    Fit(FitArgs),
    /// Meta-train a LIFT model on a dataset
    Meta(MetaArgs),
    /// Fit latents for a dataset with a trained LIFT model
    Modulate(ModulateArgs),
    /// Sample a trained model on a grid of any resolution
    Query(QueryArgs),
    /// Decode interpolations between two fitted signals
    Interp(InterpArgs),
    /// Harmonic expansion report and spectra of a toy ReLIFT network
    Spectra(SpectraArgs),
    /// PSNR-against-step curves of several networks on one signal
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for batch-parallel fits
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// image, audio, volume or spectral
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskKind>,
    /// siren, relift, lift or lift-relift
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Signal file, or dataset directory for meta and modulate
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Weight layers including the readout
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub omega0: Option<f64>,
    #[arg(long)]
    pub hidden_omega: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Full-batch Adam steps
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Withhold this fraction of points
    #[arg(long, conflicts_with_all = ["downsample", "noise"])]
    pub inpaint: Option<f64>,
    /// Train on a box-filtered copy smaller by this factor
    #[arg(long, conflicts_with = "noise")]
    pub downsample: Option<usize>,
    /// Photon noise with this many photons at full scale
    #[arg(long)]
    pub noise: Option<f64>,
    /// Readout noise level used with --noise
    #[arg(long, default_value_t = 2.0)]
    pub readout: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Use this many synthetic signals instead of --input
    #[arg(long)]
    pub synthetic: Option<u64>,
    /// Index of the first synthetic signal
    #[arg(long, default_value_t = 0)]
    pub synthetic_start: u64,
    /// Side length of synthetic signals
    #[arg(long, default_value_t = 16)]
    pub synthetic_size: usize,
}

#[derive(Debug, Clone, Args)]
pub struct MetaArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Regions per axis
    #[arg(long)]
    pub regions: Option<usize>,
    /// Only local latents, no hierarchical generator
    #[arg(long)]
    pub no_hlg: bool,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub outer_lr: Option<f64>,
    /// Continue from a checkpoint written by an earlier run
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Keep a numbered checkpoint every N iterations (0: final only)
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ModulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskKind>,
    /// Dataset directory
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub inner_steps: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub modulations: Option<PathBuf>,
    /// Record id or index in the modulation file
    #[arg(long)]
    pub id: Option<String>,
    /// Grid size such as 128x128
    #[arg(long, value_parser = parse_resolution)]
    pub resolution: Resolution,
}

#[derive(Debug, Clone, Args)]
pub struct InterpArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub modulations: PathBuf,
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub to: String,
    /// Number of steps between the endpoints
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, value_parser = parse_resolution)]
    pub resolution: Resolution,
}

#[derive(Debug, Clone, Args)]
pub struct SpectraArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Hidden units of the toy network; must equal --frequencies with the residual
    #[arg(long, default_value_t = 2)]
    pub features: usize,
    /// First-layer units of the toy network
    #[arg(long, default_value_t = 2)]
    pub frequencies: usize,
    /// Largest Bessel order kept
    #[arg(long, default_value_t = 8)]
    pub s_max: usize,
    /// Drop the residual connection
    #[arg(long)]
    pub no_residual: bool,
    #[arg(long, default_value_t = 1024)]
    pub samples: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model_args: ModelArgs,
    /// Comma-separated model list
    #[arg(long, value_delimiter = ',', default_value = "siren,relift")]
    pub models: Vec<ModelKind>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Record PSNR every N steps
    #[arg(long, default_value_t = 50)]
    pub every: u64,
}

fn parse_task(s: &str) -> std::result::Result<TaskKind, String> {
    match s {
        "image" => Ok(TaskKind::Image),
        "audio" => Ok(TaskKind::Audio),
        "volume" => Ok(TaskKind::Volume),
        "spectral" => Ok(TaskKind::Spectral),
        other => Err(format!("unknown task `{other}` (image, audio, volume, spectral)")),
    }
}

/// Grid size parsed from `64x64`, `4096` or `32x32x32`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resolution(pub Vec<usize>);

pub fn parse_resolution(s: &str) -> std::result::Result<Resolution, String> {
    let dims: std::result::Result<Vec<usize>, _> = s.split(['x', 'X']).map(str::parse).collect();
    match dims {
        Ok(d) if !d.is_empty() && d.len() <= 3 && d.iter().all(|&n| n > 0) => Ok(Resolution(d)),
        _ => Err(format!("bad resolution `{s}` (expected e.g. 64x64)")),
    }
}

fn base_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
        cfg.meta.seed = seed;
    }
    if let Some(t) = common.threads {
        cfg.meta.threads = t.max(1);
    }
    if let Some(o) = &common.output {
        cfg.run.output = o.clone();
    }
    Ok(cfg)
}

fn apply_model(cfg: &mut RunConfig, m: &ModelArgs) {
    if let Some(t) = m.task {
        cfg.run.task = t;
    }
    if let Some(k) = m.model {
        cfg.run.model = k;
    }
    if let Some(p) = &m.input {
        cfg.run.input = Some(p.clone());
    }
    let a = &mut cfg.arch;
    if let Some(v) = m.depth {
        a.depth = v;
    }
    if let Some(v) = m.width {
        a.width = v;
    }
    if let Some(v) = m.omega0 {
        a.omega0 = v;
    }
    if let Some(v) = m.hidden_omega {
        a.hidden_omega = Some(v);
    }
    if let Some(v) = m.gamma {
        a.gamma = v;
    }
}

fn data_source(cfg: &RunConfig, d: &DataArgs) -> Result<DataSource> {
    match (d.synthetic, &cfg.run.input) {
        (Some(count), _) => Ok(DataSource::Synthetic {
            count,
            start: d.synthetic_start,
            size: d.synthetic_size,
        }),
        (None, Some(dir)) => Ok(DataSource::Dir(dir.clone())),
        (None, None) => Err(LiftError::Config("give a dataset with --input DIR or --synthetic N".into())),
    }
}

/// Effective configuration and command for parsed arguments.
pub fn execute(cli: Cli) -> Result<Manifest> {
    match cli.command {
        Command::Fit(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_model(&mut cfg, &a.model);
            if let Some(e) = a.epochs {
                cfg.fit.steps = e;
            }
            if let Some(lr) = a.lr {
                cfg.fit.lr = lr;
            }
            let seed = cfg.run.seed;
            if let Some(fraction) = a.inpaint {
                cfg.degrade = Some(Degradation::InpaintMask { fraction, seed });
            }
            if let Some(factor) = a.downsample {
                cfg.degrade = Some(Degradation::Downsample { factor });
            }
            if let Some(tau) = a.noise {
                cfg.degrade = Some(Degradation::PhotonNoise {
                    tau,
                    readout: a.readout,
                    seed,
                });
            }
            cmd_fit(&cfg)
        }
        Command::Meta(a) => {
            let mut cfg = base_config(&a.common)?;
            if a.model.model.is_none() && !cfg.run.model.is_lift() {
                cfg.run.model = ModelKind::Lift;
            }
            apply_model(&mut cfg, &a.model);
            if let Some(r) = a.regions {
                cfg.partition.regions_per_dim = r;
            }
            if a.no_hlg {
                cfg.latent.hierarchy = false;
            }
            let m = &mut cfg.meta;
            if let Some(v) = a.iterations {
                m.iterations = v;
            }
            if let Some(v) = a.inner_steps {
                m.inner_steps = v;
            }
            if let Some(v) = a.batch_size {
                m.batch_size = v;
            }
            if let Some(v) = a.outer_lr {
                m.outer_lr = v;
            }
            let opts = MetaOptions {
                data: data_source(&cfg, &a.data)?,
                resume: a.resume,
                checkpoint_every: a.checkpoint_every,
            };
            cmd_meta(&cfg, &opts)
        }
        Command::Modulate(a) => {
            let mut cfg = base_config(&a.common)?;
            if let Some(t) = a.task {
                cfg.run.task = t;
            }
            if let Some(p) = a.input {
                cfg.run.input = Some(p);
            }
            if let Some(v) = a.inner_steps {
                cfg.meta.inner_steps = v;
            }
            if !cfg.run.model.is_lift() {
                cfg.run.model = ModelKind::Lift;
            }
            let opts = ModulateOptions {
                checkpoint: a.checkpoint,
                data: data_source(&cfg, &a.data)?,
                check_config: a.common.config.is_some(),
            };
            cmd_modulate(&cfg, &opts)
        }
        Command::Query(a) => {
            let cfg = base_config(&a.common)?;
            let opts = QueryOptions {
                checkpoint: a.checkpoint,
                modulations: a.modulations,
                id: a.id,
                resolution: a.resolution.0,
            };
            cmd_query(&cfg, &opts)
        }
        Command::Interp(a) => {
            let cfg = base_config(&a.common)?;
            let opts = InterpOptions {
                checkpoint: a.checkpoint,
                modulations: a.modulations,
                from: a.from,
                to: a.to,
                frames: a.frames,
                resolution: a.resolution.0,
            };
            cmd_interp(&cfg, &opts)
        }
        Command::Spectra(a) => {
            let mut cfg = base_config(&a.common)?;
            if let Some(g) = a.gamma {
                cfg.arch.gamma = g;
            }
            let opts = SpectraOptions {
                features: a.features,
                frequencies: a.frequencies,
                s_max: a.s_max,
                residual: !a.no_residual,
                samples: a.samples,
            };
            cmd_spectra(&cfg, &opts)
        }
        Command::Compare(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_model(&mut cfg, &a.model_args);
            if let Some(e) = a.epochs {
                cfg.fit.steps = e;
            }
            if let Some(lr) = a.lr {
                cfg.fit.lr = lr;
            }
            let opts = CompareOptions {
                models: a.models,
                every: a.every,
            };
            cmd_compare(&cfg, &opts)
        }
    }
}

/// Sets up logging from `LIFT_LOG`. Safe to call more than once.
pub fn init_logging() {
    let level = match std::env::var("LIFT_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Error,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 on success, 2 for usage or configuration errors,
/// 3 for runtime failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(manifest) => {
            log::info!("wrote {} artifacts", manifest.artifacts.len());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolutions() {
        assert_eq!(parse_resolution("64x32").unwrap().0, vec![64, 32]);
        assert_eq!(parse_resolution("4096").unwrap().0, vec![4096]);
        assert!(parse_resolution("0x4").is_err());
        assert!(parse_resolution("axb").is_err());
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from(["lift", "fit", "--model", "siren", "--gamma", "3", "--seed", "9"]).unwrap();
        let Command::Fit(a) = cli.command else { panic!() };
        let mut cfg = base_config(&a.common).unwrap();
        apply_model(&mut cfg, &a.model);
        assert_eq!((cfg.run.model, cfg.arch.gamma, cfg.run.seed), (ModelKind::Siren, 3.0, 9));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["lift", "fit", "--task", "movie"]), 2);
        assert_eq!(run(["lift", "fit", "--config", "/nonexistent/run.toml"]), 2);
    }
}
