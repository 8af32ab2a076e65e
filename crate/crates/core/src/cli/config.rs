//! Experiment configuration: a TOML file with one section per concern.
//!
//! ```toml
//! [run]
//! task = "image"
//! model = "relift"
//! seed = 0
//! output = "out"
//!
//! [arch]
//! depth = 4
//! width = 256
//! omega0 = 30.0
//! gamma = 2.0
//!
//! [partition]
//! regions_per_dim = 4
//!
//! [latent]
//! global_dim = 32
//! mid_cells = 2
//! mid_dim = 16
//! local_dim = 8
//!
//! [meta]
//! inner_steps = 3
//!
//! [fit]
//! steps = 500
//!
//! [degrade]
//! kind = "inpaint_mask"
//! fraction = 0.25
//! seed = 1
//! ```
//!
//! Every field has a default, so any subset of keys is a valid file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LiftError, Result};
use crate::fit::FitConfig;
use crate::hlg::LatentShape;
use crate::meta::MetaConfig;
use crate::model::LiftModel;
use crate::nets::{InputMap, Mlp, StackShape};
use crate::partition::PartitionSpec;
use crate::rng::{rng_for, stream};
use crate::signals::Degradation;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    Image,
    Audio,
    Volume,
    Spectral,
}

impl TaskKind {
    /// Coordinate dimension of the task's signals.
    pub fn dims(self) -> usize {
        match self {
            TaskKind::Image => 2,
            TaskKind::Audio | TaskKind::Spectral => 1,
            TaskKind::Volume => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Siren,
    #[default]
    Relift,
    Lift,
    LiftRelift,
}

impl ModelKind {
    pub fn is_lift(self) -> bool {
        matches!(self, ModelKind::Lift | ModelKind::LiftRelift)
    }

    /// ReLIFT layers: scaled first layer and residual hidden layers.
    pub fn is_relift(self) -> bool {
        matches!(self, ModelKind::Relift | ModelKind::LiftRelift)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = LiftError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "siren" => Ok(ModelKind::Siren),
            "relift" => Ok(ModelKind::Relift),
            "lift" => Ok(ModelKind::Lift),
            "lift-relift" => Ok(ModelKind::LiftRelift),
            other => Err(LiftError::Config(format!(
                "unknown model `{other}` (expected siren, relift, lift or lift-relift)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub task: TaskKind,
    pub model: ModelKind,
    pub seed: u64,
    pub output: PathBuf,
    /// Signal file, or a directory of signals for meta-training. Synthetic
    /// data is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            task: TaskKind::Image,
            model: ModelKind::Relift,
            seed: 0,
            output: PathBuf::from("out"),
            input: None,
        }
    }
}

/// Network shape. `gamma` and residual connections apply only to ReLIFT
/// models; SIREN and plain LIFT always use `gamma = 1` without residuals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// Weight layers including the linear readout.
    pub depth: usize,
    pub width: usize,
    pub omega0: f64,
    /// Hidden-layer frequency; `omega0` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_omega: Option<f64>,
    pub gamma: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            width: 256,
            omega0: 30.0,
            hidden_omega: None,
            gamma: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub regions_per_dim: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { regions_per_dim: 4 }
    }
}

/// Latent sizes. The local grid has one cell per region, so its side is
/// `partition.regions_per_dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentConfig {
    pub global_dim: usize,
    pub mid_cells: usize,
    pub mid_dim: usize,
    pub local_dim: usize,
    /// Width of the fused intermediate grid; `mid_dim` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fused_dim: Option<usize>,
    /// Width of the compositional latent; `local_dim` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_dim: Option<usize>,
    /// Use the hierarchical generator. Off means only local latents.
    pub hierarchy: bool,
    pub hlg_bias: bool,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            global_dim: 32,
            mid_cells: 2,
            mid_dim: 16,
            local_dim: 8,
            fused_dim: None,
            alpha_dim: None,
            hierarchy: true,
            hlg_bias: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub arch: ArchConfig,
    pub partition: PartitionConfig,
    pub latent: LatentConfig,
    pub meta: MetaConfig,
    pub fit: FitConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degrade: Option<Degradation>,
}

impl RunConfig {
    /// Parses TOML text. Errors name the offending line and field.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map(|s| format!("line {}: ", text[..s.start.min(text.len())].matches('\n').count() + 1))
                .unwrap_or_default();
            LiftError::Config(format!("{at}{}", e.message()))
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(LiftError::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            LiftError::Config(msg) => LiftError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LiftError::Config(format!("cannot write config: {e}")))
    }

    /// The config as written next to run artifacts: the output directory
    /// is left at its default so the file does not depend on where it lives.
    pub fn artifact_toml(&self) -> Result<String> {
        let mut cfg = self.clone();
        cfg.run.output = RunSection::default().output;
        cfg.to_toml()
    }

    pub fn validate(&self) -> Result<()> {
        // TOML integers are signed.
        if self.run.seed > i64::MAX as u64 || self.meta.seed > i64::MAX as u64 {
            return Err(LiftError::Config(format!("seed must be at most {}", i64::MAX)));
        }
        self.meta.validate()?;
        if let Some(d) = &self.degrade {
            d.validate()?;
        }
        if self.fit.steps == 0 || !(self.fit.lr > 0.0) {
            return Err(LiftError::Config("fit.steps and fit.lr must be positive".into()));
        }
        if self.run.model.is_lift() && self.run.task == TaskKind::Spectral {
            return Err(LiftError::Config("the spectral task uses single networks (siren or relift)".into()));
        }
        self.stack(1, 1)?.validate()
    }

    /// Sine-stack shape for `in_dim -> out_dim`.
    pub fn stack(&self, in_dim: usize, out_dim: usize) -> Result<StackShape> {
        let a = &self.arch;
        if a.depth < 2 {
            return Err(LiftError::Config(format!("arch.depth must be >= 2, got {}", a.depth)));
        }
        let relift = self.run.model.is_relift();
        Ok(StackShape {
            in_dim,
            out_dim,
            hidden_layers: a.depth - 1,
            width: a.width,
            first_omega: a.omega0,
            hidden_omega: a.hidden_omega.unwrap_or(a.omega0),
            gamma: if relift { a.gamma } else { 1.0 },
            residual: relift,
        })
    }

    pub fn input_map(&self) -> InputMap {
        match self.run.task {
            TaskKind::Spectral => InputMap::Identity,
            _ => InputMap::Centered,
        }
    }

    /// Freshly initialised single network.
    pub fn build_mlp(&self, out_dim: usize) -> Result<Mlp> {
        if self.run.model.is_lift() {
            return Err(LiftError::Config(format!(
                "model {:?} is a LIFT model; single-signal fitting needs siren or relift",
                self.run.model
            )));
        }
        let shape = self.stack(self.run.task.dims(), out_dim)?;
        Mlp::new(shape, self.input_map(), &mut rng_for(self.run.seed, stream::INIT))
    }

    pub fn latent_shape(&self) -> LatentShape {
        let l = &self.latent;
        let mut shape = LatentShape::new(
            self.run.task.dims(),
            l.global_dim,
            (l.mid_cells, l.mid_dim),
            (self.partition.regions_per_dim, l.local_dim),
        );
        shape.fused_dim = l.fused_dim.unwrap_or(l.mid_dim);
        shape.alpha_dim = l.alpha_dim.unwrap_or(l.local_dim);
        shape
    }

    /// Freshly initialised LIFT model.
    pub fn build_lift(&self, out_dim: usize) -> Result<LiftModel> {
        if !self.run.model.is_lift() {
            return Err(LiftError::Config(format!(
                "meta-training needs model lift or lift-relift, got {:?}",
                self.run.model
            )));
        }
        let dims = self.run.task.dims();
        let spec = PartitionSpec::new(dims, self.partition.regions_per_dim)?;
        LiftModel::new(
            spec,
            self.stack(dims, out_dim)?,
            self.latent_shape(),
            self.latent.hierarchy,
            self.latent.hlg_bias,
            self.meta.inner_lr,
            &mut rng_for(self.run.seed, stream::INIT),
        )
    }
}
