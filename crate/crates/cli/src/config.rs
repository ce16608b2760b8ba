//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use jumplab_core::{
    AlphaProfile, Generator, GridSpace, JumpKernel, ScaleFunction, Symmetrization, Topology,
};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub grid: GridSpec,
    pub scale: ScaleSpec,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub experiments: Vec<ExperimentSpec>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Checks applied to every experiment whose summary has the metric.
    #[serde(default)]
    pub tolerances: Vec<Check>,
}

fn default_output() -> PathBuf {
    PathBuf::from("jumplab-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub window: Vec<(f64, f64)>,
    pub h: f64,
    pub topology: Topology,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScaleSpec {
    Constant {
        alpha: f64,
    },
    VariableOrder {
        profile: AlphaProfile,
        alpha1: f64,
        alpha2: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    StableLike {
        c_low: f64,
        c_high: f64,
        #[serde(default)]
        symmetrization: Symmetrization,
    },
    /// Dense kernel table; a relative path is resolved against the config
    /// file's directory.
    Csv {
        path: PathBuf,
    },
}

/// Bounds on one summary metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub metric: String,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub id: String,
    pub operation: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub checks: Vec<Check>,
}

pub const OPERATIONS: &[&str] = &[
    "volume_doubling",
    "scale_checks",
    "kernel_checks",
    "exit_times",
    "capacity",
    "ehi",
    "ehi_phi",
    "wehi",
    "wehi_plus",
    "tail_sweep",
    "ehr",
    "fk",
    "pi",
    "csj",
    "ks_cover",
    "heat_kernel_diag",
    "mc_exit",
    "levy",
    "survival",
];

/// Operations that draw random numbers and therefore need an explicit seed.
pub const SEEDED: &[&str] = &["fk", "ks_cover", "mc_exit", "levy", "survival"];

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            anyhow!(
                "config error at field `{}` (line {}, column {}): {}",
                e.path(),
                inner.line(),
                inner.column(),
                inner
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "config schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        let (a1, a2) = match &self.scale {
            ScaleSpec::Constant { alpha } => (*alpha, *alpha),
            ScaleSpec::VariableOrder { alpha1, alpha2, .. } => (*alpha1, *alpha2),
        };
        if !(a1 > 0.0 && a1 <= a2 && a2 < 2.0) {
            bail!(
                "invalid order range [{a1}, {a2}]: stable-like orders require [α₁,α₂] ⊂ (0,2)"
            );
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, e) in self.experiments.iter().enumerate() {
            if !OPERATIONS.contains(&e.operation.as_str()) {
                bail!(
                    "experiments[{i}] (`{}`): unknown operation `{}`; valid operations: {}",
                    e.id,
                    e.operation,
                    OPERATIONS.join(", ")
                );
            }
            if e.id.is_empty() || !e.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                bail!("experiments[{i}]: id `{}` must be nonempty [A-Za-z0-9_-]", e.id);
            }
            if !seen.insert(e.id.as_str()) {
                bail!("experiments[{i}]: duplicate id `{}`", e.id);
            }
            if SEEDED.contains(&e.operation.as_str()) && e.seed.is_none() {
                bail!("experiments[{i}] (`{}`): operation `{}` needs an explicit seed", e.id, e.operation);
            }
        }
        Ok(())
    }
}

/// Space, scale function and generator built from a config.
pub struct Setup {
    pub space: GridSpace,
    pub sf: ScaleFunction,
    pub kernel: JumpKernel,
    pub gen: Generator,
}

impl Setup {
    pub fn build(cfg: &Config, base_dir: &Path) -> Result<Self> {
        let g = &cfg.grid;
        let space = GridSpace::build(g.dim, &g.window, g.h, g.topology).context("grid")?;
        let sf = match &cfg.scale {
            ScaleSpec::Constant { alpha } => ScaleFunction::constant_order(&space, *alpha),
            ScaleSpec::VariableOrder {
                profile,
                alpha1,
                alpha2,
            } => ScaleFunction::variable_order(&space, profile, *alpha1, *alpha2),
        }
        .context("scale")?;
        let kernel = match &cfg.kernel {
            KernelSpec::StableLike {
                c_low,
                c_high,
                symmetrization,
            } => JumpKernel::stable_like(&space, &sf, *c_low, *c_high, *symmetrization),
            KernelSpec::Csv { path } => {
                let path = if path.is_relative() { base_dir.join(path) } else { path.clone() };
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("cannot read kernel table {}", path.display()))?;
                JumpKernel::from_csv_str(&text)
            }
        }
        .context("kernel")?;
        let gen = Generator::assemble(&space, &kernel).context("generator")?;
        Ok(Self {
            space,
            sf,
            kernel,
            gen,
        })
    }

    /// Lattice point nearest to `coords`.
    pub fn point(&self, coords: &[f64]) -> Result<usize> {
        if coords.len() != self.space.dim() {
            bail!(
                "point {coords:?} has {} coordinates, grid has dimension {}",
                coords.len(),
                self.space.dim()
            );
        }
        Ok(self.space.nearest(coords))
    }
}
