use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use skh_core::pf::SamplerKind;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Quad,
    Filter,
    Rbpf,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Quad => "quad",
            ExperimentKind::Filter => "filter",
            ExperimentKind::Rbpf => "rbpf",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lgss,
    Jmls,
    Nonlinear,
    Clgss,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub output: Option<PathBuf>,
}

/// Random mixture for the quadrature experiment.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSection {
    pub dim: usize,
    pub components: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// State dimension (LGSS only).
    pub dim: Option<usize>,
    /// Observation dimension (LGSS only, default 1).
    pub obs_dim: Option<usize>,
    /// Seed of the random system matrices.
    #[serde(default)]
    pub seed: u64,
    /// Seed of the simulated observations.
    #[serde(default)]
    pub data_seed: u64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub methods: Vec<String>,
    pub sigma2: Vec<f64>,
    pub n: Vec<usize>,
    #[serde(default = "default_pool")]
    pub m: usize,
    /// Explicit seed list; overrides `batches`.
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_pool() -> usize {
    20_000
}

fn default_batches() -> usize {
    10
}

/// Particle-filter reference for models without an exact filter.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    #[serde(default = "default_reference_particles")]
    pub particles: usize,
    #[serde(default = "default_reference_runs")]
    pub runs: usize,
    #[serde(default = "default_reference_seed")]
    pub seed: u64,
}

fn default_reference_particles() -> usize {
    100_000
}

fn default_reference_runs() -> usize {
    3
}

fn default_reference_seed() -> u64 {
    1_000_000
}

impl Default for ReferenceSection {
    fn default() -> Self {
        ReferenceSection {
            particles: default_reference_particles(),
            runs: default_reference_runs(),
            seed: default_reference_seed(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub mixture: Option<MixtureSection>,
    pub model: Option<ModelSection>,
    pub grid: GridSection,
    #[serde(default)]
    pub reference: ReferenceSection,
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(m) => config_err(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((cfg, text))
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.methods.is_empty() || g.sigma2.is_empty() || g.n.is_empty() {
            return Err(config_err("grid.methods, grid.sigma2 and grid.n must be nonempty"));
        }
        if g.sigma2.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(config_err("grid.sigma2 values must be positive"));
        }
        if g.n.contains(&0) || g.m == 0 {
            return Err(config_err("grid.n and grid.m must be positive"));
        }
        if self.seeds().is_empty() {
            return Err(config_err("need at least one seed or batch"));
        }
        self.samplers()?;
        match self.experiment.kind {
            ExperimentKind::Quad => {
                let mx = self
                    .mixture
                    .as_ref()
                    .ok_or_else(|| config_err("quad experiments need a [mixture] section"))?;
                if mx.dim == 0 || mx.components == 0 {
                    return Err(config_err("mixture.dim and mixture.components must be positive"));
                }
            }
            ExperimentKind::Filter | ExperimentKind::Rbpf => {
                let md = self
                    .model
                    .as_ref()
                    .ok_or_else(|| config_err("filter experiments need a [model] section"))?;
                if md.steps == 0 {
                    return Err(config_err("model.steps must be positive"));
                }
                if md.kind == ModelKind::Lgss && md.dim.is_none_or(|d| d == 0) {
                    return Err(config_err("lgss models need a positive model.dim"));
                }
                if md.kind != ModelKind::Lgss && (md.dim.is_some() || md.obs_dim.is_some()) {
                    return Err(config_err("model.dim and model.obs_dim only apply to lgss"));
                }
                if self.experiment.kind == ExperimentKind::Rbpf && md.kind != ModelKind::Clgss {
                    return Err(config_err("rbpf experiments need model.kind = \"clgss\""));
                }
                if self.reference.particles == 0 || self.reference.runs == 0 {
                    return Err(config_err("reference.particles and reference.runs must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.grid
            .seeds
            .clone()
            .unwrap_or_else(|| (0..self.grid.batches as u64).collect())
    }

    pub fn samplers(&self) -> Result<Vec<SamplerKind>> {
        self.grid
            .methods
            .iter()
            .map(|m| SamplerKind::parse(m, self.grid.m).map_err(|e| config_err(format!("grid.methods: {e}"))))
            .collect()
    }

    /// Scales the run to the larger experiment sizes: pool 50,000 for
    /// quadrature; 100 steps, 30 batches, N from 20 to 200 and 10 reference runs for
    /// filtering.
    pub fn paper_scale(&mut self) {
        match self.experiment.kind {
            ExperimentKind::Quad => self.grid.m = 50_000,
            ExperimentKind::Filter | ExperimentKind::Rbpf => {
                if let Some(md) = &mut self.model {
                    md.steps = 100;
                }
                self.grid.seeds = None;
                self.grid.batches = 30;
                self.grid.n = vec![20, 50, 100, 200];
                self.reference.runs = 10;
            }
        }
    }
}

/// First 16 hex digits of the SHA-256 of the config text and the scale flag.
pub fn config_hash(text: &str, paper_scale: bool) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    if paper_scale {
        h.update(b"\npaper-scale");
    }
    hex::encode(h.finalize())[..16].to_string()
}
