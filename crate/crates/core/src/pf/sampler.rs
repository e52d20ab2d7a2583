use rand::Rng as _;

use crate::error::{Error, Result};
use crate::fw::{fw_quad, FwVariant};
use crate::kernel::{GaussianMixture, KernelConfig, MixtureSampler, WeightedParticleSet};
use crate::qmc::{qmc_sample_mixture, SobolStream};
use crate::rng::{derive_seed, rng_from, Rng};

/// How the sampling step of the filter draws `N` points from the transition mixture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    /// I.i.d. component-then-Gaussian draws.
    McMultinomial,
    /// Stratified component selection (one shared uniform offset across the `N`
    /// strata), then Gaussian draws.
    McStratified,
    /// Sobol points mapped through the mixture; one stream per run.
    QmcSobol,
    /// Frank-Wolfe quadrature with a fresh pool of `m` draws per step.
    Skh { variant: FwVariant, m: usize },
}

impl SamplerKind {
    pub fn name(&self) -> String {
        match self {
            SamplerKind::McMultinomial => "MC_MULTINOMIAL".into(),
            SamplerKind::McStratified => "MC_STRATIFIED".into(),
            SamplerKind::QmcSobol => "QMC_SOBOL".into(),
            SamplerKind::Skh { variant, .. } => format!("SKH_{}", variant.name().replace('-', "_")),
        }
    }

    pub fn is_skh(&self) -> bool {
        matches!(self, SamplerKind::Skh { .. })
    }

    /// Parses the names produced by [`name`](Self::name); SKH variants take the pool
    /// size separately.
    pub fn parse(name: &str, m: usize) -> Result<Self> {
        let up = name.to_ascii_uppercase().replace('-', "_");
        match up.as_str() {
            "MC_MULTINOMIAL" | "MC" => Ok(SamplerKind::McMultinomial),
            "MC_STRATIFIED" | "PF" => Ok(SamplerKind::McStratified),
            "QMC_SOBOL" | "QMC" => Ok(SamplerKind::QmcSobol),
            _ => match up.strip_prefix("SKH_") {
                Some(v) => Ok(SamplerKind::Skh { variant: v.parse()?, m }),
                None => Err(Error::InvalidArgument(format!("unknown sampler `{name}`"))),
            },
        }
    }
}

/// Component indices for `n` stratified positions `(k + u) / n`, `k = 0..n`.
pub fn stratified_components(cumulative: &[f64], n: usize, u: f64) -> Vec<usize> {
    let total = *cumulative.last().expect("nonempty weights");
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let pos = (k as f64 + u) / n as f64 * total;
        while j + 1 < cumulative.len() && cumulative[j] <= pos {
            j += 1;
        }
        out.push(j);
    }
    out
}

/// Output of one sampling step.
#[derive(Clone, Debug)]
pub struct StepSample {
    /// Points with ancestry set to the mixture component of each point.
    pub particles: WeightedParticleSet,
    pub fw_error: Option<f64>,
}

/// Sampler with the per-run state it needs (random stream, Sobol stream).
pub struct Sampler {
    kind: SamplerKind,
    kernel: Option<KernelConfig>,
    seed: u64,
    rng: Rng,
    sobol: Option<SobolStream>,
}

impl Sampler {
    pub fn new(kind: SamplerKind, kernel: Option<KernelConfig>, seed: u64) -> Result<Self> {
        if kind.is_skh() && kernel.is_none() {
            return Err(Error::InvalidArgument("SKH sampling needs a kernel".into()));
        }
        Ok(Sampler {
            kind,
            kernel,
            seed,
            rng: rng_from(seed, &[0x73616d70]),
            sobol: None,
        })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    /// Draws `n` points from `mix` at step `t`.
    pub fn sample(&mut self, mix: &GaussianMixture, n: usize, t: usize) -> Result<StepSample> {
        let d = mix.dim();
        match self.kind {
            SamplerKind::McMultinomial => {
                let s = MixtureSampler::new(mix)?;
                let mut pts = vec![0.0; n * d];
                let mut comps = Vec::with_capacity(n);
                for x in pts.chunks_exact_mut(d) {
                    comps.push(s.sample(&mut self.rng, x));
                }
                Ok(StepSample {
                    particles: WeightedParticleSet::uniform(d, pts)?.with_ancestry(comps, mix.len())?,
                    fw_error: None,
                })
            }
            SamplerKind::McStratified => {
                let s = MixtureSampler::new(mix)?;
                let mut acc = 0.0;
                let cumulative: Vec<f64> = mix
                    .weights()
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                let u: f64 = self.rng.random();
                let comps = stratified_components(&cumulative, n, u);
                let mut pts = vec![0.0; n * d];
                for (x, &c) in pts.chunks_exact_mut(d).zip(&comps) {
                    s.sample_from_component(c, &mut self.rng, x);
                }
                Ok(StepSample {
                    particles: WeightedParticleSet::uniform(d, pts)?.with_ancestry(comps, mix.len())?,
                    fw_error: None,
                })
            }
            SamplerKind::QmcSobol => {
                if self.sobol.as_ref().is_none_or(|s| s.dim() != d + 1) {
                    self.sobol = Some(SobolStream::with_random_offset(d + 1, &mut self.rng)?);
                }
                let stream = self.sobol.as_mut().unwrap();
                Ok(StepSample {
                    particles: qmc_sample_mixture(mix, n, stream)?,
                    fw_error: None,
                })
            }
            SamplerKind::Skh { variant, m } => {
                let k = self.kernel.as_ref().unwrap();
                let r = fw_quad(mix, k, n, m.max(n), variant, derive_seed(self.seed, &[t as u64]), None)?;
                Ok(StepSample {
                    fw_error: Some(r.fw_error),
                    particles: r.particles,
                })
            }
        }
    }
}
