//! Particle filtering in predictive form: the predictive set `p̂_t` is reweighted by the
//! observation likelihood, pushed through the dynamics to give a Gaussian mixture over
//! the next state, and that mixture is re-approximated by `N` points with a pluggable
//! [`SamplerKind`] (Monte Carlo, quasi-Monte Carlo or Frank-Wolfe quadrature).

mod rbpf;
mod sampler;
mod trace;

use nalgebra::DVector;
use rayon::prelude::*;

pub use rbpf::run_rbpf;
pub use sampler::{stratified_components, Sampler, SamplerKind, StepSample};
pub use trace::write_trace_csv;

use crate::error::{Error, Result};
use crate::kernel::{GaussianMixture, KernelConfig, MixtureBuilder, WeightedParticleSet};
use crate::linalg::log_sum_exp;
use crate::models::StateSpaceModel;

/// Total likelihood weight below which a step is declared degenerate.
pub const MIN_TOTAL_WEIGHT: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig {
    pub n: usize,
    pub sampler: SamplerKind,
    /// Required for SKH samplers.
    pub kernel: Option<KernelConfig>,
    pub seed: u64,
    /// Keep every predictive and posterior particle set in the trace.
    pub keep_particles: bool,
}

impl FilterConfig {
    pub fn new(n: usize, sampler: SamplerKind, seed: u64) -> Self {
        FilterConfig {
            n,
            sampler,
            kernel: None,
            seed,
            keep_particles: false,
        }
    }

    pub fn with_kernel(mut self, k: KernelConfig) -> Self {
        self.kernel = Some(k);
        self
    }

    pub fn keeping_particles(mut self) -> Self {
        self.keep_particles = true;
        self
    }
}

/// Transition mixture of the predictive form, one block of components per particle.
#[derive(Clone, Debug)]
pub struct TransitionMixture {
    pub mixture: GaussianMixture,
    /// Particle each component came from.
    pub ancestors: Vec<usize>,
    /// Mode of the state each component produces.
    pub modes: Vec<usize>,
}

/// Per-step summary.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterStep {
    pub t: usize,
    /// Mean of the posterior `r̂_t`.
    pub filtered_mean: DVector<f64>,
    /// Mean of the predictive `p̂_t`.
    pub predictive_mean: DVector<f64>,
    /// `log Ŵ_t`.
    pub log_w: f64,
    /// `log Ẑ_t = Σ_{u ≤ t} log Ŵ_u`.
    pub log_z: f64,
    /// Quadrature error of the sampling step that produced `p̂_t` (SKH only).
    pub fw_error: Option<f64>,
    /// Number of particles in `p̂_t`.
    pub effective_n: usize,
    /// `1 / Σ w²` of the posterior weights.
    pub ess: f64,
}

impl FilterStep {
    pub fn w_hat(&self) -> f64 {
        self.log_w.exp()
    }
}

#[derive(Clone, Debug)]
pub struct FilterTrace {
    pub method: String,
    pub n: usize,
    pub seed: u64,
    pub steps: Vec<FilterStep>,
    /// `p̂_t` for every step, when requested.
    pub predictive: Vec<WeightedParticleSet>,
    /// `r̂_t` for every step, when requested.
    pub posterior: Vec<WeightedParticleSet>,
    /// Modes of the particles of `p̂_t`, when requested.
    pub modes: Vec<Vec<usize>>,
}

impl FilterTrace {
    pub fn filtered_means(&self) -> Vec<DVector<f64>> {
        self.steps.iter().map(|s| s.filtered_mean.clone()).collect()
    }

    pub fn log_evidence(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.log_z)
    }
}

/// `log Ŵ_t` and the posterior `r̂_t ∝ o_t(x) p̂_t`.
pub fn reweight(
    model: &dyn StateSpaceModel,
    predictive: &WeightedParticleSet,
    modes: &[usize],
    y: &[f64],
    t: usize,
) -> Result<(f64, WeightedParticleSet)> {
    let n = predictive.len();
    let eval = |i: usize| predictive.weights()[i].ln() + model.log_likelihood(predictive.point(i), modes[i], y, t);
    let logw: Vec<f64> = if n >= 4096 {
        (0..n).into_par_iter().map(eval).collect()
    } else {
        (0..n).map(eval).collect()
    };
    let log_total = log_sum_exp(&logw);
    if !(log_total >= MIN_TOTAL_WEIGHT.ln()) {
        return Err(Error::DegenerateWeights { t, log_total });
    }
    let w: Vec<f64> = logw.iter().map(|l| (l - log_total).exp()).collect();
    Ok((log_total, predictive.reweighted(w)?))
}

/// Mixture `Σᵢ r̂ᵢ p(x_{t+1} | x_t⁽ⁱ⁾)` over the next state.
pub fn build_transition_mixture(
    model: &dyn StateSpaceModel,
    posterior: &WeightedParticleSet,
    modes: &[usize],
    t: usize,
) -> Result<TransitionMixture> {
    let n = posterior.len();
    let mut b = MixtureBuilder::with_capacity(model.dim_x(), n * model.num_modes());
    let mut ancestors = Vec::with_capacity(n);
    let mut next_modes = Vec::with_capacity(n);
    for (i, (x, w)) in posterior.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        for c in model.transition(x, modes[i], t) {
            b.push(w * c.weight, c.mean.as_slice(), &c.cov);
            ancestors.push(i);
            next_modes.push(c.mode);
        }
    }
    Ok(TransitionMixture {
        mixture: b.build()?,
        ancestors,
        modes: next_modes,
    })
}

fn initial_mixture(model: &dyn StateSpaceModel) -> Result<TransitionMixture> {
    let comps = model.initial();
    let mut b = MixtureBuilder::with_capacity(model.dim_x(), comps.len());
    for c in &comps {
        b.push(c.weight, c.mean.as_slice(), &c.cov);
    }
    Ok(TransitionMixture {
        mixture: b.build()?,
        ancestors: vec![0; comps.len()],
        modes: comps.iter().map(|c| c.mode).collect(),
    })
}

/// Runs the filter over observations `y_1, …, y_T`.
pub fn run_filter(model: &dyn StateSpaceModel, ys: &[DVector<f64>], cfg: &FilterConfig) -> Result<FilterTrace> {
    if ys.is_empty() {
        return Err(Error::InvalidArgument("need at least one observation".into()));
    }
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("number of particles must be at least 1".into()));
    }
    if let Some(k) = &cfg.kernel {
        crate::error::ensure_dim(model.dim_x(), k.dim())?;
    }
    let mut sampler = Sampler::new(cfg.sampler, cfg.kernel, cfg.seed)?;
    let mut trace = FilterTrace {
        method: cfg.sampler.name(),
        n: cfg.n,
        seed: cfg.seed,
        steps: Vec::with_capacity(ys.len()),
        predictive: Vec::new(),
        posterior: Vec::new(),
        modes: Vec::new(),
    };
    let mut mix = initial_mixture(model)?;
    let mut log_z = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let t = i + 1;
        let draw = sampler.sample(&mix.mixture, cfg.n, t)?;
        let predictive = draw.particles;
        let modes: Vec<usize> = predictive.ancestry().unwrap().iter().map(|&c| mix.modes[c]).collect();
        let (log_w, posterior) = reweight(model, &predictive, &modes, y.as_slice(), t)?;
        log_z += log_w;
        trace.steps.push(FilterStep {
            t,
            filtered_mean: posterior.mean(),
            predictive_mean: predictive.mean(),
            log_w,
            log_z,
            fw_error: draw.fw_error,
            effective_n: predictive.len(),
            ess: posterior.ess(),
        });
        if t < ys.len() {
            mix = build_transition_mixture(model, &posterior, &modes, t)?;
        }
        if cfg.keep_particles {
            trace.predictive.push(predictive);
            trace.posterior.push(posterior);
            trace.modes.push(modes);
        }
    }
    Ok(trace)
}
