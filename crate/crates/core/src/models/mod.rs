//! State-space models with Gaussian-mixture transitions and pointwise observation
//! likelihoods, plus ancestral simulation.
//!
//! Time indices are 1-based: `x₁` is drawn from [`StateSpaceModel::initial`], `y_t` is
//! observed from `x_t`, and `transition(x_t, ·, t)` is the law of `x_{t+1}`.
//! Models with a discrete mode (jump Markov systems) carry it alongside the continuous
//! state; every other model has a single mode 0.

mod clgss;
mod jmls;
mod lgss;
mod nonlinear;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub use clgss::{make_clgss, Clgss, ClgssParams};
pub use jmls::{make_jmls, Jmls, JmlsParams, LinearMode};
pub use lgss::{make_lgss, random_stable_observable, Lgss, LgssParams};
pub use nonlinear::{make_nonlinear_benchmark, NonlinearBenchmark};

use crate::error::Result;
use crate::kernel::{GaussianMixture, MixtureBuilder, MixtureSampler};
use crate::rng::rng_from;

/// One weighted Gaussian component of a transition or initial law, tagged with the
/// discrete mode of the state it produces.
#[derive(Clone, Debug)]
pub struct TransitionComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: Arc<DMatrix<f64>>,
    pub mode: usize,
}

pub trait StateSpaceModel: Send + Sync {
    fn name(&self) -> &str;

    fn dim_x(&self) -> usize;

    fn dim_y(&self) -> usize;

    fn num_modes(&self) -> usize {
        1
    }

    /// Law of `(r₁, x₁)`.
    fn initial(&self) -> Vec<TransitionComponent>;

    /// Law of `(r_{t+1}, x_{t+1})` given `(r_t, x_t) = (mode, x)`.
    fn transition(&self, x: &[f64], mode: usize, t: usize) -> Vec<TransitionComponent>;

    /// `log p(y_t | x_t, r_t)`.
    fn log_likelihood(&self, x: &[f64], mode: usize, y: &[f64], t: usize) -> f64;

    /// Draws `y_t` given `(r_t, x_t)`.
    fn sample_observation(&self, x: &[f64], mode: usize, t: usize, rng: &mut dyn rand::RngCore) -> DVector<f64>;

    /// The transition as a mixture over `x_{t+1}` with modes dropped.
    fn transition_mixture(&self, x: &[f64], mode: usize, t: usize) -> Result<GaussianMixture> {
        components_to_mixture(self.dim_x(), &self.transition(x, mode, t))
    }
}

pub(crate) fn components_to_mixture(dim: usize, comps: &[TransitionComponent]) -> Result<GaussianMixture> {
    let mut b = MixtureBuilder::with_capacity(dim, comps.len());
    for c in comps {
        b.push(c.weight, c.mean.as_slice(), &c.cov);
    }
    b.build()
}

/// A simulated run of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub modes: Vec<usize>,
    pub observations: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn draw(comps: &[TransitionComponent], dim: usize, rng: &mut crate::rng::Rng) -> Result<(DVector<f64>, usize)> {
    let mix = components_to_mixture(dim, comps)?;
    let sampler = MixtureSampler::new(&mix)?;
    let mut x = DVector::zeros(dim);
    let c = sampler.sample(rng, x.as_mut_slice());
    Ok((x, comps[c].mode))
}

/// Ancestral sampling of `T` steps of states and observations.
pub fn simulate(model: &dyn StateSpaceModel, t_len: usize, seed: u64) -> Result<Trajectory> {
    if t_len == 0 {
        return Err(crate::Error::InvalidArgument("trajectory length must be at least 1".into()));
    }
    let mut rng = rng_from(seed, &[0x73696d]);
    let d = model.dim_x();
    let (mut x, mut r) = draw(&model.initial(), d, &mut rng)?;
    let mut out = Trajectory {
        states: Vec::with_capacity(t_len),
        modes: Vec::with_capacity(t_len),
        observations: Vec::with_capacity(t_len),
    };
    for t in 1..=t_len {
        let y = model.sample_observation(x.as_slice(), r, t, &mut rng);
        out.states.push(x.clone());
        out.modes.push(r);
        out.observations.push(y);
        if t < t_len {
            (x, r) = draw(&model.transition(x.as_slice(), r, t), d, &mut rng)?;
        }
    }
    Ok(out)
}

/// `n` draws of a standard normal vector.
pub(crate) fn standard_normal(n: usize, rng: &mut dyn rand::RngCore) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(rand_distr::StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_trajectory_without_noise() {
        let p = LgssParams {
            a: DMatrix::identity(2, 2),
            c: DMatrix::identity(2, 2),
            q: DMatrix::zeros(2, 2),
            r: DMatrix::zeros(2, 2),
            x1_mean: DVector::from_vec(vec![1.5, -2.0]),
            x1_cov: DMatrix::zeros(2, 2),
        };
        let m = Lgss::new(p).unwrap();
        let tr = simulate(&m, 20, 1).unwrap();
        assert_eq!(tr.len(), 20);
        assert_eq!(tr.observations.len(), 20);
        for (x, y) in tr.states.iter().zip(&tr.observations) {
            assert_eq!(x.as_slice(), &[1.5, -2.0]);
            assert_eq!(y.as_slice(), &[1.5, -2.0]);
        }
    }

    #[test]
    fn simulation_is_deterministic_per_seed() {
        let m = make_nonlinear_benchmark();
        assert_eq!(simulate(&m, 30, 4).unwrap(), simulate(&m, 30, 4).unwrap());
        assert_ne!(simulate(&m, 30, 4).unwrap(), simulate(&m, 30, 5).unwrap());
        let j = make_jmls(3).unwrap();
        assert_eq!(simulate(&j, 30, 4).unwrap(), simulate(&j, 30, 4).unwrap());
    }

    #[test]
    fn scalar_stationary_variance() {
        let a = 0.8;
        let p = LgssParams {
            a: DMatrix::from_element(1, 1, a),
            c: DMatrix::identity(1, 1),
            q: DMatrix::identity(1, 1),
            r: DMatrix::identity(1, 1),
            x1_mean: DVector::zeros(1),
            x1_cov: DMatrix::from_element(1, 1, 1.0 / (1.0 - a * a)),
        };
        let m = Lgss::new(p).unwrap();
        let tr = simulate(&m, 100_000, 2).unwrap();
        let v = tr.states.iter().map(|x| x[0] * x[0]).sum::<f64>() / tr.len() as f64;
        // Autocorrelated samples: effective size ≈ n (1 − a²) / (1 + a²).
        let want = 1.0 / (1.0 - a * a);
        assert_relative_eq!(v, want, max_relative = 0.05);
    }

    #[test]
    fn transitions_are_valid_mixtures() {
        let models: Vec<Box<dyn StateSpaceModel>> = vec![
            Box::new(make_lgss(1, 3, 1).unwrap()),
            Box::new(make_jmls(1).unwrap()),
            Box::new(make_nonlinear_benchmark()),
            Box::new(make_clgss(1).unwrap()),
        ];
        for m in &models {
            let x = vec![0.3; m.dim_x()];
            for mode in 0..m.num_modes() {
                let mix = m.transition_mixture(&x, mode, 1).unwrap();
                assert_eq!(mix.dim(), m.dim_x());
                assert_relative_eq!(mix.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
                let y = vec![0.1; m.dim_y()];
                assert!(m.log_likelihood(&x, mode, &y, 1).is_finite());
            }
            let init = components_to_mixture(m.dim_x(), &m.initial()).unwrap();
            assert_eq!(init.dim(), m.dim_x());
        }
    }
}
