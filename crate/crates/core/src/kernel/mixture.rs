use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{self, check_psd, psd_factor};

/// Finite mixture of Gaussians `Σ πᵢ N(μᵢ, Σᵢ)`.
///
/// Components that share a covariance matrix point at the same entry of an internal
/// table of distinct covariances, so per-covariance work (factorizations, whitening)
/// is done once per distinct matrix rather than once per component.
#[derive(Clone, Debug)]
pub struct GaussianMixture {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    covs: Vec<Arc<DMatrix<f64>>>,
    cov_index: Vec<usize>,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, covs: Vec<DMatrix<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != covs.len() {
            return Err(Error::InvalidArgument(format!(
                "mixture needs equal, nonzero numbers of weights ({}), means ({}) and covariances ({})",
                weights.len(),
                means.len(),
                covs.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::InvalidArgument("mixture dimension must be positive".into()));
        }
        let mut b = MixtureBuilder::new(dim);
        for ((w, m), c) in weights.iter().zip(&means).zip(covs) {
            ensure_dim(dim, m.len())?;
            ensure_dim(dim, c.nrows())?;
            ensure_dim(dim, c.ncols())?;
            b.push(*w, m.as_slice(), &Arc::new(c));
        }
        let mix = b.build_unnormalized();
        mix.validate()?;
        Ok(mix)
    }

    /// Single Gaussian `N(mean, cov)`.
    pub fn single(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![cov])
    }

    /// Dirac mass at `point` (a Gaussian with zero covariance).
    pub fn point_mass(point: &[f64]) -> Self {
        let d = point.len();
        GaussianMixture {
            dim: d,
            weights: vec![1.0],
            means: point.to_vec(),
            covs: vec![Arc::new(DMatrix::zeros(d, d))],
            cov_index: vec![0],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("mixture weights must be finite and nonnegative".into()));
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {s}, not 1")));
        }
        if self.means.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("mixture means must be finite".into()));
        }
        for c in &self.covs {
            check_psd(c, PSD_TOL)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cov(&self, i: usize) -> &DMatrix<f64> {
        &self.covs[self.cov_index[i]]
    }

    /// Table of distinct covariance matrices.
    pub fn distinct_covs(&self) -> &[Arc<DMatrix<f64>>] {
        &self.covs
    }

    /// Index of component `i`'s covariance in [`distinct_covs`](Self::distinct_covs).
    pub fn cov_index(&self, i: usize) -> usize {
        self.cov_index[i]
    }

    /// Mean of the mixture.
    pub fn mixture_mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for i in 0..self.len() {
            for (a, b) in m.iter_mut().zip(self.mean(i)) {
                *a += self.weights[i] * b;
            }
        }
        m
    }

    /// Covariance of the mixture (law of total covariance).
    pub fn mixture_covariance(&self) -> DMatrix<f64> {
        let mu = self.mixture_mean();
        let mut c = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.len() {
            let d = linalg::dvec(self.mean(i)) - &mu;
            c += self.weights[i] * (self.cov(i) + &d * d.transpose());
        }
        c
    }

    /// Density at `x`. Components with singular covariance contribute nothing.
    pub fn pdf(&self, x: &[f64]) -> f64 {
        let factors: Vec<Option<DMatrix<f64>>> =
            self.covs.iter().map(|c| c.clone_owned().cholesky().map(|f| f.l())).collect();
        (0..self.len())
            .filter_map(|i| {
                factors[self.cov_index[i]]
                    .as_ref()
                    .map(|l| self.weights[i] * linalg::log_normal_pdf_factored(x, self.mean(i), l).exp())
            })
            .sum()
    }
}

/// Random mixture with means uniform on `[-5, 5]^d`, isotropic covariances `s² I` with
/// `s²` uniform on `[0.1, 4.1]` and weights from normalized uniforms.
pub fn benchmark_mixture<R: Rng + ?Sized>(rng: &mut R, dim: usize, k: usize) -> Result<GaussianMixture> {
    if dim == 0 || k == 0 {
        return Err(Error::InvalidArgument("mixture needs dim ≥ 1 and at least one component".into()));
    }
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for _ in 0..k {
        means.push(DVector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0)));
        covs.push(DMatrix::identity(dim, dim) * rng.random_range(0.1..4.1));
        weights.push(rng.random::<f64>());
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GaussianMixture::new(weights, means, covs)
}

/// Incremental construction of a [`GaussianMixture`] with covariance sharing.
#[derive(Debug)]
pub struct MixtureBuilder {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    covs: Vec<Arc<DMatrix<f64>>>,
    cov_index: Vec<usize>,
}

// Value comparison against the distinct table is skipped beyond this many entries.
const DEDUP_SCAN_LIMIT: usize = 64;

impl MixtureBuilder {
    pub fn new(dim: usize) -> Self {
        MixtureBuilder {
            dim,
            weights: Vec::new(),
            means: Vec::new(),
            covs: Vec::new(),
            cov_index: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, components: usize) -> Self {
        let mut b = Self::new(dim);
        b.weights.reserve(components);
        b.means.reserve(components * dim);
        b.cov_index.reserve(components);
        b
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Appends a component; returns its index. The weight may be unnormalized.
    pub fn push(&mut self, weight: f64, mean: &[f64], cov: &Arc<DMatrix<f64>>) -> usize {
        debug_assert_eq!(mean.len(), self.dim);
        let idx = match self.covs.iter().position(|c| Arc::ptr_eq(c, cov)) {
            Some(i) => i,
            None => {
                let found = if self.covs.len() < DEDUP_SCAN_LIMIT {
                    self.covs.iter().position(|c| **c == **cov)
                } else {
                    None
                };
                found.unwrap_or_else(|| {
                    self.covs.push(Arc::clone(cov));
                    self.covs.len() - 1
                })
            }
        };
        self.weights.push(weight);
        self.means.extend_from_slice(mean);
        self.cov_index.push(idx);
        self.weights.len() - 1
    }

    fn build_unnormalized(self) -> GaussianMixture {
        GaussianMixture {
            dim: self.dim,
            weights: self.weights,
            means: self.means,
            covs: self.covs,
            cov_index: self.cov_index,
        }
    }

    /// Normalizes the weights and returns the mixture. Fails if the total weight is
    /// not positive and finite.
    pub fn build(mut self) -> Result<GaussianMixture> {
        let total: f64 = self.weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidArgument(format!("cannot normalize mixture weights (total {total})")));
        }
        for w in &mut self.weights {
            *w /= total;
        }
        Ok(self.build_unnormalized())
    }
}

/// Draws from a mixture: component selection plus `μ + L z` with `L Lᵀ = Σ`.
pub struct MixtureSampler<'a> {
    mixture: &'a GaussianMixture,
    factors: Vec<DMatrix<f64>>,
    cumulative: Vec<f64>,
}

impl<'a> MixtureSampler<'a> {
    pub fn new(mixture: &'a GaussianMixture) -> Result<Self> {
        let factors = mixture
            .distinct_covs()
            .iter()
            .map(|c| psd_factor(c))
            .collect::<Result<Vec<_>>>()?;
        let mut acc = 0.0;
        let cumulative = mixture
            .weights()
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(MixtureSampler {
            mixture,
            factors,
            cumulative,
        })
    }

    pub fn mixture(&self) -> &GaussianMixture {
        self.mixture
    }

    /// Inverse CDF of the component distribution in storage order.
    pub fn component_for_uniform(&self, u: f64) -> usize {
        let total = *self.cumulative.last().unwrap();
        let target = u * total;
        let i = self.cumulative.partition_point(|&c| c <= target);
        i.min(self.cumulative.len() - 1)
    }

    /// Writes `μᵢ + Lᵢ z` into `out`.
    pub fn transform(&self, component: usize, z: &[f64], out: &mut [f64]) {
        let l = &self.factors[self.mixture.cov_index(component)];
        let mean = self.mixture.mean(component);
        for r in 0..out.len() {
            let mut s = mean[r];
            for (c, zc) in z.iter().enumerate() {
                s += l[(r, c)] * zc;
            }
            out[r] = s;
        }
    }

    pub fn sample_from_component<R: Rng + ?Sized>(&self, component: usize, rng: &mut R, out: &mut [f64]) {
        let z: Vec<f64> = (0..out.len()).map(|_| rng.sample(StandardNormal)).collect();
        self.transform(component, &z, out);
    }

    /// One i.i.d. draw; returns the component it came from.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> usize {
        let c = self.component_for_uniform(rng.random::<f64>());
        self.sample_from_component(c, rng, out);
        c
    }
}
