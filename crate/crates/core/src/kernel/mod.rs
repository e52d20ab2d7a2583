//! Gaussian kernel `κ(x, y) = exp(-‖x - y‖² / 2σ²)` and the closed-form RKHS
//! quantities it admits for Gaussian mixtures.
//!
//! For `p = Σ πᵢ N(μᵢ, Σᵢ)` the mean map is
//! `μ_p(x) = Σ πᵢ (√(2π) σ)^d N(x | μᵢ, Σᵢ + σ² I)` and its squared norm follows from
//! the convolution of two Gaussians,
//! `‖μ_p‖² = Σᵢⱼ πᵢ πⱼ (√(2π) σ)^d N(μᵢ | μⱼ, Σᵢ + Σⱼ + σ² I)`.
//! Both reduce to sums of `exp(-½‖a - b‖²)` after whitening by the Cholesky factor of
//! the relevant covariance, which is how [`MeanMap`] evaluates them.

mod mixture;
mod particles;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use mixture::{benchmark_mixture, GaussianMixture, MixtureBuilder, MixtureSampler};
pub use particles::WeightedParticleSet;

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{cholesky_jittered, forward_substitute, half_log_det};

/// Bandwidth `σ²` and state dimension of a Gaussian kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig {
    sigma2: f64,
    dim: usize,
}

impl KernelConfig {
    pub fn new(sigma2: f64, dim: usize) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidArgument(format!("kernel bandwidth must be positive, got {sigma2}")));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("kernel dimension must be positive".into()));
        }
        Ok(KernelConfig { sigma2, dim })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `κ` without dimension checks.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-0.5 * d2 / self.sigma2).exp()
    }
}

/// `κ(x, y)`.
pub fn kernel_eval(x: &[f64], y: &[f64], k: &KernelConfig) -> Result<f64> {
    ensure_dim(k.dim, x.len())?;
    ensure_dim(k.dim, y.len())?;
    Ok(k.eval_unchecked(x, y))
}

struct WhitenedGroup {
    chol: DMatrix<f64>,
    log_coef: Vec<f64>,
    whitened: Vec<f64>,
}

/// Precomputed evaluator of `μ_p(·)` for one mixture and kernel.
pub struct MeanMap<'a> {
    mixture: &'a GaussianMixture,
    kernel: KernelConfig,
    groups: Vec<WhitenedGroup>,
}

// Below this many component evaluations a batch is not worth splitting across threads.
const PARALLEL_WORK: usize = 1 << 16;

impl<'a> MeanMap<'a> {
    pub fn new(mixture: &'a GaussianMixture, kernel: &KernelConfig) -> Result<Self> {
        ensure_dim(kernel.dim, mixture.dim())?;
        let d = mixture.dim();
        let log_sigma_d = 0.5 * d as f64 * kernel.sigma2.ln();
        let mut groups = Vec::with_capacity(mixture.distinct_covs().len());
        for cov in mixture.distinct_covs() {
            let mut s = (**cov).clone();
            for i in 0..d {
                s[(i, i)] += kernel.sigma2;
            }
            let chol = cholesky_jittered(&s)?;
            groups.push(WhitenedGroup {
                log_coef: Vec::new(),
                whitened: Vec::new(),
                chol,
            });
        }
        for i in 0..mixture.len() {
            let g = &mut groups[mixture.cov_index(i)];
            let mut w = mixture.mean(i).to_vec();
            forward_substitute(&g.chol, &mut w);
            g.whitened.extend_from_slice(&w);
            g.log_coef.push(mixture.weight(i).ln() + log_sigma_d - half_log_det(&g.chol));
        }
        Ok(MeanMap {
            mixture,
            kernel: *kernel,
            groups,
        })
    }

    pub fn mixture(&self) -> &GaussianMixture {
        self.mixture
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    fn eval_with(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        let d = x.len();
        let mut total = 0.0;
        for g in &self.groups {
            buf.copy_from_slice(x);
            forward_substitute(&g.chol, buf);
            for (m, lc) in g.whitened.chunks_exact(d).zip(&g.log_coef) {
                let q: f64 = m.iter().zip(buf.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                total += (lc - 0.5 * q).exp();
            }
        }
        total
    }

    /// `μ_p(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        ensure_dim(self.kernel.dim, x.len())?;
        let mut buf = vec![0.0; x.len()];
        Ok(self.eval_with(x, &mut buf))
    }

    /// `μ_p` at each point of a contiguous `dim`-strided buffer.
    pub fn eval_many(&self, points: &[f64]) -> Vec<f64> {
        let d = self.kernel.dim;
        let work = points.len() / d * self.mixture.len();
        if work < PARALLEL_WORK {
            let mut buf = vec![0.0; d];
            points.chunks_exact(d).map(|x| self.eval_with(x, &mut buf)).collect()
        } else {
            points
                .par_chunks_exact(d)
                .map_init(|| vec![0.0; d], |buf, x| self.eval_with(x, buf))
                .collect()
        }
    }

    /// `‖μ_p‖²_H` in closed form.
    pub fn sqnorm(&self) -> Result<f64> {
        let mix = self.mixture;
        let d = mix.dim();
        let sigma2 = self.kernel.sigma2;
        let log_sigma_d = 0.5 * d as f64 * sigma2.ln();
        let covs = mix.distinct_covs();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); covs.len()];
        for i in 0..mix.len() {
            members[mix.cov_index(i)].push(i);
        }
        let mut total = 0.0;
        for a in 0..covs.len() {
            for b in a..covs.len() {
                let mut s = &*covs[a] + &*covs[b];
                for i in 0..d {
                    s[(i, i)] += sigma2;
                }
                let chol = &cholesky_jittered(&s)?;
                let coef = log_sigma_d - half_log_det(chol);
                let whiten = |idx: &[usize]| -> Vec<f64> {
                    let mut out = Vec::with_capacity(idx.len() * d);
                    for &i in idx {
                        let mut w = mix.mean(i).to_vec();
                        forward_substitute(chol, &mut w);
                        out.extend_from_slice(&w);
                    }
                    out
                };
                let wa = whiten(&members[a]);
                let wb = if a == b { wa.clone() } else { whiten(&members[b]) };
                let mut block = 0.0;
                for (ia, xa) in members[a].iter().zip(wa.chunks_exact(d)) {
                    let pa = mix.weight(*ia);
                    let mut row = 0.0;
                    for (ib, xb) in members[b].iter().zip(wb.chunks_exact(d)) {
                        let q: f64 = xa.iter().zip(xb).map(|(u, v)| (u - v) * (u - v)).sum();
                        row += mix.weight(*ib) * (-0.5 * q).exp();
                    }
                    block += pa * row;
                }
                let mult = if a == b { 1.0 } else { 2.0 };
                total += mult * coef.exp() * block;
            }
        }
        Ok(total)
    }
}

/// `μ_p(x)` for a single point.
pub fn mean_map_eval(p: &GaussianMixture, x: &[f64], k: &KernelConfig) -> Result<f64> {
    MeanMap::new(p, k)?.eval(x)
}

/// `‖μ(p)‖²_H`.
pub fn mean_map_sqnorm(p: &GaussianMixture, k: &KernelConfig) -> Result<f64> {
    MeanMap::new(p, k)?.sqnorm()
}

/// Radicand below this is reported as a numerical failure instead of clamped to zero.
pub const MMD_NEGATIVE_TOL: f64 = -1e-10;

/// `√(sq − 2 cross + self)`, clamped at zero for small negative radicands.
pub fn mmd_from_parts(mean_sqnorm: f64, cross: f64, self_term: f64) -> Result<f64> {
    let r = mean_sqnorm - 2.0 * cross + self_term;
    if r < MMD_NEGATIVE_TOL || r.is_nan() {
        return Err(Error::Numerical(format!("negative MMD radicand {r:e}")));
    }
    Ok(r.max(0.0).sqrt())
}

/// `Σᵢⱼ wᵢ wⱼ κ(xᵢ, xⱼ)`.
pub fn particle_self_term(q: &WeightedParticleSet, k: &KernelConfig) -> f64 {
    let n = q.len();
    let mut total = 0.0;
    for i in 0..n {
        let xi = q.point(i);
        let mut row = 0.5 * q.weights()[i];
        for j in (i + 1)..n {
            row += q.weights()[j] * k.eval_unchecked(xi, q.point(j));
        }
        total += 2.0 * q.weights()[i] * row;
    }
    total
}

/// MMD between a mixture (via a prepared [`MeanMap`]) and a weighted set.
pub fn mmd_with(map: &MeanMap<'_>, mean_sqnorm: f64, q: &WeightedParticleSet) -> Result<f64> {
    ensure_dim(map.kernel.dim, q.dim())?;
    let cross: f64 = map
        .eval_many(q.points_flat())
        .iter()
        .zip(q.weights())
        .map(|(m, w)| m * w)
        .sum();
    mmd_from_parts(mean_sqnorm, cross, particle_self_term(q, &map.kernel))
}

/// `MMD(p, q) = ‖μ(p) − μ(q)‖_H` for a mixture `p` and weighted set `q`.
pub fn mmd(p: &GaussianMixture, q: &WeightedParticleSet, k: &KernelConfig) -> Result<f64> {
    ensure_dim(p.dim(), q.dim())?;
    let map = MeanMap::new(p, k)?;
    let sq = map.sqnorm()?;
    mmd_with(&map, sq, q)
}

/// Expected squared MMD of an `n`-sample Monte Carlo estimate,
/// `(R² − ‖μ(p)‖²) / n` with `R = 1` for the Gaussian kernel.
pub fn mc_mean_map_bound(p: &GaussianMixture, k: &KernelConfig, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    Ok((1.0 - mean_map_sqnorm(p, k)?) / n as f64)
}
