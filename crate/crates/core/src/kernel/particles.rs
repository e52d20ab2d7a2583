use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::compensated_sum;

/// Weighted point set `Σ wᵢ δ(xᵢ)` with convex weights.
///
/// Points are stored contiguously, `dim` values per point. `ancestry`, when present,
/// indexes into the previous time step's set (or into the transition mixture that
/// produced these points).
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedParticleSet {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    ancestry: Option<Vec<usize>>,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl WeightedParticleSet {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("particle dimension must be positive".into()));
        }
        if points.len() != dim * weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates do not make {} points of dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::InvalidArgument("particle set is empty".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("particle weights must be finite and nonnegative".into()));
        }
        let s = compensated_sum(&weights);
        if (s - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidArgument(format!("particle weights sum to {s}, not 1")));
        }
        Ok(WeightedParticleSet {
            dim,
            points,
            weights,
            ancestry: None,
        })
    }

    /// Like [`new`](Self::new) but rescales the weights to sum to one first.
    pub fn normalized(dim: usize, points: Vec<f64>, mut weights: Vec<f64>) -> Result<Self> {
        let s = compensated_sum(&weights);
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidArgument(format!("cannot normalize weights with total {s}")));
        }
        for w in &mut weights {
            *w /= s;
        }
        Self::new(dim, points, weights)
    }

    /// Equal weights `1/n`.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len() / dim.max(1);
        Self::new(dim, points, vec![1.0 / n as f64; n])
    }

    pub fn from_vectors(points: &[DVector<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidArgument("points have differing dimensions".into()));
        }
        let flat = points.iter().flat_map(|p| p.iter().copied()).collect();
        Self::new(dim, flat, weights)
    }

    /// Attaches ancestor indices, each of which must be `< parent_len`.
    pub fn with_ancestry(mut self, ancestry: Vec<usize>, parent_len: usize) -> Result<Self> {
        if ancestry.len() != self.len() {
            return Err(Error::InvalidArgument("ancestry length differs from particle count".into()));
        }
        if let Some(bad) = ancestry.iter().find(|&&a| a >= parent_len) {
            return Err(Error::InvalidArgument(format!("ancestor index {bad} out of range {parent_len}")));
        }
        self.ancestry = Some(ancestry);
        Ok(self)
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

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ancestry(&self) -> Option<&[usize]> {
        self.ancestry.as_deref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// Weighted mean of the points.
    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for (x, w) in self.iter() {
            for (a, b) in m.iter_mut().zip(x) {
                *a += w * b;
            }
        }
        m
    }

    /// Same points with new weights (normalized), keeping ancestry.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        let mut out = Self::normalized(self.dim, self.points.clone(), weights)?;
        out.ancestry = self.ancestry.clone();
        Ok(out)
    }

    /// Effective sample size `1 / Σ wᵢ²`.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}
