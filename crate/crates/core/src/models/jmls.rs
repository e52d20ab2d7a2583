use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::lgss::random_stable_observable;
use super::{standard_normal, StateSpaceModel, TransitionComponent};
use crate::error::{Error, Result};
use crate::linalg::{check_psd, cholesky_jittered, log_normal_pdf_factored};
use crate::rng::rng_from;

/// Dynamics of one mode: `x_{t+1} = A x_t + F v_t`, `y_t = C x_t + G e_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMode {
    pub a: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

/// Jump Markov linear system: mode `r_t` follows a Markov chain with transition matrix
/// `pi[k][ℓ] = P(r_{t+1} = ℓ | r_t = k)`, and `(x_{t+1}, y_t)` use mode `r_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct JmlsParams {
    pub pi: Vec<Vec<f64>>,
    pub modes: Vec<LinearMode>,
    pub initial_mode: Vec<f64>,
    pub x1_mean: DVector<f64>,
    pub x1_cov: DMatrix<f64>,
}

impl JmlsParams {
    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn dim_x(&self) -> usize {
        self.x1_mean.len()
    }

    pub fn dim_y(&self) -> usize {
        self.modes[0].c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_modes();
        if k == 0 || self.pi.len() != k || self.initial_mode.len() != k {
            return Err(Error::InvalidArgument("mode counts of Π, modes and initial law differ".into()));
        }
        for row in self.pi.iter().chain(std::iter::once(&self.initial_mode)) {
            if row.len() != k || row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidArgument("mode probabilities must be nonnegative".into()));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument("mode probabilities must sum to 1".into()));
            }
        }
        let d = self.dim_x();
        let m = self.dim_y();
        for md in &self.modes {
            if md.a.shape() != (d, d) || md.f.nrows() != d || md.c.shape() != (m, d) || md.g.nrows() != m {
                return Err(Error::InvalidArgument("mode matrices have inconsistent shapes".into()));
            }
        }
        check_psd(&self.x1_cov, 1e-12)
    }
}

struct ModeCache {
    q: Arc<DMatrix<f64>>,
    r_chol: DMatrix<f64>,
}

pub struct Jmls {
    params: JmlsParams,
    cache: Vec<ModeCache>,
    x1_cov: Arc<DMatrix<f64>>,
}

impl Jmls {
    pub fn new(params: JmlsParams) -> Result<Self> {
        params.validate()?;
        let cache = params
            .modes
            .iter()
            .map(|md| {
                Ok(ModeCache {
                    q: Arc::new(&md.f * md.f.transpose()),
                    r_chol: cholesky_jittered(&(&md.g * md.g.transpose()))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Jmls {
            x1_cov: Arc::new(params.x1_cov.clone()),
            cache,
            params,
        })
    }

    pub fn params(&self) -> &JmlsParams {
        &self.params
    }
}

impl StateSpaceModel for Jmls {
    fn name(&self) -> &str {
        "jmls"
    }

    fn dim_x(&self) -> usize {
        self.params.dim_x()
    }

    fn dim_y(&self) -> usize {
        self.params.dim_y()
    }

    fn num_modes(&self) -> usize {
        self.params.num_modes()
    }

    fn initial(&self) -> Vec<TransitionComponent> {
        self.params
            .initial_mode
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(mode, &p)| TransitionComponent {
                weight: p,
                mean: self.params.x1_mean.clone(),
                cov: Arc::clone(&self.x1_cov),
                mode,
            })
            .collect()
    }

    fn transition(&self, x: &[f64], mode: usize, _t: usize) -> Vec<TransitionComponent> {
        let md = &self.params.modes[mode];
        let mean = &md.a * DVector::from_column_slice(x);
        self.params.pi[mode]
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(next, &p)| TransitionComponent {
                weight: p,
                mean: mean.clone(),
                cov: Arc::clone(&self.cache[mode].q),
                mode: next,
            })
            .collect()
    }

    fn log_likelihood(&self, x: &[f64], mode: usize, y: &[f64], _t: usize) -> f64 {
        let pred = &self.params.modes[mode].c * DVector::from_column_slice(x);
        log_normal_pdf_factored(y, pred.as_slice(), &self.cache[mode].r_chol)
    }

    fn sample_observation(&self, x: &[f64], mode: usize, _t: usize, rng: &mut dyn rand::RngCore) -> DVector<f64> {
        let md = &self.params.modes[mode];
        let e = standard_normal(md.g.ncols(), rng);
        &md.c * DVector::from_column_slice(x) + &md.g * e
    }
}

/// Two random stable observable 2-d modes with scalar observations, `F = I`, `G = 1`,
/// `Π = [[0.7, 0.3], [0.3, 0.7]]`, uniform initial mode and `x₁ ~ N(0, I)`.
pub fn make_jmls(seed: u64) -> Result<Jmls> {
    let mut rng = rng_from(seed, &[0x6a6d6c73]);
    let mut modes = Vec::new();
    for _ in 0..2 {
        let (a, c) = random_stable_observable(&mut rng, 2, 1)?;
        modes.push(LinearMode {
            a,
            f: DMatrix::identity(2, 2),
            c,
            g: DMatrix::identity(1, 1),
        });
    }
    Jmls::new(JmlsParams {
        pi: vec![vec![0.7, 0.3], vec![0.3, 0.7]],
        modes,
        initial_mode: vec![0.5, 0.5],
        x1_mean: DVector::zeros(2),
        x1_cov: DMatrix::identity(2, 2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::simulate;

    #[test]
    fn transition_has_two_components_weighted_by_pi() {
        let m = make_jmls(5).unwrap();
        for mode in 0..2 {
            let tr = m.transition(&[1.0, -1.0], mode, 1);
            assert_eq!(tr.len(), 2);
            let mut w: Vec<f64> = tr.iter().map(|c| c.weight).collect();
            w.sort_by(f64::total_cmp);
            assert_eq!(w, vec![0.3, 0.7]);
            assert_eq!(tr[mode].weight, 0.7);
        }
    }

    #[test]
    fn identity_switching_never_changes_mode() {
        let mut p = make_jmls(5).unwrap().params().clone();
        p.pi = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = Jmls::new(p).unwrap();
        for seed in 0..20 {
            let tr = simulate(&m, 50, seed).unwrap();
            assert!(tr.modes.iter().all(|&r| r == tr.modes[0]));
        }
    }

    #[test]
    fn mode_occupancy_matches_stationary_law() {
        let m = make_jmls(6).unwrap();
        let tr = simulate(&m, 100_000, 1).unwrap();
        let frac = tr.modes.iter().filter(|&&r| r == 0).count() as f64 / tr.len() as f64;
        // Stationary law of the symmetric chain is (0.5, 0.5).
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }
}
