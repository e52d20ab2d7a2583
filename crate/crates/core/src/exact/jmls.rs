use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::kalman::{kalman_predict, kalman_update_with_offset, GaussianBelief};
use crate::error::{Error, Result};
use crate::linalg::log_sum_exp;
use crate::models::JmlsParams;

/// Largest supported number of branches, `2^20`.
pub const MAX_BRANCH_LOG2: usize = 20;

/// One mode history with its Kalman belief and normalized log weight.
#[derive(Clone, Debug)]
pub struct KalmanBranch {
    pub log_weight: f64,
    pub belief: GaussianBelief,
    pub modes: Vec<usize>,
}

/// Mixture of Kalman filters over all mode histories.
#[derive(Clone, Debug)]
pub struct KalmanMixtureBelief {
    pub branches: Vec<KalmanBranch>,
}

impl KalmanMixtureBelief {
    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn mean(&self) -> DVector<f64> {
        let d = self.branches[0].belief.mean.len();
        self.branches
            .iter()
            .fold(DVector::zeros(d), |acc, b| acc + &b.belief.mean * b.log_weight.exp())
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let mu = self.mean();
        let d = mu.len();
        self.branches.iter().fold(DMatrix::zeros(d, d), |acc, b| {
            let dm = &b.belief.mean - &mu;
            acc + (&b.belief.cov + &dm * dm.transpose()) * b.log_weight.exp()
        })
    }
}

/// Per-step output of the exhaustive filter.
#[derive(Clone, Debug)]
pub struct JmlsExactRun {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub log_evidence: f64,
    pub branch_counts: Vec<usize>,
    pub final_belief: KalmanMixtureBelief,
}

fn normalize(branches: &mut [KalmanBranch]) -> f64 {
    let lw: Vec<f64> = branches.iter().map(|b| b.log_weight).collect();
    let total = log_sum_exp(&lw);
    for b in branches {
        b.log_weight -= total;
    }
    total
}

/// Exact filtering by enumerating every mode history, one Kalman filter per history.
/// After step `t` there are `K^t` branches, which must not exceed `2^20`.
pub fn jmls_exact_filter(p: &JmlsParams, ys: &[DVector<f64>]) -> Result<JmlsExactRun> {
    p.validate()?;
    let k = p.num_modes();
    let t_len = ys.len();
    let total_branches = (k as f64).powi(t_len as i32);
    if total_branches > (1u64 << MAX_BRANCH_LOG2) as f64 {
        return Err(Error::InvalidArgument(format!(
            "exact JMLS filter would need {k}^{t_len} branches (cap 2^{MAX_BRANCH_LOG2})"
        )));
    }
    let qs: Vec<DMatrix<f64>> = p.modes.iter().map(|m| &m.f * m.f.transpose()).collect();
    let rs: Vec<DMatrix<f64>> = p.modes.iter().map(|m| &m.g * m.g.transpose()).collect();
    let mut run = JmlsExactRun {
        means: Vec::with_capacity(t_len),
        covs: Vec::with_capacity(t_len),
        log_evidence: 0.0,
        branch_counts: Vec::with_capacity(t_len),
        final_belief: KalmanMixtureBelief { branches: Vec::new() },
    };
    // Predictive branches for step t, before the update with y_t.
    let mut pred: Vec<KalmanBranch> = (0..k)
        .map(|r| KalmanBranch {
            log_weight: p.initial_mode[r].ln(),
            belief: GaussianBelief::new(p.x1_mean.clone(), p.x1_cov.clone()),
            modes: vec![r],
        })
        .collect();
    for (i, y) in ys.iter().enumerate() {
        let mut post = pred
            .par_iter()
            .map(|b| {
                let r = *b.modes.last().unwrap();
                let mut belief = b.belief.clone();
                belief.log_evidence = 0.0;
                let upd = kalman_update_with_offset(&belief, &p.modes[r].c, &rs[r], None, y.as_slice())?;
                Ok(KalmanBranch {
                    log_weight: b.log_weight + upd.log_evidence,
                    belief: upd,
                    modes: b.modes.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        run.log_evidence += normalize(&mut post);
        run.branch_counts.push(post.len());
        let mix = KalmanMixtureBelief { branches: post };
        run.means.push(mix.mean());
        run.covs.push(mix.covariance());
        if i + 1 == t_len {
            run.final_belief = mix;
            break;
        }
        pred = mix
            .branches
            .par_iter()
            .map(|b| {
                let r = *b.modes.last().unwrap();
                let moved = kalman_predict(&b.belief, &p.modes[r].a, &qs[r])?;
                Ok((0..k)
                    .map(|next| {
                        let mut modes = b.modes.clone();
                        modes.push(next);
                        KalmanBranch {
                            log_weight: b.log_weight + p.pi[r][next].ln(),
                            belief: moved.clone(),
                            modes,
                        }
                    })
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
    }
    Ok(run)
}
