use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{FilterConfig, FilterStep, FilterTrace, Sampler, MIN_TOTAL_WEIGHT};
use crate::error::{Error, Result};
use crate::exact::{kalman_predict, kalman_update_with_offset, GaussianBelief};
use crate::kernel::MixtureBuilder;
use crate::linalg::log_sum_exp;
use crate::models::ClgssParams;

/// Rao-Blackwellized filter for the conditionally linear model: the scalar `x` is
/// handled by particles drawn with the configured sampler, `z` by one Kalman filter per
/// particle. Steps report the mean of the joint state `[x, z]`.
pub fn run_rbpf(p: &ClgssParams, ys: &[DVector<f64>], cfg: &FilterConfig) -> Result<FilterTrace> {
    p.validate()?;
    if ys.is_empty() {
        return Err(Error::InvalidArgument("need at least one observation".into()));
    }
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("number of particles must be at least 1".into()));
    }
    if let Some(k) = &cfg.kernel {
        crate::error::ensure_dim(1, k.dim())?;
    }
    let dz = p.dim_z();
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

    let mut b = MixtureBuilder::new(1);
    b.push(1.0, &[p.x1_mean], &Arc::new(DMatrix::from_element(1, 1, p.x1_var)));
    let mut mix = b.build()?;
    // Predicted z belief attached to each mixture component.
    let mut comp_beliefs = vec![GaussianBelief::new(p.z1_mean.clone(), p.z1_cov.clone())];
    let q_x = Arc::new(DMatrix::from_element(1, 1, p.q_x));
    let mut log_z = 0.0;

    for (i, y) in ys.iter().enumerate() {
        let t = i + 1;
        let draw = sampler.sample(&mix, cfg.n, t)?;
        let pred = draw.particles;
        let anc = pred.ancestry().unwrap();
        let updated: Vec<(f64, GaussianBelief)> = (0..pred.len())
            .into_par_iter()
            .map(|j| {
                let mut prior = comp_beliefs[anc[j]].clone();
                prior.log_evidence = 0.0;
                let post = kalman_update_with_offset(&prior, &p.c, &p.r, Some(&p.h(pred.point(j)[0])), y.as_slice())?;
                Ok((pred.weights()[j].ln() + post.log_evidence, post))
            })
            .collect::<Result<Vec<_>>>()?;
        let logw: Vec<f64> = updated.iter().map(|u| u.0).collect();
        let log_w = log_sum_exp(&logw);
        if !(log_w >= MIN_TOTAL_WEIGHT.ln()) {
            return Err(Error::DegenerateWeights { t, log_total: log_w });
        }
        log_z += log_w;
        let w: Vec<f64> = logw.iter().map(|l| (l - log_w).exp()).collect();
        let posterior = pred.reweighted(w)?;

        let mut mean = DVector::zeros(1 + dz);
        for (j, (x, wj)) in posterior.iter().enumerate() {
            mean[0] += wj * x[0];
            let zm = &updated[j].1.mean;
            for k in 0..dz {
                mean[1 + k] += wj * zm[k];
            }
        }
        trace.steps.push(FilterStep {
            t,
            filtered_mean: mean,
            predictive_mean: pred.mean(),
            log_w,
            log_z,
            fw_error: draw.fw_error,
            effective_n: pred.len(),
            ess: posterior.ess(),
        });

        if t < ys.len() {
            let live: Vec<usize> = (0..posterior.len()).filter(|&j| posterior.weights()[j] > 0.0).collect();
            let mut b = MixtureBuilder::with_capacity(1, live.len());
            for &j in &live {
                b.push(posterior.weights()[j], &[p.drift(posterior.point(j)[0], t)], &q_x);
            }
            mix = b.build()?;
            comp_beliefs = live
                .par_iter()
                .map(|&j| kalman_predict(&updated[j].1, &p.a_z(posterior.point(j)[0]), &p.qz))
                .collect::<Result<Vec<_>>>()?;
        }
        if cfg.keep_particles {
            trace.modes.push(vec![0; pred.len()]);
            trace.predictive.push(pred);
            trace.posterior.push(posterior);
        }
    }
    Ok(trace)
}
