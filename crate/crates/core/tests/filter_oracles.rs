mod common;

use common::{mean, replica_stats, sample_sd};
use nalgebra::DVector;
use rayon::prelude::*;
use skh_core::exact::{jmls_exact_filter, kalman_filter};
use skh_core::fw::FwVariant;
use skh_core::models::{make_clgss, make_jmls, make_lgss, simulate, Lgss};
use skh_core::pf::{run_filter, run_rbpf, FilterConfig, SamplerKind};
use skh_core::KernelConfig;

fn all_samplers() -> Vec<SamplerKind> {
    vec![
        SamplerKind::McMultinomial,
        SamplerKind::McStratified,
        SamplerKind::QmcSobol,
        SamplerKind::Skh { variant: FwVariant::Fw, m: 1000 },
        SamplerKind::Skh { variant: FwVariant::FwLs, m: 1000 },
        SamplerKind::Skh { variant: FwVariant::Fcfw, m: 1000 },
    ]
}

#[test]
fn weights_normalized_and_log_z_accumulates_for_every_sampler() {
    let m = make_lgss(4, 3, 1).unwrap();
    let tr = simulate(&m, 10, 1).unwrap();
    for s in all_samplers() {
        let cfg = FilterConfig::new(30, s, 2)
            .with_kernel(KernelConfig::new(1.0, 3).unwrap())
            .keeping_particles();
        let f = run_filter(&m, &tr.observations, &cfg).unwrap();
        let mut acc = 0.0;
        for (i, st) in f.steps.iter().enumerate() {
            acc += st.log_w;
            assert!((st.log_z - acc).abs() <= 1e-12 * acc.abs().max(1.0));
            assert!(st.w_hat() >= 0.0);
            assert_eq!(st.fw_error.is_some(), s.is_skh());
            for set in [&f.predictive[i], &f.posterior[i]] {
                assert!((set.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            assert_eq!(st.effective_n, f.predictive[i].len());
            assert!(st.effective_n <= 30);
        }
    }
}

#[test]
fn mc_filter_tracks_kalman_means_and_evidence() {
    let m = make_lgss(1, 3, 1).unwrap();
    let tr = simulate(&m, 50, 3).unwrap();
    let kf = kalman_filter(m.params(), &tr.observations).unwrap();
    let runs: Vec<_> = (0..20u64)
        .into_par_iter()
        .map(|s| run_filter(&m, &tr.observations, &FilterConfig::new(10_000, SamplerKind::McMultinomial, s)).unwrap())
        .collect();
    for t in 0..50 {
        let reps: Vec<DVector<f64>> = runs.iter().map(|r| r.steps[t].filtered_mean.clone()).collect();
        let (_, se) = replica_stats(&reps);
        let spread = se * (reps.len() as f64).sqrt();
        let diff = &runs[0].steps[t].filtered_mean - &kf.filtered[t].mean;
        for i in 0..3 {
            assert!(diff[i].abs() <= 4.0 * spread[i], "t={t} coord {i}: {} vs 4σ = {}", diff[i], 4.0 * spread[i]);
        }
    }
    assert!((runs[0].log_evidence() - kf.log_evidence()).abs() < 0.5);
}

#[test]
fn evidence_estimate_is_unbiased() {
    let m = make_lgss(6, 2, 1).unwrap();
    let tr = simulate(&m, 5, 4).unwrap();
    let z = kalman_filter(m.params(), &tr.observations).unwrap().log_evidence().exp();
    for s in [SamplerKind::McMultinomial, SamplerKind::McStratified] {
        let zs: Vec<f64> = (0..500u64)
            .into_par_iter()
            .map(|seed| {
                run_filter(&m, &tr.observations, &FilterConfig::new(20, s, seed))
                    .unwrap()
                    .log_evidence()
                    .exp()
            })
            .collect();
        let se = sample_sd(&zs) / (zs.len() as f64).sqrt();
        assert!((mean(&zs) - z).abs() <= 3.0 * se, "{}: {} vs {z} (se {se})", s.name(), mean(&zs));
    }
}

#[test]
fn zero_noise_lgss_is_tracked_exactly() {
    let mut p = make_lgss(2, 3, 3).unwrap().params().clone();
    p.q.fill(0.0);
    p.x1_cov.fill(0.0);
    p.r = nalgebra::DMatrix::identity(3, 3) * 1e-6;
    let m = Lgss::new(p.clone()).unwrap();
    let tr = simulate(&m, 20, 1).unwrap();
    let kf = kalman_filter(&p, &tr.observations).unwrap();
    for s in all_samplers() {
        let cfg = FilterConfig::new(20, s, 0).with_kernel(KernelConfig::new(1.0, 3).unwrap());
        let f = run_filter(&m, &tr.observations, &cfg).unwrap();
        assert!(common::rmse(&f.filtered_means(), &kf.filtered_means()) <= 1e-8, "{}", s.name());
    }
}

#[test]
fn jmls_exact_filter_agrees_with_large_particle_filter() {
    let m = make_jmls(2).unwrap();
    let tr = simulate(&m, 10, 7).unwrap();
    let exact = jmls_exact_filter(m.params(), &tr.observations).unwrap();
    assert_eq!(*exact.branch_counts.last().unwrap(), 1 << 10);
    let reps: Vec<DVector<f64>> = (0..16u64)
        .map(|s| {
            run_filter(&m, &tr.observations, &FilterConfig::new(62_500, SamplerKind::McStratified, 100 + s))
                .unwrap()
                .steps[9]
                .filtered_mean
                .clone()
        })
        .collect();
    let (pf_mean, se) = replica_stats(&reps);
    for i in 0..2 {
        let d = (pf_mean[i] - exact.means[9][i]).abs();
        assert!(d <= 3.0 * se[i], "coord {i}: |{}| > 3·{}", d, se[i]);
    }
}

#[test]
fn rbpf_agrees_with_joint_particle_filter() {
    let m = make_clgss(5).unwrap();
    let tr = simulate(&m, 10, 2).unwrap();
    let pf: Vec<DVector<f64>> = (0..20u64)
        .into_par_iter()
        .map(|s| {
            run_filter(&m, &tr.observations, &FilterConfig::new(10_000, SamplerKind::McStratified, s))
                .unwrap()
                .steps[9]
                .filtered_mean
                .clone()
        })
        .collect();
    let rb: Vec<DVector<f64>> = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let f = run_rbpf(m.params(), &tr.observations, &FilterConfig::new(5_000, SamplerKind::McStratified, 50 + s)).unwrap();
            assert!(f.steps.iter().all(|st| st.effective_n == 5_000));
            f.steps[9].filtered_mean.clone()
        })
        .collect();
    let (pm, pse) = replica_stats(&pf);
    let (rm, rse) = replica_stats(&rb);
    for i in 1..3 {
        let se = (pse[i].powi(2) + rse[i].powi(2)).sqrt();
        assert!((pm[i] - rm[i]).abs() <= 3.0 * se, "z{}: {} vs {} (se {se})", i - 1, pm[i], rm[i]);
    }
}

#[test]
fn rbpf_with_deterministic_x_on_collapsed_model_is_kalman() {
    let p = make_clgss(1).unwrap().params().clone().linear_collapse().deterministic_x();
    let m = skh_core::models::Clgss::new(p.clone()).unwrap();
    let tr = simulate(&m, 25, 3).unwrap();
    let kf = kalman_filter(&p.z_lgss(), &tr.observations).unwrap();
    for s in all_samplers() {
        let cfg = FilterConfig::new(15, s, 1).with_kernel(KernelConfig::new(1.0, 1).unwrap());
        let f = run_rbpf(&p, &tr.observations, &cfg).unwrap();
        for (st, k) in f.steps.iter().zip(&kf.filtered) {
            for j in 0..2 {
                assert!((st.filtered_mean[1 + j] - k.mean[j]).abs() <= 1e-8, "{}", s.name());
            }
        }
    }
}
