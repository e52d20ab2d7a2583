use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use skh_core::exact::{jmls_exact_filter, kalman_filter, KalmanRun, MAX_BRANCH_LOG2};
use skh_core::kernel::{benchmark_mixture, mmd, GaussianMixture};
use skh_core::models::{make_clgss, make_jmls, make_lgss, make_nonlinear_benchmark, simulate, ClgssParams, StateSpaceModel};
use skh_core::pf::{run_filter, run_rbpf, FilterConfig, FilterTrace, Sampler, SamplerKind};
use skh_core::rng::rng_from;
use skh_core::KernelConfig;

use crate::config::{ExperimentConfig, ExperimentKind, ModelKind, ModelSection};
use crate::error::{HarnessError, Result};
use crate::output::{MetricRow, VERSION};
use crate::summary::median;

/// Runs the configured experiment on `workers` threads (all cores when `None`).
/// Rows come back in grid order: method, then σ², then N, then seed.
pub fn run_experiment(cfg: &ExperimentConfig, config_hash: &str, workers: Option<usize>) -> Result<Vec<MetricRow>> {
    cfg.validate()?;
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    let pool = b
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {workers:?} workers: {e}")))?;
    pool.install(|| match cfg.experiment.kind {
        ExperimentKind::Quad => run_quad_experiment(cfg, config_hash),
        ExperimentKind::Filter | ExperimentKind::Rbpf => run_filter_experiment(cfg, config_hash),
    })
}

struct RowFactory<'a> {
    experiment: &'static str,
    hash: &'a str,
}

impl RowFactory<'_> {
    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        method: &str,
        sigma2: Option<f64>,
        n: Option<usize>,
        seed: Option<u64>,
        metric: &str,
        value: f64,
        runtime_ms: f64,
    ) -> Result<MetricRow> {
        if !value.is_finite() {
            return Err(skh_core::Error::Numerical(format!("{method} {metric} is not finite ({value})")).into());
        }
        Ok(MetricRow {
            experiment: self.experiment.into(),
            method: method.into(),
            sigma2,
            n,
            seed,
            metric: metric.into(),
            value,
            runtime_ms,
            config_hash: self.hash.into(),
            version: VERSION.into(),
        })
    }
}

/// One cell of the grid. `sigma2` is `None` for samplers that do not use the kernel.
#[derive(Clone, Copy, Debug)]
struct WorkItem {
    sampler: SamplerKind,
    sigma2: Option<f64>,
    n: usize,
    seed: u64,
}

fn work_items(cfg: &ExperimentConfig) -> Result<Vec<WorkItem>> {
    let mut items = Vec::new();
    for sampler in cfg.samplers()? {
        let sigmas: Vec<Option<f64>> = if sampler.is_skh() {
            cfg.grid.sigma2.iter().map(|&s| Some(s)).collect()
        } else {
            vec![None]
        };
        for sigma2 in sigmas {
            for &n in &cfg.grid.n {
                for seed in cfg.seeds() {
                    items.push(WorkItem { sampler, sigma2, n, seed });
                }
            }
        }
    }
    Ok(items)
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

pub fn run_quad_experiment(cfg: &ExperimentConfig, hash: &str) -> Result<Vec<MetricRow>> {
    let mx = cfg.mixture.as_ref().expect("validated");
    let p = benchmark_mixture(&mut rng_from(mx.seed, &[]), mx.dim, mx.components)?;
    let truth = p.mixture_mean();
    let kernels: Vec<KernelConfig> = cfg
        .grid
        .sigma2
        .iter()
        .map(|&s| KernelConfig::new(s, mx.dim))
        .collect::<skh_core::Result<_>>()?;
    let f = RowFactory { experiment: "quad", hash };
    let items = work_items(cfg)?;
    let per_item: Vec<Vec<MetricRow>> = items
        .par_iter()
        .map(|it| {
            let start = Instant::now();
            let kernel = it.sigma2.map(|s| KernelConfig::new(s, mx.dim)).transpose()?;
            let draw = Sampler::new(it.sampler, kernel, it.seed)?.sample(&p, it.n, 1)?;
            let ms = elapsed_ms(start);
            let name = it.sampler.name();
            let mut rows = Vec::new();
            let mean_err = (draw.particles.mean() - &truth).norm();
            for k in &kernels {
                if it.sigma2.is_none_or(|s| s == k.sigma2()) {
                    let v = mmd(&p, &draw.particles, k)?;
                    rows.push(f.row(&name, Some(k.sigma2()), Some(it.n), Some(it.seed), "mmd", v, ms)?);
                }
            }
            rows.push(f.row(&name, it.sigma2, Some(it.n), Some(it.seed), "mean_err", mean_err, ms)?);
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<MetricRow> = per_item.into_iter().flatten().collect();
    rows.extend(slope_rows(&f, &rows)?);
    Ok(rows)
}

/// Log-log slope of median MMD against N for each method and σ².
fn slope_rows(f: &RowFactory<'_>, rows: &[MetricRow]) -> Result<Vec<MetricRow>> {
    let mut groups: Vec<(String, f64)> = Vec::new();
    for r in rows.iter().filter(|r| r.metric == "mmd") {
        let g = (r.method.clone(), r.sigma2.unwrap());
        if !groups.contains(&g) {
            groups.push(g);
        }
    }
    let mut out = Vec::new();
    for (method, s2) in groups {
        let sel: Vec<&MetricRow> = rows
            .iter()
            .filter(|r| r.metric == "mmd" && r.method == method && r.sigma2 == Some(s2))
            .collect();
        let mut ns: Vec<usize> = sel.iter().map(|r| r.n.unwrap()).collect();
        ns.sort_unstable();
        ns.dedup();
        let pts: Vec<(f64, f64)> = ns
            .iter()
            .map(|&n| {
                let v: Vec<f64> = sel.iter().filter(|r| r.n == Some(n)).map(|r| r.value).collect();
                (n as f64, median(&v))
            })
            .collect();
        if let Some(s) = log_log_slope(&pts) {
            out.push(f.row(&method, Some(s2), None, None, "slope", s, 0.0)?);
        }
    }
    Ok(out)
}

/// Filtering targets the methods are scored against.
pub enum Reference {
    Kalman(KalmanRun),
    /// Filtered means and log evidence of the exhaustive JMLS filter.
    Exact { means: Vec<DVector<f64>>, log_evidence: f64 },
    /// Filtered means averaged over several large particle filters.
    ParticleFilter(Vec<DVector<f64>>),
}

impl Reference {
    pub fn means(&self) -> Vec<DVector<f64>> {
        match self {
            Reference::Kalman(k) => k.filtered_means(),
            Reference::Exact { means, .. } | Reference::ParticleFilter(means) => means.clone(),
        }
    }

    pub fn log_evidence(&self) -> Option<f64> {
        match self {
            Reference::Kalman(k) => Some(k.log_evidence()),
            Reference::Exact { log_evidence, .. } => Some(*log_evidence),
            Reference::ParticleFilter(_) => None,
        }
    }
}

pub enum Model {
    Generic(Box<dyn StateSpaceModel>),
    Lgss(skh_core::models::Lgss),
    Clgss(skh_core::models::Clgss),
}

impl Model {
    pub fn build(md: &ModelSection) -> Result<Self> {
        Ok(match md.kind {
            ModelKind::Lgss => Model::Lgss(make_lgss(md.seed, md.dim.unwrap(), md.obs_dim.unwrap_or(1))?),
            ModelKind::Jmls => Model::Generic(Box::new(make_jmls(md.seed)?)),
            ModelKind::Nonlinear => Model::Generic(Box::new(make_nonlinear_benchmark())),
            ModelKind::Clgss => Model::Clgss(make_clgss(md.seed)?),
        })
    }

    pub fn as_dyn(&self) -> &dyn StateSpaceModel {
        match self {
            Model::Generic(m) => m.as_ref(),
            Model::Lgss(m) => m,
            Model::Clgss(m) => m,
        }
    }

    pub fn clgss_params(&self) -> Option<&ClgssParams> {
        match self {
            Model::Clgss(m) => Some(m.params()),
            _ => None,
        }
    }
}

pub fn build_reference(cfg: &ExperimentConfig, model: &Model, ys: &[DVector<f64>]) -> Result<Reference> {
    let md = cfg.model.as_ref().expect("validated");
    match (md.kind, model) {
        (ModelKind::Lgss, Model::Lgss(m)) => Ok(Reference::Kalman(kalman_filter(m.params(), ys)?)),
        (ModelKind::Jmls, _) => {
            if md.steps > MAX_BRANCH_LOG2 {
                return Err(HarnessError::Config(format!(
                    "exact JMLS reference needs model.steps ≤ {MAX_BRANCH_LOG2}, got {}",
                    md.steps
                )));
            }
            let jm = make_jmls(md.seed)?;
            let run = jmls_exact_filter(jm.params(), ys)?;
            Ok(Reference::Exact {
                means: run.means,
                log_evidence: run.log_evidence,
            })
        }
        _ => {
            let r = &cfg.reference;
            let runs: Vec<Vec<DVector<f64>>> = (0..r.runs as u64)
                .map(|i| {
                    let fc = FilterConfig::new(r.particles, SamplerKind::McStratified, r.seed + i);
                    Ok(run_filter(model.as_dyn(), ys, &fc)?.filtered_means())
                })
                .collect::<Result<_>>()?;
            let k = runs.len() as f64;
            let means = (0..ys.len())
                .map(|t| runs.iter().fold(DVector::zeros(runs[0][t].len()), |a, r| a + &r[t]) / k)
                .collect();
            Ok(Reference::ParticleFilter(means))
        }
    }
}

fn rmse(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum();
    (s / a.len() as f64).sqrt()
}

/// Mean over t of the MMD between `p̂_t` and the Kalman predictive at t.
fn mean_predictive_mmd(trace: &FilterTrace, kf: &KalmanRun, k: &KernelConfig) -> Result<f64> {
    let mut acc = 0.0;
    for (set, pred) in trace.predictive.iter().zip(&kf.predicted) {
        let truth = GaussianMixture::single(pred.mean.clone(), pred.cov.clone())?;
        acc += mmd(&truth, set, k)?;
    }
    Ok(acc / trace.predictive.len() as f64)
}

pub fn run_filter_experiment(cfg: &ExperimentConfig, hash: &str) -> Result<Vec<MetricRow>> {
    let md = cfg.model.as_ref().expect("validated");
    let rbpf = cfg.experiment.kind == ExperimentKind::Rbpf;
    let model = Model::build(md)?;
    let data = simulate(model.as_dyn(), md.steps, md.data_seed)?;
    let ys = &data.observations;
    let reference = build_reference(cfg, &model, ys)?;
    let ref_means = reference.means();
    let kalman = match &reference {
        Reference::Kalman(k) => Some(k),
        _ => None,
    };
    let kernel_dim = if rbpf { 1 } else { model.as_dyn().dim_x() };
    let f = RowFactory {
        experiment: cfg.experiment.kind.name(),
        hash,
    };
    let items = work_items(cfg)?;
    let per_item: Vec<Vec<MetricRow>> = items
        .par_iter()
        .map(|it| {
            let start = Instant::now();
            let mut fc = FilterConfig::new(it.n, it.sampler, it.seed);
            if let Some(s) = it.sigma2 {
                fc = fc.with_kernel(KernelConfig::new(s, kernel_dim)?);
            }
            if kalman.is_some() {
                fc = fc.keeping_particles();
            }
            let trace = if rbpf {
                run_rbpf(model.clgss_params().unwrap(), ys, &fc)?
            } else {
                run_filter(model.as_dyn(), ys, &fc)?
            };
            let ms = elapsed_ms(start);
            let name = it.sampler.name();
            let (n, seed) = (Some(it.n), Some(it.seed));
            let mut rows = vec![f.row(&name, it.sigma2, n, seed, "rmse", rmse(&trace.filtered_means(), &ref_means), ms)?];
            if let Some(z) = reference.log_evidence() {
                rows.push(f.row(&name, it.sigma2, n, seed, "logZ_err", (trace.log_evidence() - z).abs(), ms)?);
            }
            if let Some(kf) = kalman {
                for &s in &cfg.grid.sigma2 {
                    if it.sigma2.is_none_or(|own| own == s) {
                        let v = mean_predictive_mmd(&trace, kf, &KernelConfig::new(s, kernel_dim)?)?;
                        rows.push(f.row(&name, Some(s), n, seed, "mmd", v, ms)?);
                    }
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_item.into_iter().flatten().collect())
}
