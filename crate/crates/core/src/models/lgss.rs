use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{standard_normal, StateSpaceModel, TransitionComponent};
use crate::error::{Error, Result};
use crate::linalg::{check_psd, cholesky_jittered, log_normal_pdf_factored, psd_factor};
use crate::rng::rng_from;

/// `x_{t+1} = A x_t + v_t`, `y_t = C x_t + e_t`, `v ~ N(0, Q)`, `e ~ N(0, R)`,
/// `x₁ ~ N(x1_mean, x1_cov)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LgssParams {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub x1_mean: DVector<f64>,
    pub x1_cov: DMatrix<f64>,
}

impl LgssParams {
    pub fn dim_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim_x();
        let m = self.dim_y();
        let shapes = [
            (self.a.shape(), (d, d), "A"),
            (self.c.shape(), (m, d), "C"),
            (self.q.shape(), (d, d), "Q"),
            (self.r.shape(), (m, m), "R"),
            (self.x1_cov.shape(), (d, d), "x1 covariance"),
            ((self.x1_mean.len(), 1), (d, 1), "x1 mean"),
        ];
        for (got, want, name) in shapes {
            if got != want {
                return Err(Error::InvalidArgument(format!("{name} has shape {got:?}, expected {want:?}")));
            }
        }
        check_psd(&self.q, 1e-12)?;
        check_psd(&self.r, 1e-12)?;
        check_psd(&self.x1_cov, 1e-12)?;
        Ok(())
    }

    /// Observability matrix `[C; CA; …; CA^{d−1}]`.
    pub fn observability_matrix(&self) -> DMatrix<f64> {
        observability(&self.a, &self.c)
    }
}

fn observability(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    let m = c.nrows();
    let mut o = DMatrix::zeros(m * d, d);
    let mut block = c.clone();
    for k in 0..d {
        o.view_mut((k * m, 0), (m, d)).copy_from(&block);
        block = &block * a;
    }
    o
}

/// Numerical rank by singular values relative to the largest.
pub(crate) fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * top.max(1e-300)).count()
}

/// Linear-Gaussian state-space model.
#[derive(Clone, Debug)]
pub struct Lgss {
    params: LgssParams,
    q: Arc<DMatrix<f64>>,
    x1_cov: Arc<DMatrix<f64>>,
    r_chol: Option<DMatrix<f64>>,
    r_factor: DMatrix<f64>,
}

impl Lgss {
    pub fn new(params: LgssParams) -> Result<Self> {
        params.validate()?;
        Ok(Lgss {
            q: Arc::new(params.q.clone()),
            x1_cov: Arc::new(params.x1_cov.clone()),
            r_chol: cholesky_jittered(&params.r).ok(),
            r_factor: psd_factor(&params.r)?,
            params,
        })
    }

    pub fn params(&self) -> &LgssParams {
        &self.params
    }
}

impl StateSpaceModel for Lgss {
    fn name(&self) -> &str {
        "lgss"
    }

    fn dim_x(&self) -> usize {
        self.params.dim_x()
    }

    fn dim_y(&self) -> usize {
        self.params.dim_y()
    }

    fn initial(&self) -> Vec<TransitionComponent> {
        vec![TransitionComponent {
            weight: 1.0,
            mean: self.params.x1_mean.clone(),
            cov: Arc::clone(&self.x1_cov),
            mode: 0,
        }]
    }

    fn transition(&self, x: &[f64], _mode: usize, _t: usize) -> Vec<TransitionComponent> {
        vec![TransitionComponent {
            weight: 1.0,
            mean: &self.params.a * DVector::from_column_slice(x),
            cov: Arc::clone(&self.q),
            mode: 0,
        }]
    }

    fn log_likelihood(&self, x: &[f64], _mode: usize, y: &[f64], _t: usize) -> f64 {
        let pred = &self.params.c * DVector::from_column_slice(x);
        match &self.r_chol {
            Some(l) => log_normal_pdf_factored(y, pred.as_slice(), l),
            None => {
                if pred.iter().zip(y).all(|(a, b)| a == b) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    fn sample_observation(&self, x: &[f64], _mode: usize, _t: usize, rng: &mut dyn rand::RngCore) -> DVector<f64> {
        let e = standard_normal(self.dim_y(), rng);
        &self.params.c * DVector::from_column_slice(x) + &self.r_factor * e
    }
}

/// Random `(A, C)` with `A`'s eigenvalues uniform in the disk of radius 0.9 (complex ones
/// in conjugate pairs), `C` standard normal, and `(A, C)` observable.
pub fn random_stable_observable<R: Rng + ?Sized>(rng: &mut R, d: usize, m: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if d == 0 || m == 0 {
        return Err(Error::InvalidArgument("state and observation dimensions must be positive".into()));
    }
    for _ in 0..100 {
        let mut block = DMatrix::zeros(d, d);
        let mut i = 0;
        while i < d {
            let radius = 0.9 * rng.random::<f64>().sqrt();
            if i + 1 < d && rng.random::<bool>() {
                let theta = rng.random_range(0.0..std::f64::consts::PI);
                let (re, im) = (radius * theta.cos(), radius * theta.sin());
                block[(i, i)] = re;
                block[(i + 1, i + 1)] = re;
                block[(i, i + 1)] = im;
                block[(i + 1, i)] = -im;
                i += 2;
            } else {
                block[(i, i)] = if rng.random::<bool>() { radius } else { -radius };
                i += 1;
            }
        }
        let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = g.qr().q();
        let a = &q * block * q.transpose();
        let c = DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        if numerical_rank(&observability(&a, &c)) == d {
            return Ok((a, c));
        }
    }
    Err(Error::Numerical("no observable system found in 100 draws".into()))
}

/// Random stable observable LGSS with `Q = I`, `R = 0.1 I`, `x₁ ~ N(0, I)`.
pub fn make_lgss(seed: u64, d: usize, m: usize) -> Result<Lgss> {
    let mut rng = rng_from(seed, &[0x6c677373, d as u64, m as u64]);
    let (a, c) = random_stable_observable(&mut rng, d, m)?;
    Lgss::new(LgssParams {
        a,
        c,
        q: DMatrix::identity(d, d),
        r: DMatrix::identity(m, m) * 0.1,
        x1_mean: DVector::zeros(d),
        x1_cov: DMatrix::identity(d, d),
    })
}
