use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::lgss::{random_stable_observable, LgssParams};
use super::nonlinear::NonlinearBenchmark;
use super::{standard_normal, StateSpaceModel, TransitionComponent};
use crate::error::{Error, Result};
use crate::linalg::{check_psd, cholesky_jittered, log_normal_pdf_factored, psd_factor};
use crate::rng::rng_from;

/// Conditionally linear-Gaussian model with scalar nonlinear state `x` and linear
/// state `z`:
///
/// ```text
/// x_{t+1} = f(x_t, t) + v_t,                          v_t ~ N(0, q_x)
/// z_{t+1} = (A0 + coupling · cos(x_t) B) z_t + w_t,    w_t ~ N(0, Qz)
/// y_t     = coupling · (0.05 x_t², 0, …) + C z_t + e_t,  e_t ~ N(0, R)
/// ```
///
/// where `f` is the nonlinear benchmark drift. With `coupling = 0` the `z` part is an
/// ordinary LGSS independent of `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClgssParams {
    pub q_x: f64,
    pub x1_mean: f64,
    pub x1_var: f64,
    pub a0: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub qz: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub z1_mean: DVector<f64>,
    pub z1_cov: DMatrix<f64>,
    pub coupling: f64,
}

impl ClgssParams {
    pub fn dim_z(&self) -> usize {
        self.a0.nrows()
    }

    pub fn dim_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn drift(&self, x: f64, t: usize) -> f64 {
        NonlinearBenchmark::drift(x, t)
    }

    /// `A_z(x) = A0 + coupling · cos(x) B`.
    pub fn a_z(&self, x: f64) -> DMatrix<f64> {
        &self.a0 + &self.b * (self.coupling * x.cos())
    }

    /// `h(x)`, the part of the observation mean that depends on `x`.
    pub fn h(&self, x: f64) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim_y());
        v[0] = self.coupling * NonlinearBenchmark::observation_mean(x);
        v
    }

    /// The `z` subsystem as an LGSS; exact for the filtering of `z` when `coupling = 0`.
    pub fn z_lgss(&self) -> LgssParams {
        LgssParams {
            a: self.a0.clone(),
            c: self.c.clone(),
            q: self.qz.clone(),
            r: self.r.clone(),
            x1_mean: self.z1_mean.clone(),
            x1_cov: self.z1_cov.clone(),
        }
    }

    pub fn linear_collapse(mut self) -> Self {
        self.coupling = 0.0;
        self
    }

    pub fn deterministic_x(mut self) -> Self {
        self.q_x = 0.0;
        self.x1_var = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dz = self.dim_z();
        let m = self.dim_y();
        if self.b.shape() != (dz, dz)
            || self.c.shape() != (m, dz)
            || self.qz.shape() != (dz, dz)
            || self.r.shape() != (m, m)
            || self.z1_mean.len() != dz
            || self.z1_cov.shape() != (dz, dz)
        {
            return Err(Error::InvalidArgument("conditionally linear model matrices have inconsistent shapes".into()));
        }
        if !(self.q_x >= 0.0 && self.x1_var >= 0.0) {
            return Err(Error::InvalidArgument("variances must be nonnegative".into()));
        }
        check_psd(&self.qz, 1e-12)?;
        check_psd(&self.r, 1e-12)?;
        check_psd(&self.z1_cov, 1e-12)
    }
}

/// The model on the joint state `[x, z]`, usable by any particle filter.
pub struct Clgss {
    params: ClgssParams,
    joint_q: Arc<DMatrix<f64>>,
    joint_x1_cov: Arc<DMatrix<f64>>,
    r_chol: DMatrix<f64>,
    r_factor: DMatrix<f64>,
}

fn block_diag(a: f64, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows() + 1;
    let mut m = DMatrix::zeros(n, n);
    m[(0, 0)] = a;
    m.view_mut((1, 1), b.shape()).copy_from(b);
    m
}

impl Clgss {
    pub fn new(params: ClgssParams) -> Result<Self> {
        params.validate()?;
        Ok(Clgss {
            joint_q: Arc::new(block_diag(params.q_x, &params.qz)),
            joint_x1_cov: Arc::new(block_diag(params.x1_var, &params.z1_cov)),
            r_chol: cholesky_jittered(&params.r)?,
            r_factor: psd_factor(&params.r)?,
            params,
        })
    }

    pub fn params(&self) -> &ClgssParams {
        &self.params
    }
}

impl StateSpaceModel for Clgss {
    fn name(&self) -> &str {
        "clgss"
    }

    fn dim_x(&self) -> usize {
        1 + self.params.dim_z()
    }

    fn dim_y(&self) -> usize {
        self.params.dim_y()
    }

    fn initial(&self) -> Vec<TransitionComponent> {
        let mut mean = DVector::zeros(self.dim_x());
        mean[0] = self.params.x1_mean;
        mean.rows_mut(1, self.params.dim_z()).copy_from(&self.params.z1_mean);
        vec![TransitionComponent {
            weight: 1.0,
            mean,
            cov: Arc::clone(&self.joint_x1_cov),
            mode: 0,
        }]
    }

    fn transition(&self, x: &[f64], _mode: usize, t: usize) -> Vec<TransitionComponent> {
        let p = &self.params;
        let z = DVector::from_column_slice(&x[1..]);
        let mut mean = DVector::zeros(self.dim_x());
        mean[0] = p.drift(x[0], t);
        mean.rows_mut(1, p.dim_z()).copy_from(&(p.a_z(x[0]) * z));
        vec![TransitionComponent {
            weight: 1.0,
            mean,
            cov: Arc::clone(&self.joint_q),
            mode: 0,
        }]
    }

    fn log_likelihood(&self, x: &[f64], _mode: usize, y: &[f64], _t: usize) -> f64 {
        let p = &self.params;
        let pred = p.h(x[0]) + &p.c * DVector::from_column_slice(&x[1..]);
        log_normal_pdf_factored(y, pred.as_slice(), &self.r_chol)
    }

    fn sample_observation(&self, x: &[f64], _mode: usize, _t: usize, rng: &mut dyn rand::RngCore) -> DVector<f64> {
        let p = &self.params;
        let e = standard_normal(p.dim_y(), rng);
        p.h(x[0]) + &p.c * DVector::from_column_slice(&x[1..]) + &self.r_factor * e
    }
}

/// Small random test model: `z` is 2-d with 2-d observations and a random stable
/// observable `(A0, C)`, `B` has entries `N(0, 0.05²)`, `q_x = 1`, `Qz = 0.5 I`,
/// `R = 0.5 I`, `x₁ ~ N(0, 1)`, `z₁ ~ N(0, I)` and `coupling = 1`.
pub fn make_clgss(seed: u64) -> Result<Clgss> {
    let mut rng = rng_from(seed, &[0x636c6773]);
    let (a0, c) = random_stable_observable(&mut rng, 2, 2)?;
    let b = DMatrix::from_fn(2, 2, |_, _| 0.05 * rng.sample::<f64, _>(StandardNormal));
    Clgss::new(ClgssParams {
        q_x: 1.0,
        x1_mean: 0.0,
        x1_var: 1.0,
        a0,
        b,
        c,
        qz: DMatrix::identity(2, 2) * 0.5,
        r: DMatrix::identity(2, 2) * 0.5,
        z1_mean: DVector::zeros(2),
        z1_cov: DMatrix::identity(2, 2),
        coupling: 1.0,
    })
}
