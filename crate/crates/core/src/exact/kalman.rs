use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{log_normal_pdf_factored, symmetrize};
use crate::models::LgssParams;

/// Gaussian belief with the accumulated log evidence `log Z_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_evidence: f64,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        GaussianBelief {
            mean,
            cov,
            log_evidence: 0.0,
        }
    }
}

/// Clips eigenvalues in `[-1e-10·scale, 0)` to zero after symmetrizing.
fn clean_covariance(p: &mut DMatrix<f64>) -> Result<()> {
    symmetrize(p);
    let eig = p.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * scale {
        return Err(Error::Numerical(format!("covariance lost positive semidefiniteness (eigenvalue {min:e})")));
    }
    if min < 0.0 {
        let lam = eig.eigenvalues.map(|v| v.max(0.0));
        *p = &eig.eigenvectors * DMatrix::from_diagonal(&lam) * eig.eigenvectors.transpose();
        symmetrize(p);
    }
    Ok(())
}

/// `(A μ, A Σ Aᵀ + Q)`.
pub fn kalman_predict(belief: &GaussianBelief, a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<GaussianBelief> {
    ensure_dim(a.ncols(), belief.mean.len())?;
    let mut cov = a * &belief.cov * a.transpose() + q;
    clean_covariance(&mut cov)?;
    Ok(GaussianBelief {
        mean: a * &belief.mean,
        cov,
        log_evidence: belief.log_evidence,
    })
}

/// Measurement update of a predictive belief by `y = C x + offset + e`, `e ~ N(0, R)`,
/// using the Joseph form. Adds `log N(y | C μ + offset, C Σ Cᵀ + R)` to the evidence.
pub fn kalman_update_with_offset(
    pred: &GaussianBelief,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    offset: Option<&DVector<f64>>,
    y: &[f64],
) -> Result<GaussianBelief> {
    ensure_dim(c.nrows(), y.len())?;
    ensure_dim(c.ncols(), pred.mean.len())?;
    let mut s = c * &pred.cov * c.transpose() + r;
    symmetrize(&mut s);
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
    let mut y_hat = c * &pred.mean;
    if let Some(o) = offset {
        y_hat += o;
    }
    let innov = DVector::from_column_slice(y) - &y_hat;
    let log_lik = log_normal_pdf_factored(y, y_hat.as_slice(), &chol.l());
    // K = P Cᵀ S⁻¹
    let gain = chol.solve(&(c * &pred.cov)).transpose();
    let mean = &pred.mean + &gain * innov;
    let ikc = DMatrix::identity(pred.mean.len(), pred.mean.len()) - &gain * c;
    let mut cov = &ikc * &pred.cov * ikc.transpose() + &gain * r * gain.transpose();
    clean_covariance(&mut cov)?;
    Ok(GaussianBelief {
        mean,
        cov,
        log_evidence: pred.log_evidence + log_lik,
    })
}

pub fn kalman_update(pred: &GaussianBelief, p: &LgssParams, y: &[f64]) -> Result<GaussianBelief> {
    kalman_update_with_offset(pred, &p.c, &p.r, None, y)
}

/// One predict-then-update step from the previous filtering belief.
pub fn kalman_step(belief: &GaussianBelief, p: &LgssParams, y: &[f64]) -> Result<GaussianBelief> {
    let pred = kalman_predict(belief, &p.a, &p.q)?;
    kalman_update(&pred, p, y)
}

/// Predictive and filtering beliefs of a full run.
#[derive(Clone, Debug)]
pub struct KalmanRun {
    /// `p(x_t | y_{1:t−1})`, t = 1..T.
    pub predicted: Vec<GaussianBelief>,
    /// `p(x_t | y_{1:t})`, t = 1..T.
    pub filtered: Vec<GaussianBelief>,
}

impl KalmanRun {
    pub fn log_evidence(&self) -> f64 {
        self.filtered.last().map_or(0.0, |b| b.log_evidence)
    }

    pub fn filtered_means(&self) -> Vec<DVector<f64>> {
        self.filtered.iter().map(|b| b.mean.clone()).collect()
    }
}

pub fn kalman_filter(p: &LgssParams, ys: &[DVector<f64>]) -> Result<KalmanRun> {
    p.validate()?;
    let mut pred = GaussianBelief::new(p.x1_mean.clone(), p.x1_cov.clone());
    let mut run = KalmanRun {
        predicted: Vec::with_capacity(ys.len()),
        filtered: Vec::with_capacity(ys.len()),
    };
    for (i, y) in ys.iter().enumerate() {
        if i > 0 {
            pred = kalman_predict(run.filtered.last().unwrap(), &p.a, &p.q)?;
        }
        let filt = kalman_update(&pred, p, y.as_slice())?;
        run.predicted.push(pred.clone());
        run.filtered.push(filt);
    }
    Ok(run)
}
