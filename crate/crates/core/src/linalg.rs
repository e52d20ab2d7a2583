//! Small dense linear-algebra helpers shared by the kernel, filter and model code.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower Cholesky factor of `m`. On failure the factorization is retried once with
/// `1e-12 * trace / n` added to the diagonal.
pub fn cholesky_jittered(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let n = m.nrows();
    let jitter = 1e-12 * m.trace().abs() / n.max(1) as f64;
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] += jitter;
    }
    shifted
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Numerical(format!("matrix of order {n} is not positive definite")))
}

/// Any factor `L` with `L Lᵀ = m` for a symmetric PSD `m`, including singular ones.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if eig.eigenvalues.iter().any(|&v| v < -1e-9 * scale) {
        return Err(Error::Numerical("covariance has a negative eigenvalue".into()));
    }
    let mut f = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    Ok(f)
}

/// Checks symmetry and that no eigenvalue is below `-tol * max(1, |λ|max)`.
pub fn check_psd(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidArgument("covariance is not square".into()));
    }
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::InvalidArgument("covariance is not symmetric".into()));
            }
        }
    }
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&v| v < -tol * scale) {
        return Err(Error::InvalidArgument("covariance is not positive semidefinite".into()));
    }
    Ok(())
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Solves `L y = b` in place for lower-triangular `L`.
pub(crate) fn forward_substitute(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Sum of log-diagonal of a Cholesky factor, i.e. `½ log det(L Lᵀ)`.
pub(crate) fn half_log_det(l: &DMatrix<f64>) -> f64 {
    l.diagonal().iter().map(|v| v.ln()).sum()
}

/// Multivariate normal log-density via a (jittered) Cholesky factorization.
pub fn log_normal_pdf(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    let l = cholesky_jittered(cov)?;
    Ok(log_normal_pdf_factored(x, mean, &l))
}

/// Multivariate normal log-density given the lower Cholesky factor of the covariance.
pub fn log_normal_pdf_factored(x: &[f64], mean: &[f64], chol: &DMatrix<f64>) -> f64 {
    let d = x.len();
    let mut r: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    forward_substitute(chol, &mut r);
    let q: f64 = r.iter().map(|v| v * v).sum();
    -0.5 * (d as f64 * (2.0 * PI).ln() + q) - half_log_det(chol)
}

/// log Σ exp(v), stable; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn dvec(slice: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(slice)
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        assert_eq!(compensated_sum(&[1.0, 1e100, 1.0, -1e100]), 2.0);
        let tenth = vec![0.1; 100_000];
        assert!((compensated_sum(&tenth) - 10_000.0).abs() < 1e-11);
    }

    #[test]
    fn psd_factor_handles_singular_matrices() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = psd_factor(&m).unwrap();
        assert_relative_eq!(&f * f.transpose(), m, epsilon = 1e-12);
        let z = DMatrix::<f64>::zeros(3, 3);
        let f = psd_factor(&z).unwrap();
        assert_relative_eq!(&f * f.transpose(), z, epsilon = 1e-12);
    }

    #[test]
    fn log_pdf_matches_scalar_formula() {
        let cov = DMatrix::from_element(1, 1, 4.0);
        let v = log_normal_pdf(&[1.0], &[0.0], &cov).unwrap();
        let want = -0.5 * (2.0 * PI * 4.0).ln() - 0.5 * 0.25;
        assert_relative_eq!(v, want, epsilon = 1e-14);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert_relative_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln());
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(check_psd(&m, 1e-12).is_err());
        assert!(cholesky_jittered(&m).is_err());
    }
}
