#![allow(dead_code)]

use nalgebra::DVector;

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn rmse(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum();
    (s / a.len() as f64).sqrt()
}

/// Per-coordinate mean and standard error of the mean across replica estimates.
pub fn replica_stats(reps: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
    let d = reps[0].len();
    let r = reps.len() as f64;
    let mut m = DVector::zeros(d);
    let mut se = DVector::zeros(d);
    for i in 0..d {
        let col: Vec<f64> = reps.iter().map(|v| v[i]).collect();
        m[i] = mean(&col);
        se[i] = sample_sd(&col) / r.sqrt();
    }
    (m, se)
}
