use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{StateSpaceModel, TransitionComponent};

/// `x_{t+1} = 0.5 x_t + 25 x_t / (1 + x_t²) + 8 cos(1.2 t) + v_t`,
/// `y_t = 0.05 x_t² + e_t`, with standard normal noises and `x₁ ~ N(0, 1)`.
#[derive(Clone, Debug)]
pub struct NonlinearBenchmark {
    q: Arc<DMatrix<f64>>,
    x1_cov: Arc<DMatrix<f64>>,
    q_var: f64,
    r_var: f64,
}

pub fn make_nonlinear_benchmark() -> NonlinearBenchmark {
    NonlinearBenchmark::with_noise(1.0, 1.0)
}

impl NonlinearBenchmark {
    /// Benchmark dynamics with process variance `q_var` and observation variance `r_var`.
    pub fn with_noise(q_var: f64, r_var: f64) -> Self {
        NonlinearBenchmark {
            q: Arc::new(DMatrix::from_element(1, 1, q_var)),
            x1_cov: Arc::new(DMatrix::identity(1, 1)),
            q_var,
            r_var,
        }
    }

    pub fn process_variance(&self) -> f64 {
        self.q_var
    }

    /// Deterministic part of the transition at step `t`.
    pub fn drift(x: f64, t: usize) -> f64 {
        0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * (1.2 * t as f64).cos()
    }

    pub fn observation_mean(x: f64) -> f64 {
        0.05 * x * x
    }
}

impl StateSpaceModel for NonlinearBenchmark {
    fn name(&self) -> &str {
        "nonlinear"
    }

    fn dim_x(&self) -> usize {
        1
    }

    fn dim_y(&self) -> usize {
        1
    }

    fn initial(&self) -> Vec<TransitionComponent> {
        vec![TransitionComponent {
            weight: 1.0,
            mean: DVector::zeros(1),
            cov: Arc::clone(&self.x1_cov),
            mode: 0,
        }]
    }

    fn transition(&self, x: &[f64], _mode: usize, t: usize) -> Vec<TransitionComponent> {
        vec![TransitionComponent {
            weight: 1.0,
            mean: DVector::from_element(1, Self::drift(x[0], t)),
            cov: Arc::clone(&self.q),
            mode: 0,
        }]
    }

    fn log_likelihood(&self, x: &[f64], _mode: usize, y: &[f64], _t: usize) -> f64 {
        let r = y[0] - Self::observation_mean(x[0]);
        -0.5 * (2.0 * PI * self.r_var).ln() - 0.5 * r * r / self.r_var
    }

    fn sample_observation(&self, x: &[f64], _mode: usize, _t: usize, rng: &mut dyn rand::RngCore) -> DVector<f64> {
        let e: f64 = rng.sample(StandardNormal);
        DVector::from_element(1, Self::observation_mean(x[0]) + self.r_var.sqrt() * e)
    }
}
