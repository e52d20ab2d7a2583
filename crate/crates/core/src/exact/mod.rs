//! Reference filters: Kalman filtering for linear-Gaussian models, an exhaustive
//! mixture of Kalman filters for jump Markov linear systems, and 1-d grid quadrature.

mod grid;
mod jmls;
mod kalman;

pub use grid::{grid_filter, GridFilterResult, GridSpec};
pub use jmls::{jmls_exact_filter, JmlsExactRun, KalmanBranch, KalmanMixtureBelief, MAX_BRANCH_LOG2};
pub use kalman::{
    kalman_filter, kalman_predict, kalman_step, kalman_update, kalman_update_with_offset, GaussianBelief, KalmanRun,
};
