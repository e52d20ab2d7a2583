//! Frank-Wolfe adaptive quadrature in a Gaussian RKHS and particle filters whose
//! sampling step can be Monte Carlo, quasi-Monte Carlo or Frank-Wolfe quadrature
//! (kernel herding, SKH).
//!
//! Module map:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`kernel`] | Gaussian kernel, mixtures, weighted particle sets, closed-form mean maps and MMD |
//! | [`fw`] | Frank-Wolfe quadrature (herding, line search, fully corrective) and the simplex QP |
//! | [`qmc`] | Sobol sequence and quasi-random mixture sampling |
//! | [`models`] | State-space models: LGSS, JMLS, nonlinear benchmark, conditionally linear model |
//! | [`exact`] | Kalman filter, exhaustive JMLS mixture of Kalman filters, 1-d grid filter |
//! | [`pf`] | Particle filter template with pluggable samplers, and the Rao-Blackwellized filter |

pub mod error;
pub mod exact;
pub mod fw;
pub mod kernel;
pub mod linalg;
pub mod models;
pub mod pf;
pub mod qmc;
pub mod rng;

pub use error::{Error, Result};
pub use fw::{fw_quad, FwVariant, QuadratureResult};
pub use kernel::{GaussianMixture, KernelConfig, WeightedParticleSet};
pub use pf::{run_filter, FilterConfig, FilterTrace, SamplerKind};
