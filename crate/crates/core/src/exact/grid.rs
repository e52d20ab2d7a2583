use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::StateSpaceModel;

/// Uniform grid `[lo, hi]` with `points` nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn nodes(&self) -> Vec<f64> {
        let h = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + h * i as f64).collect()
    }

    fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }
}

/// Filtering densities on the grid.
#[derive(Clone, Debug)]
pub struct GridFilterResult {
    pub nodes: Vec<f64>,
    /// `p(x_t | y_{1:t})` at the nodes, t = 1..T.
    pub densities: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub log_evidence: f64,
    /// Set when some filtering density put more than `1e-6` of its mass in the outer
    /// 1% of nodes on either side.
    pub boundary_warning: bool,
}

fn trapezoid(h: f64, f: &[f64]) -> f64 {
    let n = f.len();
    h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n - 1]))
}

// Variances below this are treated as point masses and deposited onto the two
// neighbouring nodes.
const POINT_MASS_VAR: f64 = 1e-12;

/// Adds `mass · N(· | mean, var)` as a density on the grid.
fn deposit(grid: &GridSpec, nodes: &[f64], out: &mut [f64], mass: f64, mean: f64, var: f64) {
    let h = grid.step();
    if var < POINT_MASS_VAR * h * h {
        let pos = (mean - grid.lo) / h;
        if pos < 0.0 || pos > (grid.points - 1) as f64 {
            return;
        }
        let i = (pos.floor() as usize).min(grid.points - 2);
        let frac = pos - i as f64;
        // Interior trapezoid weight is h, end weights h/2.
        let wt = |j: usize| if j == 0 || j == grid.points - 1 { 0.5 * h } else { h };
        out[i] += mass * (1.0 - frac) / wt(i);
        out[i + 1] += mass * frac / wt(i + 1);
        return;
    }
    let norm = mass / (2.0 * std::f64::consts::PI * var).sqrt();
    let reach = 40.0 * var.sqrt();
    for (o, &x) in out.iter_mut().zip(nodes) {
        let d = x - mean;
        if d.abs() <= reach {
            *o += norm * (-0.5 * d * d / var).exp();
        }
    }
}

/// Sequential Bayes on a fixed 1-d grid with the trapezoid rule.
pub fn grid_filter(model: &dyn StateSpaceModel, ys: &[nalgebra::DVector<f64>], grid: GridSpec) -> Result<GridFilterResult> {
    if model.dim_x() != 1 || model.num_modes() != 1 {
        return Err(Error::InvalidArgument("grid filter needs a 1-d model without modes".into()));
    }
    if grid.points < 3 || !(grid.hi > grid.lo) {
        return Err(Error::InvalidArgument("grid needs at least 3 points and hi > lo".into()));
    }
    let nodes = grid.nodes();
    let h = grid.step();
    let g = grid.points;
    let edge = (g / 100).max(1);

    let mut pred = vec![0.0; g];
    for c in model.initial() {
        deposit(&grid, &nodes, &mut pred, c.weight, c.mean[0], c.cov[(0, 0)]);
    }
    let mut out = GridFilterResult {
        nodes: nodes.clone(),
        densities: Vec::with_capacity(ys.len()),
        means: Vec::with_capacity(ys.len()),
        log_evidence: 0.0,
        boundary_warning: false,
    };
    for (i, y) in ys.iter().enumerate() {
        let t = i + 1;
        let loglik: Vec<f64> = nodes.iter().map(|&x| model.log_likelihood(&[x], 0, y.as_slice(), t)).collect();
        let shift = loglik
            .iter()
            .zip(&pred)
            .filter(|(_, &p)| p > 0.0)
            .map(|(l, _)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::DegenerateWeights { t, log_total: f64::NEG_INFINITY });
        }
        let unnorm: Vec<f64> = pred.iter().zip(&loglik).map(|(p, l)| p * (l - shift).exp()).collect();
        let z = trapezoid(h, &unnorm);
        if !(z > 0.0) {
            return Err(Error::DegenerateWeights { t, log_total: f64::NEG_INFINITY });
        }
        out.log_evidence += z.ln() + shift;
        let post: Vec<f64> = unnorm.iter().map(|v| v / z).collect();
        let mean_integrand: Vec<f64> = post.iter().zip(&nodes).map(|(p, x)| p * x).collect();
        out.means.push(trapezoid(h, &mean_integrand));
        let tail = h * (post[..edge].iter().sum::<f64>() + post[g - edge..].iter().sum::<f64>());
        if tail > 1e-6 {
            out.boundary_warning = true;
        }
        if i + 1 < ys.len() {
            let weights: Vec<f64> = (0..g)
                .map(|j| post[j] * if j == 0 || j == g - 1 { 0.5 * h } else { h })
                .collect();
            let partials: Vec<Vec<f64>> = (0..g)
                .collect::<Vec<_>>()
                .par_chunks(64)
                .map(|js| {
                    let mut acc = vec![0.0; g];
                    for &j in js {
                        if weights[j] > 0.0 {
                            for c in model.transition(&[nodes[j]], 0, t) {
                                deposit(&grid, &nodes, &mut acc, weights[j] * c.weight, c.mean[0], c.cov[(0, 0)]);
                            }
                        }
                    }
                    acc
                })
                .collect();
            pred = vec![0.0; g];
            for part in &partials {
                pred.iter_mut().zip(part).for_each(|(x, y)| *x += y);
            }
        }
        out.densities.push(post);
    }
    Ok(out)
}
