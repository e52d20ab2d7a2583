//! Convex quadratic programs over the probability simplex,
//! `min wᵀ K w − 2 cᵀ w  s.t.  w ≥ 0, Σ w = 1`, with `K` symmetric PSD.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Gram matrix and linear term of a simplex QP.
#[derive(Clone, Debug)]
pub struct SimplexQp {
    pub gram: DMatrix<f64>,
    pub linear: DVector<f64>,
}

impl SimplexQp {
    pub fn new(gram: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        let n = linear.len();
        if n == 0 || gram.nrows() != n || gram.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "simplex QP needs an n×n Gram matrix and n-vector, got {}×{} and {n}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        let scale = gram.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (gram[(i, j)] - gram[(j, i)]).abs() > 1e-9 * scale {
                    return Err(Error::InvalidArgument("Gram matrix is not symmetric".into()));
                }
            }
        }
        Ok(SimplexQp { gram, linear })
    }

    pub fn len(&self) -> usize {
        self.linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty()
    }

    pub fn objective(&self, w: &DVector<f64>) -> f64 {
        w.dot(&(&self.gram * w)) - 2.0 * self.linear.dot(w)
    }

    /// `h = K w − c`, half the gradient.
    fn half_gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.gram * w - &self.linear
    }

    /// KKT residual of a simplex point: with `h = K w − c` and `λ = Σ wᵢ hᵢ`, the largest of
    /// `|hᵢ − λ|` over the support and `(λ − hᵢ)₊` off it.
    pub fn kkt_residual(&self, w: &DVector<f64>) -> f64 {
        let h = self.half_gradient(w);
        let lambda = w.dot(&h);
        w.iter()
            .zip(h.iter())
            .map(|(&wi, &hi)| if wi > 0.0 { (hi - lambda).abs() } else { (lambda - hi).max(0.0) })
            .fold(0.0, f64::max)
    }
}

fn factor_free(q: &SimplexQp, free: &[usize]) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let m = free.len();
    let sub = DMatrix::from_fn(m, m, |i, j| q.gram[(free[i], free[j])]);
    let trace = sub.trace().max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..6 {
        let mut s = sub.clone();
        for i in 0..m {
            s[(i, i)] += ridge;
        }
        if let Some(c) = s.cholesky() {
            return Some(c);
        }
        ridge = if ridge == 0.0 { 1e-14 * trace } else { ridge * 100.0 };
    }
    None
}

/// Minimizer of the QP restricted to the affine hull of the free coordinates.
fn equality_solution(q: &SimplexQp, free: &[usize]) -> Option<Vec<f64>> {
    let chol = factor_free(q, free)?;
    let c = DVector::from_iterator(free.len(), free.iter().map(|&i| q.linear[i]));
    let a = chol.solve(&c);
    let b = chol.solve(&DVector::from_element(free.len(), 1.0));
    let sb = b.sum();
    if !(sb.is_finite() && sb.abs() > 0.0) {
        return None;
    }
    let nu = (1.0 - a.sum()) / sb;
    let sol: Vec<f64> = a.iter().zip(b.iter()).map(|(ai, bi)| ai + nu * bi).collect();
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        acc += uj;
        let t = (acc - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

fn active_set(q: &SimplexQp, w: &mut DVector<f64>, tol: f64, cap: usize) -> bool {
    let n = q.len();
    let mut free: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
    for _ in 0..cap {
        let Some(target) = equality_solution(q, &free) else {
            return false;
        };
        let feasible = target.iter().all(|&v| v >= 0.0);
        if feasible {
            w.fill(0.0);
            for (&i, &v) in free.iter().zip(&target) {
                w[i] = v;
            }
            let h = q.half_gradient(w);
            let lambda = w.dot(&h);
            let entering = (0..n)
                .filter(|&j| w[j] <= 0.0 && !free.contains(&j))
                .map(|j| (j, h[j]))
                .filter(|&(_, hj)| hj < lambda - tol)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match entering {
                Some((j, _)) => {
                    free.push(j);
                    free.sort_unstable();
                }
                None => return true,
            }
        } else {
            // Step toward the equality solution until the first coordinate hits zero.
            let mut alpha = 1.0;
            let mut blocking = None;
            for (&i, &t) in free.iter().zip(&target) {
                if t < 0.0 {
                    let a = w[i] / (w[i] - t);
                    if a < alpha {
                        alpha = a;
                        blocking = Some(i);
                    }
                }
            }
            for (&i, &t) in free.iter().zip(&target) {
                w[i] += alpha * (t - w[i]);
            }
            if let Some(b) = blocking {
                w[b] = 0.0;
            }
            free.retain(|&i| w[i] > 0.0);
            let s = w.sum();
            *w /= s;
            if free.is_empty() {
                return false;
            }
        }
    }
    false
}

fn projected_gradient(q: &SimplexQp, w: &mut DVector<f64>, tol: f64, cap: usize) {
    let lip = 2.0 * q.gram.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut eta = 1.0 / lip.max(1e-300);
    let mut f = q.objective(w);
    for _ in 0..cap {
        if q.kkt_residual(w) <= tol {
            return;
        }
        let g = 2.0 * q.half_gradient(w);
        let mut step = eta * 4.0;
        loop {
            let cand = project_simplex(&(&*w - step * &g));
            let fc = q.objective(&cand);
            let d = &cand - &*w;
            if fc <= f + g.dot(&d) + d.norm_squared() / (2.0 * step) || step < 1e-300 {
                *w = cand;
                f = fc;
                eta = step;
                break;
            }
            step *= 0.5;
        }
    }
}

/// Solves the simplex QP to KKT residual `tol`, warm-started from `start` when given.
///
/// The warm start is projected onto the simplex first. Non-convergence within
/// `10 (n + 1)²` iterations returns [`Error::QpNotConverged`] carrying the best iterate.
pub fn simplex_qp_solve_from(q: &SimplexQp, tol: f64, start: Option<&[f64]>) -> Result<DVector<f64>> {
    let n = q.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty simplex QP".into()));
    }
    let cap = 10 * (n + 1) * (n + 1);
    let mut w = match start {
        Some(s) if s.len() == n && s.iter().all(|v| v.is_finite()) => project_simplex(&DVector::from_column_slice(s)),
        _ => {
            // Best vertex: minimizes K_ii − 2 c_i.
            let best = (0..n)
                .min_by(|&a, &b| (q.gram[(a, a)] - 2.0 * q.linear[a]).total_cmp(&(q.gram[(b, b)] - 2.0 * q.linear[b])))
                .unwrap();
            let mut e = DVector::zeros(n);
            e[best] = 1.0;
            e
        }
    };
    let start_w = w.clone();
    let start_f = q.objective(&start_w);

    if !active_set(q, &mut w, tol, cap) || q.kkt_residual(&w) > tol {
        if q.objective(&w) > start_f {
            w = start_w.clone();
        }
        projected_gradient(q, &mut w, tol, cap);
    }
    if q.objective(&w) > start_f {
        w = start_w;
    }
    let r = q.kkt_residual(&w);
    if r <= tol {
        Ok(w)
    } else {
        Err(Error::QpNotConverged {
            iterations: cap,
            residual: r,
            best: w.iter().copied().collect(),
        })
    }
}

/// [`simplex_qp_solve_from`] without a warm start.
pub fn simplex_qp_solve(q: &SimplexQp, tol: f64) -> Result<DVector<f64>> {
    simplex_qp_solve_from(q, tol, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn one_by_one() {
        let q = SimplexQp::new(DMatrix::from_element(1, 1, 0.3), DVector::from_element(1, 0.9)).unwrap();
        assert_eq!(simplex_qp_solve(&q, 1e-10).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn identity_two_by_two_against_grid() {
        // Minimizing w₁² + w₂² − 2w₁ on the simplex: along w₁ + w₂ = 1 the derivative is
        // 4w₁ − 4 ≤ 0, so the optimum sits at the vertex e₁.
        let q = SimplexQp::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let w = simplex_qp_solve(&q, 1e-10).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=100_000 {
            let a = i as f64 * 1e-5;
            let f = q.objective(&DVector::from_vec(vec![a, 1.0 - a]));
            if f < best.0 {
                best = (f, a);
            }
        }
        assert_relative_eq!(w[0], best.1, epsilon = 1e-5);
        assert_eq!(w.as_slice(), &[1.0, 0.0]);
        assert!(q.kkt_residual(&w) <= 1e-10);
    }

    #[test]
    fn projection_lands_on_simplex() {
        let p = project_simplex(&DVector::from_vec(vec![3.0, -1.0, 0.5]));
        assert_relative_eq!(p.sum(), 1.0, epsilon = 1e-15);
        assert_eq!(p.as_slice(), &[1.0, 0.0, 0.0]);
        let p = project_simplex(&DVector::from_vec(vec![0.5, 0.5, 0.5]));
        assert_relative_eq!(p[0], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_malformed() {
        assert!(SimplexQp::new(DMatrix::identity(2, 2), DVector::zeros(3)).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(SimplexQp::new(asym, DVector::zeros(2)).is_err());
    }

    fn random_qp(seed: u64, n: usize) -> SimplexQp {
        use rand::Rng;
        let mut rng = crate::rng::rng_from(seed, &[]);
        let pts: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let gram = DMatrix::from_fn(n, n, |i, j| (-0.5 * (pts[i] - pts[j]).powi(2)).exp());
        let linear = DVector::from_fn(n, |_, _| rng.random_range(0.05..1.0));
        SimplexQp::new(gram, linear).unwrap()
    }

    proptest! {
        #[test]
        fn solution_is_feasible_and_beats_every_vertex(seed in 0u64..500, n in 1usize..8) {
            let q = random_qp(seed, n);
            let w = simplex_qp_solve(&q, 1e-10).unwrap();
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            prop_assert!((w.sum() - 1.0).abs() < 1e-12);
            prop_assert!(q.kkt_residual(&w) <= 1e-10);
            let f = q.objective(&w);
            for i in 0..n {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                prop_assert!(f <= q.objective(&e) + 1e-12);
            }
        }

        #[test]
        fn warm_start_never_increases_the_objective(seed in 0u64..300, n in 2usize..8) {
            let q = random_qp(seed, n);
            let mut start = vec![0.0; n];
            start[0] = 0.6;
            start[n - 1] += 0.4;
            let f0 = q.objective(&DVector::from_column_slice(&start));
            let w = simplex_qp_solve_from(&q, 1e-10, Some(&start)).unwrap();
            prop_assert!(q.objective(&w) <= f0 + 1e-15);
        }
    }
}
