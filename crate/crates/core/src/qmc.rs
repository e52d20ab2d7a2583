//! Sobol low-discrepancy points (Gray-code order, Joe–Kuo direction numbers) and
//! quasi-random sampling of Gaussian mixtures.

use rand::Rng;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::kernel::{GaussianMixture, MixtureSampler, WeightedParticleSet};

const BITS: usize = 32;

// Primitive-polynomial degree `s`, interior coefficients `a` and initial direction
// integers `m` for dimensions 2, 3, ...; dimension 1 is the van der Corput sequence.
#[rustfmt::skip]
const JOE_KUO: &[(u32, u32, &[u32])] = &[
    (1, 0, &[1]), (2, 1, &[1, 3]), (3, 1, &[1, 3, 1]), (3, 2, &[1, 1, 1]), (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]), (5, 2, &[1, 1, 5, 5, 17]), (5, 4, &[1, 1, 5, 5, 5]), (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]), (5, 13, &[1, 1, 1, 3, 11]), (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]), (6, 13, &[1, 1, 1, 15, 21, 21]), (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]), (6, 22, &[1, 3, 1, 15, 13, 25]), (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]), (7, 4, &[1, 3, 7, 13, 13, 15, 69]), (7, 7, &[1, 1, 3, 13, 7, 35, 63]),
    (7, 8, &[1, 3, 5, 9, 1, 25, 53]), (7, 14, &[1, 3, 1, 13, 9, 35, 107]), (7, 19, &[1, 3, 1, 5, 27, 61, 31]),
    (7, 21, &[1, 1, 5, 11, 19, 41, 61]), (7, 28, &[1, 3, 5, 3, 3, 13, 69]), (7, 31, &[1, 1, 7, 13, 1, 19, 1]),
    (7, 32, &[1, 3, 7, 5, 13, 19, 59]), (7, 37, &[1, 1, 3, 9, 25, 29, 41]), (7, 41, &[1, 3, 5, 13, 23, 1, 55]),
    (7, 42, &[1, 3, 7, 3, 13, 59, 17]),
];

/// Largest supported dimension.
pub const MAX_SOBOL_DIM: usize = JOE_KUO.len() + 1;

fn direction_numbers(dim: usize) -> Vec<[u32; BITS]> {
    let mut out = Vec::with_capacity(dim);
    let mut first = [0u32; BITS];
    for (k, v) in first.iter_mut().enumerate() {
        *v = 1 << (BITS - 1 - k);
    }
    out.push(first);
    for &(s, a, m) in JOE_KUO.iter().take(dim.saturating_sub(1)) {
        let s = s as usize;
        let mut v = [0u32; BITS];
        for k in 0..BITS {
            v[k] = if k < s {
                m[k] << (BITS - 1 - k)
            } else {
                let mut x = v[k - s] ^ (v[k - s] >> s);
                for i in 1..s {
                    if (a >> (s - 1 - i)) & 1 == 1 {
                        x ^= v[k - i];
                    }
                }
                x
            };
        }
        out.push(v);
    }
    out
}

/// A Sobol stream started at `offset` (index 0 is the all-zeros point).
#[derive(Clone, Debug)]
pub struct SobolStream {
    dim: usize,
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
    offset: u64,
}

const END: u64 = 1 << 32;

impl SobolStream {
    /// Stream skipping the zero point (offset 1).
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_offset(dim, 1)
    }

    pub fn with_offset(dim: usize, offset: u64) -> Result<Self> {
        if dim == 0 || dim > MAX_SOBOL_DIM {
            return Err(Error::InvalidArgument(format!("Sobol dimension must be in 1..={MAX_SOBOL_DIM}, got {dim}")));
        }
        if offset >= END {
            return Err(Error::InvalidArgument(format!("Sobol offset {offset} exceeds 2^32")));
        }
        let directions = direction_numbers(dim);
        let gray = offset ^ (offset >> 1);
        let state = directions
            .iter()
            .map(|v| (0..BITS).filter(|&b| (gray >> b) & 1 == 1).fold(0u32, |x, b| x ^ v[b]))
            .collect();
        Ok(SobolStream {
            dim,
            directions,
            state,
            index: offset,
            offset,
        })
    }

    /// Stream starting at a random index in `[1, 2^24)`.
    pub fn with_random_offset<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        Self::with_offset(dim, rng.random_range(1..(1u64 << 24)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    /// Index of the next point to be returned.
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Writes the next point into `out` and advances.
    pub fn next_into(&mut self, out: &mut [f64]) -> Result<()> {
        if self.index >= END {
            return Err(Error::Numerical("Sobol stream exhausted at index 2^32".into()));
        }
        for (o, &s) in out.iter_mut().zip(&self.state) {
            *o = s as f64 / END as f64;
        }
        let c = (!self.index).trailing_zeros() as usize;
        if c < BITS {
            for (s, v) in self.state.iter_mut().zip(&self.directions) {
                *s ^= v[c];
            }
        }
        self.index += 1;
        Ok(())
    }

    pub fn next_point(&mut self) -> Result<Vec<f64>> {
        let mut p = vec![0.0; self.dim];
        self.next_into(&mut p)?;
        Ok(p)
    }
}

/// `Φ⁻¹(u)`: a rational approximation polished by one Halley step.
pub fn inverse_normal_cdf(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidArgument(format!("inverse normal CDF needs u in (0, 1), got {u}")));
    }
    Ok(inverse_normal_cdf_unchecked(u))
}

fn inverse_normal_cdf_unchecked(u: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if u < LOW {
        tail((-2.0 * u.ln()).sqrt())
    } else if u <= 1.0 - LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - u).ln()).sqrt())
    };
    let e = 0.5 * erfc(-x / std::f64::consts::SQRT_2) - u;
    let h = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - h / (1.0 + 0.5 * x * h)
}

/// `n` quasi-random draws from `p` using `stream` (dimension `p.dim() + 1`). The last
/// coordinate picks the component by inverse CDF in storage order; the first `d` are
/// mapped through `Φ⁻¹` and the component's covariance factor. Ancestry holds the
/// component of each draw.
pub fn qmc_sample_mixture(p: &GaussianMixture, n: usize, stream: &mut SobolStream) -> Result<WeightedParticleSet> {
    let d = p.dim();
    if stream.dim() != d + 1 {
        return Err(Error::DimensionMismatch {
            expected: d + 1,
            got: stream.dim(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("number of samples must be at least 1".into()));
    }
    let sampler = MixtureSampler::new(p)?;
    let mut u = vec![0.0; d + 1];
    let mut z = vec![0.0; d];
    let mut points = vec![0.0; n * d];
    let mut comps = Vec::with_capacity(n);
    // Coordinates are multiples of 2^-32; exact zeros only occur at index 0.
    let floor = 0.5 / END as f64;
    for x in points.chunks_exact_mut(d) {
        stream.next_into(&mut u)?;
        let c = sampler.component_for_uniform(u[d]);
        for (zi, ui) in z.iter_mut().zip(&u[..d]) {
            *zi = inverse_normal_cdf_unchecked(ui.max(floor));
        }
        sampler.transform(c, &z, x);
        comps.push(c);
    }
    WeightedParticleSet::uniform(d, points)?.with_ancestry(comps, p.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn first_points_in_one_dimension() {
        let mut s = SobolStream::new(1).unwrap();
        let pts: Vec<f64> = (0..3).map(|_| s.next_point().unwrap()[0]).collect();
        assert_eq!(pts, vec![0.5, 0.75, 0.25]);
    }

    #[test]
    fn matches_reference_generator() {
        // Reference points from an independent Joe–Kuo implementation, unscrambled.
        let at_37 = [
            0.921875, 0.640625, 0.578125, 0.921875, 0.765625, 0.296875, 0.171875, 0.796875, 0.609375, 0.171875,
            0.015625, 0.078125, 0.578125, 0.859375, 0.109375, 0.484375, 0.796875, 0.421875, 0.046875, 0.140625,
            0.953125,
        ];
        let at_1000 = [
            0.2197265625, 0.0966796875, 0.5185546875, 0.6767578125, 0.2802734375, 0.9072265625, 0.0458984375,
            0.8994140625, 0.5009765625, 0.0693359375, 0.0849609375, 0.2548828125, 0.1611328125, 0.3837890625,
            0.1435546875, 0.3701171875, 0.7197265625, 0.3447265625, 0.9912109375, 0.7255859375, 0.5224609375,
        ];
        assert_eq!(SobolStream::with_offset(21, 37).unwrap().next_point().unwrap(), at_37);
        assert_eq!(SobolStream::with_offset(21, 1000).unwrap().next_point().unwrap(), at_1000);
        let mut s = SobolStream::with_offset(21, 0).unwrap();
        for _ in 0..1000 {
            s.next_point().unwrap();
        }
        assert_eq!(s.next_point().unwrap(), at_1000);
        let mut s3 = SobolStream::with_offset(3, 0).unwrap();
        let want = [[0.0; 3], [0.5; 3], [0.75, 0.25, 0.25], [0.25, 0.75, 0.75], [0.375, 0.375, 0.625]];
        for w in want {
            assert_eq!(s3.next_point().unwrap(), w);
        }
    }

    #[test]
    fn dyadic_intervals_are_hit_once() {
        for k in 1..12 {
            let mut s = SobolStream::with_offset(1, 0).unwrap();
            let mut hits = vec![0; 1 << k];
            for _ in 0..(1 << k) {
                let x = s.next_point().unwrap()[0];
                assert!((0.0..1.0).contains(&x));
                hits[(x * (1 << k) as f64) as usize] += 1;
            }
            assert!(hits.iter().all(|&h| h == 1));
        }
    }

    #[test]
    fn two_dimensional_boxes_hold_one_point() {
        let mut s = SobolStream::with_offset(2, 0).unwrap();
        let mut hits = vec![0; 1024];
        for _ in 0..1024 {
            let p = s.next_point().unwrap();
            hits[(p[0] * 32.0) as usize * 32 + (p[1] * 32.0) as usize] += 1;
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn overflow_and_dimension_errors() {
        let mut s = SobolStream::with_offset(2, END - 1).unwrap();
        assert!(s.next_point().is_ok());
        assert!(s.next_point().is_err());
        assert!(SobolStream::new(0).is_err());
        assert!(SobolStream::new(MAX_SOBOL_DIM + 1).is_err());
        assert!(SobolStream::new(MAX_SOBOL_DIM).is_ok());
    }

    #[test]
    fn inverse_cdf_against_statrs() {
        assert_eq!(inverse_normal_cdf(0.5).unwrap(), 0.0);
        assert_relative_eq!(inverse_normal_cdf(0.975).unwrap(), 1.959963984540054, epsilon = 1e-9);
        let n = Normal::new(0.0, 1.0).unwrap();
        for i in 1..1000 {
            let u = i as f64 / 1000.0;
            let x = inverse_normal_cdf(u).unwrap();
            assert!((n.cdf(x) - u).abs() < 1e-9);
            assert!((x - n.inverse_cdf(u)).abs() < 1e-9);
        }
        for u in [1e-12, 1e-6, 1.0 - 1e-6] {
            let x = inverse_normal_cdf(u).unwrap();
            assert!(((n.cdf(x) - u) / u.min(1.0 - u)).abs() < 1e-9);
        }
        assert!(inverse_normal_cdf(0.0).is_err());
        assert!(inverse_normal_cdf(1.0).is_err());
    }

    #[test]
    fn mixture_sampling() {
        let p = GaussianMixture::single(DVector::from_vec(vec![3.0]), DMatrix::identity(1, 1)).unwrap();
        let mut s = SobolStream::new(2).unwrap();
        let q = qmc_sample_mixture(&p, 1, &mut s).unwrap();
        assert_eq!(q.point(0), &[3.0]);

        let p = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![DVector::from_vec(vec![-1.0]), DVector::from_vec(vec![1.0])],
            vec![DMatrix::identity(1, 1); 2],
        )
        .unwrap();
        let mut s = SobolStream::with_offset(2, 0).unwrap();
        let q = qmc_sample_mixture(&p, 1 << 8, &mut s).unwrap();
        let zeros = q.ancestry().unwrap().iter().filter(|&&c| c == 0).count();
        assert_eq!(zeros, 1 << 7);

        let mut s = SobolStream::new(3).unwrap();
        assert!(qmc_sample_mixture(&p, 4, &mut s).is_err());
    }

    #[test]
    fn mixture_mean_is_reproduced() {
        use rand::Rng as _;
        let mut rng = crate::rng::rng_from(17, &[]);
        let means: Vec<DVector<f64>> = (0..6).map(|_| DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0))).collect();
        let covs: Vec<DMatrix<f64>> = (0..6).map(|_| DMatrix::identity(2, 2) * rng.random_range(0.1..4.1)).collect();
        let mut w: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
        let t: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= t);
        let p = GaussianMixture::new(w, means, covs).unwrap();
        let mut s = SobolStream::with_random_offset(3, &mut rng).unwrap();
        let q = qmc_sample_mixture(&p, 1 << 14, &mut s).unwrap();
        let diff = q.mean() - p.mixture_mean();
        assert!(diff.amax() < 1e-2, "{diff}");
    }
}
