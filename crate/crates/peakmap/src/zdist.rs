//! Truncated bivariate normal over an axis-aligned box.
//!
//! Used for drawing peak pairs `(value, time)` and as the peak-data prior of
//! the state-space model. Sampling is by rejection from the untruncated
//! normal; the box mass (needed when the truncation box itself varies) is
//! computed by one-dimensional quadrature of the conditional-normal slice.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::error::{Error, Result};
use crate::quad;

/// Minimum acceptance rate before rejection sampling reports a
/// misconfigured box.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
const MAX_ATTEMPTS: u64 = 200_000;

/// Standard normal CDF.
fn phi_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Bivariate normal `N(mu, sigma)` restricted to `(lo[0], hi[0]) x (lo[1], hi[1])`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncatedBvn {
    mu: [f64; 2],
    sigma: [[f64; 2]; 2],
    /// Lower-triangular Cholesky factor of sigma.
    chol: [[f64; 2]; 2],
    lo: [f64; 2],
    hi: [f64; 2],
}

impl TruncatedBvn {
    /// Build the distribution. The covariance is symmetrized by copying the
    /// lower-triangle entry over the upper one (the lower entry is
    /// authoritative when the two disagree), then checked for positive
    /// definiteness via its Cholesky factorization.
    pub fn new(mu: [f64; 2], sigma_in: [[f64; 2]; 2], lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        for v in mu.iter().chain(lo.iter()).chain(hi.iter()) {
            if !v.is_finite() {
                return Err(Error::invalid("distribution parameters must be finite"));
            }
        }
        for k in 0..2 {
            if lo[k] >= hi[k] {
                return Err(Error::invalid(format!(
                    "empty truncation interval ({}, {}) in coordinate {k}",
                    lo[k], hi[k]
                )));
            }
        }
        let mut sigma = sigma_in;
        sigma[0][1] = sigma[1][0];
        let a = sigma[0][0];
        if a <= 0.0 {
            return Err(Error::invalid("covariance is not positive definite"));
        }
        let l00 = a.sqrt();
        let l10 = sigma[1][0] / l00;
        let rem = sigma[1][1] - l10 * l10;
        if rem <= 0.0 || !rem.is_finite() {
            return Err(Error::invalid("covariance is not positive definite"));
        }
        let chol = [[l00, 0.0], [l10, rem.sqrt()]];
        Ok(TruncatedBvn { mu, sigma, chol, lo, hi })
    }

    #[must_use]
    pub fn mu(&self) -> [f64; 2] {
        self.mu
    }

    #[must_use]
    pub fn sigma(&self) -> [[f64; 2]; 2] {
        self.sigma
    }

    #[must_use]
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        (self.lo, self.hi)
    }

    #[must_use]
    pub fn contains(&self, z: [f64; 2]) -> bool {
        z[0] > self.lo[0] && z[0] < self.hi[0] && z[1] > self.lo[1] && z[1] < self.hi[1]
    }

    /// One draw by rejection. Errors when the observed acceptance rate drops
    /// below [`MIN_ACCEPTANCE`], which indicates a box far out in the tails.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<[f64; 2]> {
        for attempt in 1..=MAX_ATTEMPTS {
            let u0: f64 = rng.sample(StandardNormal);
            let u1: f64 = rng.sample(StandardNormal);
            let z = [
                self.mu[0] + self.chol[0][0] * u0,
                self.mu[1] + self.chol[1][0] * u0 + self.chol[1][1] * u1,
            ];
            if self.contains(z) {
                return Ok(z);
            }
            if attempt == MAX_ATTEMPTS {
                return Err(Error::RejectionRate {
                    rate: 1.0 / MAX_ATTEMPTS as f64,
                    min: MIN_ACCEPTANCE,
                });
            }
        }
        unreachable!()
    }

    /// Unnormalized log-density: the normal quadratic form inside the box,
    /// `-inf` outside. The box mass is deliberately not subtracted; ratios
    /// at a fixed box cancel it.
    #[must_use]
    pub fn logpdf_unnorm(&self, z: [f64; 2]) -> f64 {
        if !self.contains(z) {
            return f64::NEG_INFINITY;
        }
        // Solve L u = (z - mu) by forward substitution; the form is |u|^2.
        let d0 = z[0] - self.mu[0];
        let d1 = z[1] - self.mu[1];
        let u0 = d0 / self.chol[0][0];
        let u1 = (d1 - self.chol[1][0] * u0) / self.chol[1][1];
        -0.5 * (u0 * u0 + u1 * u1)
    }

    /// Probability mass of the truncation box under the untruncated normal,
    /// via quadrature over the first coordinate of the conditional-normal
    /// slice through the second.
    pub fn box_mass(&self) -> Result<f64> {
        let (m0, m1) = (self.mu[0], self.mu[1]);
        let s0 = self.sigma[0][0].sqrt();
        let s1 = self.sigma[1][1].sqrt();
        let rho = self.sigma[1][0] / (s0 * s1);
        let s_cond = s1 * (1.0 - rho * rho).max(1e-300).sqrt();
        let integrand = |x: f64| {
            let m_cond = m1 + rho * s1 / s0 * (x - m0);
            let slice =
                phi_cdf((self.hi[1] - m_cond) / s_cond) - phi_cdf((self.lo[1] - m_cond) / s_cond);
            phi_pdf((x - m0) / s0) / s0 * slice
        };
        // Clip the outer range to +-9 sd around the mean: mass beyond is
        // below double precision.
        let a = self.lo[0].max(m0 - 9.0 * s0);
        let b = self.hi[0].min(m0 + 9.0 * s0);
        if a >= b {
            return Ok(0.0);
        }
        quad::integrate(integrand, a, b, 1e-13, quad::DEFAULT_MAX_SUBDIVISIONS)
    }
}

/// Truncated-distribution mean of both coordinates, by the same conditional
/// slice quadrature as [`TruncatedBvn::box_mass`]. Exact up to quadrature
/// tolerance; used as an oracle for the rejection sampler and for
/// moment-matched initialization.
pub fn truncated_mean(dist: &TruncatedBvn) -> Result<[f64; 2]> {
    let mass = dist.box_mass()?;
    if mass <= 0.0 {
        return Err(Error::invalid("truncation box carries no mass"));
    }
    let (m0, m1) = (dist.mu[0], dist.mu[1]);
    let s0 = dist.sigma[0][0].sqrt();
    let s1 = dist.sigma[1][1].sqrt();
    let rho = dist.sigma[1][0] / (s0 * s1);
    let s_cond = s1 * (1.0 - rho * rho).max(1e-300).sqrt();
    let a = dist.lo[0].max(m0 - 9.0 * s0);
    let b = dist.hi[0].min(m0 + 9.0 * s0);
    let ex0 = quad::integrate(
        |x| {
            let m_cond = m1 + rho * s1 / s0 * (x - m0);
            let slice = phi_cdf((dist.hi[1] - m_cond) / s_cond)
                - phi_cdf((dist.lo[1] - m_cond) / s_cond);
            x * phi_pdf((x - m0) / s0) / s0 * slice
        },
        a,
        b,
        1e-13,
        quad::DEFAULT_MAX_SUBDIVISIONS,
    )?;
    // E[x2 over the slice] = m_cond * (Phi(B) - Phi(A)) - s_cond * (pdf(B) - pdf(A)).
    let ex1 = quad::integrate(
        |x| {
            let m_cond = m1 + rho * s1 / s0 * (x - m0);
            let hi_t = (dist.hi[1] - m_cond) / s_cond;
            let lo_t = (dist.lo[1] - m_cond) / s_cond;
            let inner = m_cond * (phi_cdf(hi_t) - phi_cdf(lo_t))
                - s_cond * (phi_pdf(hi_t) - phi_pdf(lo_t));
            phi_pdf((x - m0) / s0) / s0 * inner
        },
        a,
        b,
        1e-13,
        quad::DEFAULT_MAX_SUBDIVISIONS,
    )?;
    Ok([ex0 / mass, ex1 / mass])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn paper_like() -> TruncatedBvn {
        TruncatedBvn::new(
            [0.0144, 17.9],
            [[0.000036, -0.0187], [-0.0187, 16.09]],
            [0.005, 1.0],
            [1.0, 35.0],
        )
        .unwrap()
    }

    #[test]
    fn test_rejects_non_pd_sigma() {
        assert!(TruncatedBvn::new([0.0, 0.0], [[1.0, 0.0], [2.0, 1.0]], [-1.0, -1.0], [1.0, 1.0])
            .is_err());
        assert!(TruncatedBvn::new([0.0, 0.0], [[0.0, 0.0], [0.0, 0.0]], [-1.0, -1.0], [1.0, 1.0])
            .is_err());
        assert!(TruncatedBvn::new(
            [0.0144, 17.9],
            // Correlation would exceed 1.
            [[0.000036, -0.1], [-0.1, 16.09]],
            [0.005, 1.0],
            [1.0, 35.0]
        )
        .is_err());
    }

    #[test]
    fn test_rejects_empty_box() {
        assert!(
            TruncatedBvn::new([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0], [1.0, 2.0])
                .is_err()
        );
    }

    #[test]
    fn test_lower_triangle_is_authoritative() {
        let d = TruncatedBvn::new(
            [0.0144, 17.9],
            [[0.000036, 0.0187], [-0.0187, 16.09]],
            [0.005, 1.0],
            [1.0, 35.0],
        )
        .unwrap();
        assert_eq!(d.sigma()[0][1], -0.0187);
        assert_eq!(d.sigma()[1][0], -0.0187);
    }

    #[test]
    fn test_all_draws_in_box() {
        let d = paper_like();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let z = d.sample(&mut rng).unwrap();
            assert!(d.contains(z));
        }
    }

    #[test]
    fn test_far_box_reports_rejection_rate() {
        let d = TruncatedBvn::new(
            [0.0, 0.0],
            [[1.0, 0.0], [0.0, 1.0]],
            [8.0, 8.0],
            [9.0, 9.0],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(d.sample(&mut rng), Err(Error::RejectionRate { .. })));
    }

    #[test]
    fn test_sampler_moments_match_quadrature_oracle() {
        let d = paper_like();
        let exact = truncated_mean(&d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000usize;
        let (mut s0, mut s1, mut q0, mut q1) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let z = d.sample(&mut rng).unwrap();
            s0 += z[0];
            s1 += z[1];
            q0 += z[0] * z[0];
            q1 += z[1] * z[1];
        }
        let mean0 = s0 / n as f64;
        let mean1 = s1 / n as f64;
        let se0 = ((q0 / n as f64 - mean0 * mean0) / n as f64).sqrt();
        let se1 = ((q1 / n as f64 - mean1 * mean1) / n as f64).sqrt();
        assert!(
            (mean0 - exact[0]).abs() < 3.0 * se0,
            "coordinate 0: {mean0} vs {} (se {se0})",
            exact[0]
        );
        assert!(
            (mean1 - exact[1]).abs() < 3.0 * se1,
            "coordinate 1: {mean1} vs {} (se {se1})",
            exact[1]
        );
    }

    #[test]
    fn test_box_mass_against_untruncated_limit() {
        // A huge box captures essentially all the mass.
        let d = TruncatedBvn::new(
            [0.3, -2.0],
            [[2.0, 0.7], [0.7, 1.5]],
            [-100.0, -100.0],
            [100.0, 100.0],
        )
        .unwrap();
        assert_abs_diff_eq!(d.box_mass().unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn test_box_mass_halves_at_mean_split() {
        // Splitting an uncorrelated normal at its mean in one coordinate
        // halves the mass.
        let d = TruncatedBvn::new(
            [1.0, 2.0],
            [[1.0, 0.0], [0.0, 4.0]],
            [1.0, -100.0],
            [100.0, 100.0],
        )
        .unwrap();
        assert_abs_diff_eq!(d.box_mass().unwrap(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn test_logpdf_quadratic_form() {
        let d = TruncatedBvn::new(
            [0.0, 0.0],
            [[1.0, 0.0], [0.0, 1.0]],
            [-10.0, -10.0],
            [10.0, 10.0],
        )
        .unwrap();
        assert_abs_diff_eq!(d.logpdf_unnorm([0.0, 0.0]), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.logpdf_unnorm([1.0, 1.0]), -1.0, epsilon = 1e-12);
        assert_eq!(d.logpdf_unnorm([11.0, 0.0]), f64::NEG_INFINITY);
    }
}
