//! Observation and transition densities of the state-space model.
//!
//! The latent weekly states follow a Dirichlet perturbation of the
//! deterministic one-week SIR map; observed proportions follow a Beta
//! distribution centered on the implied weekly new-infection rate. Both
//! densities are mean-parameterized with a concentration knob, so the
//! conditional expectations are the deterministic quantities themselves and
//! the variances vanish as the concentrations grow.

use rand_distr::{Beta, Dirichlet, Distribution};
use statrs::function::gamma::ln_gamma;

use crate::rng::stream_rng;
use crate::sir::{rk4_step, SirParams, SirState};
use crate::{Error, Result};

/// Half-width of the closed sub-interval of (0, 1) that observed proportions
/// are clamped into before the Beta likelihood sees them; surveillance
/// ingestion shares the same bounds.
pub(crate) const OBS_CLAMP: f64 = 1e-6;

/// Sub-stream offset separating season generation from the fitting chains.
const GENERATOR_STREAM: u64 = 1_000_003;

/// Deterministic one-week advance of the latent state.
pub fn one_week_map(state: &SirState, params: &SirParams) -> SirState {
    rk4_step(*state, params, 1.0)
}

/// New-infection proportion for the week following `prev`.
pub fn weekly_rate(prev: &SirState, params: &SirParams) -> f64 {
    params.beta * prev.s * prev.i
}

/// Log density of `Beta(lambda * incidence, lambda * (1 - incidence))` at `y`.
///
/// The mean is `incidence` for every `lambda`. Boundary observations get the
/// mathematical limit: finite exactly when the relevant shape equals 1,
/// negative infinity otherwise (the density is zero or divergent there, and
/// either way the point must not contribute probability mass).
pub fn obs_loglik(y: f64, incidence: f64, lambda: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    if !(incidence.is_finite() && incidence > 0.0 && incidence < 1.0) {
        return Err(Error::invalid(format!(
            "incidence {incidence} outside the open unit interval"
        )));
    }
    if !(0.0..=1.0).contains(&y) || !y.is_finite() {
        return Err(Error::invalid(format!("observation {y} outside [0, 1]")));
    }
    let a = lambda * incidence;
    let b = lambda * (1.0 - incidence);
    let ln_norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    if y == 0.0 {
        return Ok(if a == 1.0 { ln_norm } else { f64::NEG_INFINITY });
    }
    if y == 1.0 {
        return Ok(if b == 1.0 { ln_norm } else { f64::NEG_INFINITY });
    }
    Ok(ln_norm + (a - 1.0) * y.ln() + (b - 1.0) * (1.0 - y).ln())
}

/// Log density of `Dirichlet(iota * f(theta_prev))` at `theta_next`, where
/// `f` is the deterministic one-week map. The mean is `f(theta_prev)`.
///
/// Zero components of `theta_next` yield negative infinity unless the
/// matching concentration is exactly 1 (zero or divergent density otherwise).
pub fn transition_logpdf(
    theta_next: &SirState,
    theta_prev: &SirState,
    params: &SirParams,
    iota: f64,
) -> Result<f64> {
    if !(iota.is_finite() && iota > 0.0) {
        return Err(Error::invalid(format!("iota must be positive, got {iota}")));
    }
    let mean = one_week_map(theta_prev, params);
    let alpha = [iota * mean.s, iota * mean.i, iota * mean.r];
    if alpha.iter().any(|&a| !a.is_finite() || a <= 0.0) {
        return Err(Error::invalid(format!(
            "degenerate transition concentration ({}, {}, {})",
            alpha[0], alpha[1], alpha[2]
        )));
    }
    Ok(ln_dirichlet_pdf([theta_next.s, theta_next.i, theta_next.r], alpha))
}

/// Three-component Dirichlet log density; −∞ at boundary points where the
/// density is zero or unbounded.
pub(crate) fn ln_dirichlet_pdf(x: [f64; 3], alpha: [f64; 3]) -> f64 {
    let mut ll = ln_gamma(alpha.iter().sum());
    for (xi, ai) in x.iter().zip(alpha) {
        ll -= ln_gamma(ai);
        if *xi == 0.0 {
            if ai == 1.0 {
                continue;
            }
            return f64::NEG_INFINITY;
        }
        ll += (ai - 1.0) * xi.ln();
    }
    ll
}

/// Gamma log density in shape/rate form.
pub(crate) fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Generate a synthetic observed season by running the generative model
/// forward from `theta0`: each week draws the next latent state from the
/// Dirichlet transition and the observed proportion from the Beta
/// observation density, clamped into the likelihood's support.
pub fn generate_season(
    params: &SirParams,
    theta0: &SirState,
    lambda: f64,
    iota: f64,
    t_prime: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    if !(iota.is_finite() && iota > 0.0) {
        return Err(Error::invalid(format!("iota must be positive, got {iota}")));
    }
    let mut rng = stream_rng(seed, GENERATOR_STREAM);
    let mut y = Vec::with_capacity(t_prime);
    let mut prev = *theta0;
    for week in 0..t_prime {
        let inc = weekly_rate(&prev, params);
        let obs = Beta::new(lambda * inc, lambda * (1.0 - inc))
            .map_err(|e| Error::invalid(format!("week {}: observation shapes: {e}", week + 1)))?
            .sample(&mut rng);
        y.push(obs.clamp(OBS_CLAMP, 1.0 - OBS_CLAMP));
        let mean = one_week_map(&prev, params);
        let alpha = [iota * mean.s, iota * mean.i, iota * mean.r];
        let x = Dirichlet::new(&alpha)
            .map_err(|e| Error::invalid(format!("week {}: transition: {e}", week + 1)))?
            .sample(&mut rng);
        prev = SirState::new(x[0], x[1], x[2])?;
    }
    Ok(y)
}
