//! Joint prior over the model parameters.
//!
//! The rate pair carries no density of its own: it is the deterministic image
//! of the peak pair and the initial state under the inverse peak map, so a
//! prior draw is (λ, ι, θ0, z) plus that transformation.

use rand::Rng;
use rand_distr::{Dirichlet, Distribution, Gamma};

use super::config::{DbssmConfig, ZInterpretation};
use crate::invert::{
    incidence_to_params_with, prevalence_to_params, InverseMethod, InverseOptions,
};
use crate::peak::{PeakIncidence, PeakPrevalence};
use crate::sir::{InitialConditions, SirParams, SirState};
use crate::{Error, Result};

const MAX_Z_REDRAWS: usize = 100;

/// One draw from the joint prior.
#[derive(Debug, Clone)]
pub struct PriorDraw {
    pub lambda: f64,
    pub iota: f64,
    pub theta0: SirState,
    pub z: [f64; 2],
    /// Deterministic image of `(z, theta0)` under the inverse peak map.
    pub params: SirParams,
}

/// Map a peak pair and an initial state to rates under the configured
/// reading. `warm` seeds the iterative solver with a nearby known solution.
pub(crate) fn map_to_params(
    z: [f64; 2],
    theta0: &SirState,
    interpretation: ZInterpretation,
    method: InverseMethod,
    warm: Option<SirParams>,
) -> Result<SirParams> {
    let init = InitialConditions::new(theta0.s, theta0.i, theta0.r)?;
    match interpretation {
        ZInterpretation::Incidence => {
            let peak = PeakIncidence::observed(z[0], z[1]);
            let res =
                incidence_to_params_with(&peak, &init, method, InverseOptions { warm_start: warm })?;
            Ok(res.params)
        }
        ZInterpretation::Prevalence => {
            let peak = PeakPrevalence::observed(z[0], z[1]);
            prevalence_to_params(&peak, &init)
        }
    }
}

/// Draw (λ, ι, θ0, z, β, γ) from the prior. Peak pairs that admit no epidemic
/// curve for the drawn initial state are redrawn, up to a cap.
pub fn sample_prior<R: Rng + ?Sized>(config: &DbssmConfig, rng: &mut R) -> Result<PriorDraw> {
    config.validate()?;
    let lambda = Gamma::new(config.lambda_prior.shape, 1.0 / config.lambda_prior.rate)
        .map_err(|e| Error::invalid(format!("lambda prior: {e}")))?
        .sample(rng);
    let iota = Gamma::new(config.iota_prior.shape, 1.0 / config.iota_prior.rate)
        .map_err(|e| Error::invalid(format!("iota prior: {e}")))?
        .sample(rng);
    let dir = Dirichlet::new(&config.init_prior)
        .map_err(|e| Error::invalid(format!("initial-state prior: {e}")))?;
    let t0 = dir.sample(rng);
    let theta0 = SirState::new(t0[0], t0[1], t0[2])?;
    let zdist = config.z_prior.truncated(theta0.i)?;

    let mut last_err = None;
    for _ in 0..MAX_Z_REDRAWS {
        let z = zdist.sample(rng)?;
        match map_to_params(z, &theta0, config.z_interpretation, config.inverse_method, None) {
            Ok(params) => return Ok(PriorDraw { lambda, iota, theta0, z, params }),
            Err(e @ (Error::Infeasible(_) | Error::NoConvergence { .. })) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Infeasible(format!(
        "no feasible peak pair in {MAX_Z_REDRAWS} prior draws; last failure: {}",
        last_err.map_or_else(|| "none".into(), |e| e.to_string())
    )))
}
