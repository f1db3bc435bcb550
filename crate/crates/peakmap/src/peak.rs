//! Forward peak maps: from `(init, beta, gamma)` to the peak value/time pairs
//! of the prevalence curve and of the weekly incidence series.
//!
//! Prevalence peaks where `s = gamma / beta`, giving a closed form on the tau
//! axis. Weekly incidence `beta * s_{t-1} * i_{t-1}` peaks one report week
//! after the tau point where `s - i = gamma / beta`; that point is found by
//! bracketed root-finding and advanced one discrete week on the tau axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::root;
use crate::sir::{self, InitialConditions, SirParams};

/// Peak of the prevalence curve `i(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakPrevalence {
    /// Peak prevalence value, a proportion.
    pub ppv: f64,
    /// Peak prevalence time, weeks.
    pub ppt: f64,
    /// Tau coordinate of the peak (zero when the curve declines from t = 0).
    pub tau_star: f64,
    /// True when `rho * s0 <= 1`: prevalence is maximal at t = 0.
    pub no_epidemic: bool,
}

/// Peak of the weekly incidence series `beta * s_{t-1} * i_{t-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakIncidence {
    /// Peak weekly incidence value, a proportion of the population.
    pub piv: f64,
    /// Peak incidence time, weeks.
    pub pit: f64,
    /// Tau coordinate of the report week before the peak, where the
    /// incidence rate condition `s - i = gamma / beta` holds.
    pub tau_before_peak: f64,
    /// Tau coordinate one discrete week later, where the peak is reported.
    pub tau_at_peak: f64,
    /// True when the incidence series is maximal at the first report week.
    pub boundary: bool,
}

impl PeakIncidence {
    /// Peak incidence time rounded to the nearest report week.
    #[must_use]
    pub fn pit_week(&self) -> u32 {
        self.pit.round().max(1.0) as u32
    }
}

/// Peak of the prevalence curve, in closed form on the tau axis.
///
/// When `rho * s0 <= 1` the curve declines from the start; the boundary peak
/// `(ppv, ppt) = (i0, 0)` is returned with `no_epidemic` set.
pub fn peak_prevalence(init: &InitialConditions, params: &SirParams) -> Result<PeakPrevalence> {
    let rho = params.rho();
    if rho * init.s0 <= 1.0 {
        return Ok(PeakPrevalence { ppv: init.i0, ppt: 0.0, tau_star: 0.0, no_epidemic: true });
    }
    let tau_star = sir::tau_peak(init, params);
    let ppv = init.s0 + init.i0 - (1.0 + (rho * init.s0).ln()) / rho;
    let ppt = sir::time_of_tau(init, params, tau_star)?;
    Ok(PeakPrevalence { ppv, ppt, tau_star, no_epidemic: false })
}

/// Difference `s(tau) - i(tau) - 1/rho`; its root below the prevalence peak
/// marks the report week preceding the weekly incidence maximum.
pub(crate) fn incidence_condition(init: &InitialConditions, params: &SirParams, tau: f64) -> f64 {
    let rho = params.rho();
    2.0 * init.s0 * (-params.beta * tau).exp() - (init.s0 + init.i0) + params.gamma * tau
        - 1.0 / rho
}

/// Peak of the weekly incidence series.
///
/// Finds the tau point where the incidence rate stops increasing (root of
/// `s - i - 1/rho` on `[0, tau*]`, where the condition is strictly
/// decreasing), evaluates the incidence rate there, and advances one
/// discrete report week on the tau axis (`tau + i(tau)`, the weekly update
/// of the removed compartment divided by `gamma`).
///
/// When the condition is already nonpositive at tau = 0 the series is
/// maximal at the first report week; the result carries `boundary = true`.
pub fn peak_incidence(init: &InitialConditions, params: &SirParams) -> Result<PeakIncidence> {
    let boundary = incidence_condition(init, params, 0.0) <= 0.0;
    let tau_before = if boundary {
        0.0
    } else {
        // The condition is positive at 0 and equals -i(tau*) < 0 at the
        // prevalence peak, and is strictly decreasing in between.
        let tau_star = sir::tau_peak(init, params);
        root::brent(
            |tau| incidence_condition(init, params, tau),
            0.0,
            tau_star,
            1e-12,
            200,
        )?
    };
    let at = sir::analytic_state(init, params, tau_before)?;
    let piv = params.beta * at.s * at.i;
    let tau_at_peak = tau_before + at.i;
    let max = sir::tau_final(init, params)?;
    if tau_at_peak >= max {
        return Err(Error::invalid(format!(
            "one-week advance from tau = {tau_before} overshoots the final size {max}; \
             the epidemic burns out within a single report week"
        )));
    }
    let pit = sir::time_of_tau(init, params, tau_at_peak)?;
    Ok(PeakIncidence { piv, pit, tau_before_peak: tau_before, tau_at_peak, boundary })
}
