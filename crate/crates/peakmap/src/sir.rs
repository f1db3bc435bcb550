//! SIR dynamics: numeric stepping, the closed-form solution on the tau axis,
//! and the maps between tau and wall-clock time.
//!
//! Compartments are proportions `(s, i, r)` on the unit simplex. Time is
//! measured in weeks. With `rho = beta / gamma` and `tau = (r - r0) / gamma`,
//! the closed-form trajectory is
//!
//! ```text
//! s(tau) = s0 * exp(-beta * tau)
//! i(tau) = s0 + i0 - s0 * exp(-beta * tau) - gamma * tau
//! r(tau) = r0 + gamma * tau
//! ```
//!
//! and wall-clock time is recovered by integrating `d t / d tau = 1 / i(tau)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{quad, root};

/// Transmission and recovery rates, per week.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirParams {
    pub beta: f64,
    pub gamma: f64,
}

impl SirParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !beta.is_finite() || !gamma.is_finite() || beta <= 0.0 || gamma <= 0.0 {
            return Err(Error::invalid(format!(
                "rates must be positive and finite, got beta = {beta}, gamma = {gamma}"
            )));
        }
        Ok(SirParams { beta, gamma })
    }

    /// Ratio `beta / gamma`; the epidemic grows from `t = 0` iff `rho * s0 > 1`.
    #[must_use]
    pub fn rho(&self) -> f64 {
        self.beta / self.gamma
    }
}

/// Compartment proportions at one time point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

/// Tolerance on `s + i + r = 1` accepted by constructors.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Per-step drift above which the integrator renormalizes onto the simplex.
const RENORM_THRESHOLD: f64 = 1e-12;

impl SirState {
    pub fn new(s: f64, i: f64, r: f64) -> Result<Self> {
        for (name, v) in [("s", s), ("i", i), ("r", r)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} is not a proportion in [0, 1]")));
            }
        }
        if (s + i + r - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!(
                "compartments must sum to 1 within {SIMPLEX_TOL:.0e}, got {}",
                s + i + r
            )));
        }
        Ok(SirState { s, i, r })
    }

    fn renormalized(self) -> SirState {
        let s = self.s.max(0.0);
        let i = self.i.max(0.0);
        let r = self.r.max(0.0);
        let sum = s + i + r;
        if (sum - 1.0).abs() > RENORM_THRESHOLD && sum > 0.0 {
            SirState { s: s / sum, i: i / sum, r: r / sum }
        } else {
            SirState { s, i, r }
        }
    }
}

/// Compartment proportions at `t = 0`; an epidemic needs `i0 > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    pub s0: f64,
    pub i0: f64,
    pub r0: f64,
}

impl InitialConditions {
    pub fn new(s0: f64, i0: f64, r0: f64) -> Result<Self> {
        let state = SirState::new(s0, i0, r0)?;
        if state.i <= 0.0 {
            return Err(Error::invalid("initial infected proportion must be positive"));
        }
        Ok(InitialConditions { s0: state.s, i0: state.i, r0: state.r })
    }

    #[must_use]
    pub fn state(&self) -> SirState {
        SirState { s: self.s0, i: self.i0, r: self.r0 }
    }
}

/// A simulated path: states on a uniform time grid plus the incidence series.
///
/// `incidence[k]` is `beta * s[k-1] * i[k-1] * dt`, the discrete new-infection
/// mass attributed to grid point `k`; the first entry uses the initial state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: SirParams,
    pub init: InitialConditions,
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<SirState>,
    pub incidence: Vec<f64>,
}

impl Trajectory {
    /// Steps per week, when `dt` evenly divides one week.
    fn steps_per_week(&self) -> Result<usize> {
        let spw = (1.0 / self.dt).round();
        if spw < 1.0 || ((spw * self.dt) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "dt = {} does not divide a one-week interval",
                self.dt
            )));
        }
        Ok(spw as usize)
    }

    /// Number of whole weeks covered by the grid.
    pub fn weeks(&self) -> Result<usize> {
        Ok((self.states.len() - 1) / self.steps_per_week()?)
    }

    /// State at integer week `w`.
    pub fn state_at_week(&self, w: usize) -> Result<SirState> {
        let idx = w * self.steps_per_week()?;
        self.states
            .get(idx)
            .copied()
            .ok_or_else(|| Error::invalid(format!("week {w} beyond simulated horizon")))
    }

    /// Weekly incidence series: entry `w >= 1` is `beta * s_{w-1} * i_{w-1}`
    /// over a one-week interval; entry 0 uses the initial state.
    pub fn weekly_incidence(&self) -> Result<Vec<f64>> {
        let weeks = self.weeks()?;
        let mut out = Vec::with_capacity(weeks + 1);
        let s0 = self.states[0];
        out.push(self.params.beta * s0.s * s0.i);
        for w in 1..=weeks {
            let prev = self.state_at_week(w - 1)?;
            out.push(self.params.beta * prev.s * prev.i);
        }
        Ok(out)
    }

    /// Peak of the weekly incidence series over report weeks `1..=weeks`,
    /// first occurrence on ties. Returns `(value, week)`.
    pub fn weekly_incidence_peak(&self) -> Result<(f64, u32)> {
        let series = self.weekly_incidence()?;
        let mut best = (f64::NEG_INFINITY, 0u32);
        for (w, &v) in series.iter().enumerate().skip(1) {
            if v > best.0 {
                best = (v, w as u32);
            }
        }
        if best.1 == 0 {
            return Err(Error::invalid("trajectory has no report weeks"));
        }
        Ok(best)
    }

    /// Peak of the prevalence curve over the full grid, first occurrence on
    /// ties. Returns `(value, time)`.
    #[must_use]
    pub fn prevalence_peak(&self) -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for (k, st) in self.states.iter().enumerate() {
            if st.i > best.0 {
                best = (st.i, self.times[k]);
            }
        }
        best
    }
}

fn derivs(state: SirState, params: &SirParams) -> (f64, f64, f64) {
    let flow = params.beta * state.s * state.i;
    (-flow, flow - params.gamma * state.i, params.gamma * state.i)
}

/// One classical RK4 step of length `dt`.
///
/// The result is renormalized onto the simplex when the per-step drift
/// exceeds 1e-12; negative overshoot (possible for step sizes near the
/// stability margin) is clamped at zero before renormalizing.
#[must_use]
pub fn rk4_step(state: SirState, params: &SirParams, dt: f64) -> SirState {
    let k1 = derivs(state, params);
    let half = 0.5 * dt;
    let mid1 = SirState {
        s: state.s + half * k1.0,
        i: state.i + half * k1.1,
        r: state.r + half * k1.2,
    };
    let k2 = derivs(mid1, params);
    let mid2 = SirState {
        s: state.s + half * k2.0,
        i: state.i + half * k2.1,
        r: state.r + half * k2.2,
    };
    let k3 = derivs(mid2, params);
    let end = SirState {
        s: state.s + dt * k3.0,
        i: state.i + dt * k3.1,
        r: state.r + dt * k3.2,
    };
    let k4 = derivs(end, params);
    let sixth = dt / 6.0;
    SirState {
        s: state.s + sixth * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        i: state.i + sixth * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        r: state.r + sixth * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
    }
    .renormalized()
}

/// Integrate the system with RK4 at fixed step `dt` over `horizon` weeks.
pub fn simulate(
    init: &InitialConditions,
    params: &SirParams,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    let n_steps = (horizon / dt).round() as usize;
    if n_steps == 0 || n_steps > 100_000_000 {
        return Err(Error::invalid(format!(
            "horizon / dt = {} steps is out of range",
            horizon / dt
        )));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut incidence = Vec::with_capacity(n_steps + 1);
    let mut state = init.state();
    states.push(state);
    times.push(0.0);
    incidence.push(params.beta * state.s * state.i * dt);
    for k in 1..=n_steps {
        incidence.push(params.beta * state.s * state.i * dt);
        state = rk4_step(state, params, dt);
        states.push(state);
        times.push(k as f64 * dt);
    }
    Ok(Trajectory { params: *params, init: *init, dt, times, states, incidence })
}

/// Integrate with the discrete weekly recursion instead of RK4:
///
/// ```text
/// inc_t = beta * s_{t-1} * i_{t-1}
/// s_t   = s_{t-1} - inc_t
/// i_t   = i_{t-1} * (1 - gamma) + inc_t
/// r_t   = r_{t-1} + gamma * i_{t-1}
/// ```
///
/// With `gamma = 1` the prevalence and incidence series coincide exactly
/// (each week's infected are exactly that week's new infections).
pub fn simulate_discrete(
    init: &InitialConditions,
    params: &SirParams,
    weeks: usize,
) -> Result<Trajectory> {
    if weeks == 0 {
        return Err(Error::invalid("horizon must be at least one week"));
    }
    if params.gamma > 1.0 || params.beta * init.s0 > 1.0 {
        // The weekly recursion can leave the simplex outside this region.
        if params.gamma > 1.0 {
            return Err(Error::invalid(format!(
                "discrete stepping requires gamma <= 1 per week, got {}",
                params.gamma
            )));
        }
    }
    let mut states = Vec::with_capacity(weeks + 1);
    let mut times = Vec::with_capacity(weeks + 1);
    let mut incidence = Vec::with_capacity(weeks + 1);
    let mut state = init.state();
    states.push(state);
    times.push(0.0);
    incidence.push(params.beta * state.s * state.i);
    for t in 1..=weeks {
        let inc = params.beta * state.s * state.i;
        let next = SirState {
            s: (state.s - inc).max(0.0),
            i: state.i * (1.0 - params.gamma) + inc,
            r: state.r + params.gamma * state.i,
        };
        incidence.push(inc);
        states.push(next);
        times.push(t as f64);
        state = next;
    }
    Ok(Trajectory { params: *params, init: *init, dt: 1.0, times, states, incidence })
}

/// Closed-form state at a point on the tau axis.
///
/// Errors if `tau` is negative or beyond the final size (where the
/// closed-form prevalence goes negative).
pub fn analytic_state(init: &InitialConditions, params: &SirParams, tau: f64) -> Result<SirState> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::invalid(format!("tau must be nonnegative, got {tau}")));
    }
    let max = tau_final(init, params)?;
    if tau > max * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::TauOutOfRange { tau, max });
    }
    let s = init.s0 * (-params.beta * tau).exp();
    let i = (init.s0 + init.i0 - s - params.gamma * tau).max(0.0);
    let r = init.r0 + params.gamma * tau;
    Ok(SirState { s, i, r })
}

/// Prevalence on the tau axis, without domain checks; negative past the end.
pub(crate) fn prevalence_at_tau(init: &InitialConditions, params: &SirParams, tau: f64) -> f64 {
    init.s0 + init.i0 - init.s0 * (-params.beta * tau).exp() - params.gamma * tau
}

/// Tau at the prevalence peak, `ln(rho * s0) / beta`; zero when the epidemic
/// declines from the start.
#[must_use]
pub fn tau_peak(init: &InitialConditions, params: &SirParams) -> f64 {
    let rs = params.rho() * init.s0;
    if rs <= 1.0 {
        0.0
    } else {
        rs.ln() / params.beta
    }
}

/// Final-size limit of the tau axis: the positive root of `i(tau) = 0`.
pub fn tau_final(init: &InitialConditions, params: &SirParams) -> Result<f64> {
    let lo = tau_peak(init, params);
    // Beyond (s0 + i0) / gamma the prevalence is negative outright.
    let hi = (init.s0 + init.i0) / params.gamma + 1.0;
    root::brent(|tau| prevalence_at_tau(init, params, tau), lo, hi, 1e-14, 200)
}

/// Wall-clock time of a tau point: the integral of `1 / i` over `[0, tau]`.
///
/// Uses adaptive quadrature at absolute tolerance 1e-10. Errors if `tau`
/// reaches the final-size limit, where the integrand blows up.
pub fn time_of_tau(init: &InitialConditions, params: &SirParams, tau: f64) -> Result<f64> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::invalid(format!("tau must be nonnegative, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    let max = tau_final(init, params)?;
    if tau >= max {
        return Err(Error::TauOutOfRange { tau, max });
    }
    quad::integrate(
        |u| {
            let i = prevalence_at_tau(init, params, u);
            if i <= 0.0 {
                f64::NAN // surfaces as a quadrature domain error
            } else {
                1.0 / i
            }
        },
        0.0,
        tau,
        quad::DEFAULT_ABS_TOL,
        quad::DEFAULT_MAX_SUBDIVISIONS,
    )
}

/// Removed-compartment derivative of the reduced single-equation form,
/// `dr/dt = gamma * (1 - s0 * exp(-rho * (r - r0)) - r)`.
fn r_deriv(r: f64, init: &InitialConditions, params: &SirParams) -> f64 {
    params.gamma * (1.0 - init.s0 * (-params.rho() * (r - init.r0)).exp() - r)
}

/// Integrate the reduced removed-compartment equation to time `t` with RK4 at
/// fixed step `dt`, returning the removed proportion `r(t)`.
pub(crate) fn integrate_r_path(
    init: &InitialConditions,
    params: &SirParams,
    t: f64,
    dt: f64,
) -> f64 {
    let mut r = init.r0;
    let mut remaining = t;
    while remaining > 0.0 {
        let h = dt.min(remaining);
        let k1 = r_deriv(r, init, params);
        let k2 = r_deriv(r + 0.5 * h * k1, init, params);
        let k3 = r_deriv(r + 0.5 * h * k2, init, params);
        let k4 = r_deriv(r + h * k3, init, params);
        r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        remaining -= h;
    }
    r
}

/// Inverse of [`time_of_tau`]: the tau reached at wall-clock time `t`,
/// obtained by integrating the reduced removed-compartment equation with RK4
/// at fixed step 1e-3 weeks.
pub fn tau_of_time(init: &InitialConditions, params: &SirParams, t: f64) -> Result<f64> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::invalid(format!("time must be nonnegative, got {t}")));
    }
    let r = integrate_r_path(init, params, t, 1e-3);
    Ok((r - init.r0) / params.gamma)
}
