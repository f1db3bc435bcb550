//! Inverse peak maps: recover `(beta, gamma)` from an observed peak.
//!
//! Prevalence peaks `(ppv, ppt)` invert in two scalar steps: the peak value
//! pins `rho` through a monotone closed form, and a `beta`-free rescaling of
//! the time integral then pins `beta` from the peak time.
//!
//! Incidence peaks `(piv, pit)` have no closed form. A damped Newton solver
//! over `(ln beta, ln gamma)` drives the two-equation system — peak rate
//! matches `piv`, rate-maximum condition holds — where the tau coordinate of
//! the pre-peak report week is produced per [`InverseMethod`]:
//!
//! * `ComputeIntegral` — invert the exact time map by bracketed bisection at
//!   every candidate, targeting the report week before the peak.
//! * `TaylorApprox` — closed-form tanh approximation of the inverted time
//!   map, evaluated at the literal peak time.
//! * `SingleOde` — integrate the reduced removed-compartment equation to the
//!   literal peak time with fixed-step RK4.
//! * `FullOde` — no tau shortcut at all: simulate the full system, extract
//!   the weekly incidence peak by quadratic interpolation, and match it.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::peak::{incidence_condition, PeakIncidence, PeakPrevalence};
use crate::root;
use crate::sir::{self, InitialConditions, SirParams};
use crate::quad;

/// Strategy for producing the pre-peak tau coordinate inside the incidence
/// inverse solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InverseMethod {
    ComputeIntegral,
    TaylorApprox,
    SingleOde,
    FullOde,
}

impl InverseMethod {
    pub const ALL: [InverseMethod; 4] = [
        InverseMethod::ComputeIntegral,
        InverseMethod::TaylorApprox,
        InverseMethod::SingleOde,
        InverseMethod::FullOde,
    ];

    /// Human-readable name for report tables.
    #[must_use]
    pub fn label(&self) -> &'static str {
        match self {
            InverseMethod::ComputeIntegral => "Compute Integral",
            InverseMethod::TaylorApprox => "Taylor Approx.",
            InverseMethod::SingleOde => "Single ODE",
            InverseMethod::FullOde => "Full ODE",
        }
    }

    /// Stable token used by CLI flags and config files.
    #[must_use]
    pub fn token(&self) -> &'static str {
        match self {
            InverseMethod::ComputeIntegral => "compute-integral",
            InverseMethod::TaylorApprox => "taylor",
            InverseMethod::SingleOde => "single-ode",
            InverseMethod::FullOde => "full-ode",
        }
    }
}

impl std::str::FromStr for InverseMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "compute-integral" | "compute_integral" | "ci" => Ok(InverseMethod::ComputeIntegral),
            "taylor" | "taylor-approx" | "taylor_approx" => Ok(InverseMethod::TaylorApprox),
            "single-ode" | "single_ode" | "so" => Ok(InverseMethod::SingleOde),
            "full-ode" | "full_ode" | "fo" => Ok(InverseMethod::FullOde),
            other => Err(Error::invalid(format!(
                "unknown inverse method '{other}' (expected compute-integral, taylor, single-ode, or full-ode)"
            ))),
        }
    }
}

impl std::fmt::Display for InverseMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Outcome of an incidence-peak inversion.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InverseResult {
    pub params: SirParams,
    /// Peak-rate equation residual at the solution (recovered minus target).
    pub residual_piv: f64,
    /// Time-equation residual at the solution, measured with the exact time
    /// map against the method's own time target (recovered minus target).
    /// For approximate tau strategies this exposes their systematic error.
    pub residual_pit: f64,
    /// Outer-solver iterations spent across all starts.
    pub iterations: u32,
    /// Wall-clock seconds for the whole inversion.
    pub wall_time: f64,
}

/// Options for [`incidence_to_params_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct InverseOptions {
    /// Tried before the standard multi-start seeds; if it converges the
    /// remaining seeds are skipped. Intended for samplers that solve a
    /// slowly-moving sequence of nearby targets.
    pub warm_start: Option<SirParams>,
}

impl PeakPrevalence {
    /// Wrap an observed `(ppv, ppt)` pair for inversion; the tau coordinate
    /// is unknown and set to NaN.
    #[must_use]
    pub fn observed(ppv: f64, ppt: f64) -> Self {
        PeakPrevalence { ppv, ppt, tau_star: f64::NAN, no_epidemic: false }
    }
}

impl PeakIncidence {
    /// Wrap an observed `(piv, pit)` pair for inversion; tau coordinates are
    /// unknown and set to NaN.
    #[must_use]
    pub fn observed(piv: f64, pit: f64) -> Self {
        PeakIncidence {
            piv,
            pit,
            tau_before_peak: f64::NAN,
            tau_at_peak: f64::NAN,
            boundary: false,
        }
    }
}

/// Peak prevalence value as a function of `rho`, for fixed init. Strictly
/// increasing from `i0` (at `rho * s0 = 1`) toward `s0 + i0`.
fn ppv_of_rho(rho: f64, init: &InitialConditions) -> f64 {
    init.s0 + init.i0 - (1.0 + (rho * init.s0).ln()) / rho
}

/// The time integral rescaled by `beta` (substituting `u = beta * tau` makes
/// it a function of `rho` alone): `beta * ppt` for a curve peaking at `tau*`.
fn scaled_peak_time(rho: f64, init: &InitialConditions) -> Result<f64> {
    let upper = (rho * init.s0).ln();
    quad::integrate(
        |u| 1.0 / (init.s0 + init.i0 - init.s0 * (-u).exp() - u / rho),
        0.0,
        upper,
        1e-12,
        quad::DEFAULT_MAX_SUBDIVISIONS,
    )
}

/// Recover `(beta, gamma)` from a prevalence peak.
///
/// The peak value determines `rho` by scalar root-finding on the epidemic
/// branch `rho * s0 > 1`; the peak time then rescales the `beta`-free form
/// of the time integral into `beta`, and `gamma = beta / rho`.
pub fn prevalence_to_params(
    peak: &PeakPrevalence,
    init: &InitialConditions,
) -> Result<SirParams> {
    let (ppv, ppt) = (peak.ppv, peak.ppt);
    if peak.no_epidemic {
        return Err(Error::Infeasible(
            "boundary peak (no epidemic) does not determine parameters".into(),
        ));
    }
    if !ppv.is_finite() || ppv <= init.i0 || ppv >= 1.0 {
        return Err(Error::invalid(format!(
            "peak prevalence value {ppv} must lie in (i0, 1) = ({}, 1)",
            init.i0
        )));
    }
    if ppv >= init.s0 + init.i0 {
        return Err(Error::Infeasible(format!(
            "peak prevalence {ppv} is unattainable: the curve is bounded by s0 + i0 = {}",
            init.s0 + init.i0
        )));
    }
    if !ppt.is_finite() || ppt <= 0.0 {
        return Err(Error::invalid(format!("peak prevalence time {ppt} must be positive")));
    }
    let lo = (1.0 + 1e-12) / init.s0;
    let rho = root::brent_expanding(
        |r| ppv_of_rho(r, init) - ppv,
        lo,
        4.0 / init.s0,
        1e12,
        1e-13,
        300,
        "prevalence peak value equation",
    )?;
    let beta_ppt = scaled_peak_time(rho, init)?;
    let beta = beta_ppt / ppt;
    SirParams::new(beta, beta / rho)
}

const METHOD_TIME_LAG: f64 = 1.0;
/// The reduced single-equation integration uses a fixed number of RK4 steps
/// sized to the span, so its cost does not depend on the target time. The
/// resulting step never exceeds 35/2500 = 1.4e-2 weeks, far below the scale
/// where integration error would be visible next to solver tolerance.
const SINGLE_ODE_STEPS: f64 = 2500.0;

/// Tau coordinate the method assigns to the pre-peak report week for a
/// candidate `(beta, gamma)`.
fn method_tau(
    method: InverseMethod,
    init: &InitialConditions,
    params: &SirParams,
    pit: f64,
) -> Result<f64> {
    match method {
        InverseMethod::ComputeIntegral => {
            // Invert the exact time map at the report week before the peak.
            invert_time_map(init, params, pit - METHOD_TIME_LAG)
        }
        InverseMethod::TaylorApprox => Ok(taylor_tau(init, params, pit)),
        InverseMethod::SingleOde => {
            let r = sir::integrate_r_path(init, params, pit, pit / SINGLE_ODE_STEPS);
            Ok((r - init.r0) / params.gamma)
        }
        InverseMethod::FullOde => unreachable!("FullOde does not use a tau shortcut"),
    }
}

/// Closed-form tanh approximation of the inverted time map, evaluated
/// verbatim; the artanh argument is clamped into its open domain. The
/// approximation degrades away from the small-`rho * (r - r0)` regime, and
/// its output may even be negative — the solver treats it as-is.
fn taylor_tau(init: &InitialConditions, params: &SirParams, pit: f64) -> f64 {
    let rho = params.rho();
    let a = init.s0 * rho - 1.0;
    let kappa = (a * a + 2.0 * init.s0 * init.i0 * rho * rho).sqrt();
    let clamped = a.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
    let phi = clamped.atanh() / kappa;
    let inner = 0.5 * params.gamma * kappa * pit - phi;
    params.beta * params.beta / init.s0 * (a + kappa * inner.tanh()) + init.r0
}

/// Invert `time_of_tau` by bracketed bisection on `(0, tau_final)`.
///
/// The time map diverges logarithmically at the final-size endpoint, so the
/// upper bracket is walked geometrically toward the endpoint until it covers
/// the target; bisection then never evaluates outside the bracket, keeping
/// every quadrature call inside the integrand's domain.
fn invert_time_map(init: &InitialConditions, params: &SirParams, target: f64) -> Result<f64> {
    if target <= 0.0 {
        return Err(Error::invalid(format!("time target {target} must be positive")));
    }
    let tau_end = sir::tau_final(init, params)?;
    let time_at = |tau: f64| -> Result<f64> {
        quad::integrate(
            |u| 1.0 / sir::prevalence_at_tau(init, params, u),
            0.0,
            tau,
            quad::DEFAULT_ABS_TOL,
            quad::DEFAULT_MAX_SUBDIVISIONS,
        )
    };
    let mut gap = 0.25 * tau_end;
    let mut hi = tau_end - gap;
    let mut t_hi = time_at(hi)?;
    while t_hi < target {
        gap *= 0.25;
        if gap < 1e-15 * tau_end {
            return Err(Error::RootBracket(format!(
                "time target {target} unreachable before the final-size endpoint"
            )));
        }
        hi = tau_end - gap;
        t_hi = time_at(hi)?;
    }
    let (mut lo, mut t_lo) = (0.0, 0.0);
    // Bisection: predictable cost and no evaluations near the singularity.
    for _ in 0..200 {
        if hi - lo <= 1e-13 * tau_end.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let t_mid = time_at(mid)?;
        if t_mid < target {
            lo = mid;
            t_lo = t_mid;
        } else {
            hi = mid;
            t_hi = t_mid;
        }
    }
    // Linear pick inside the final bracket.
    let w = if t_hi > t_lo { (target - t_lo) / (t_hi - t_lo) } else { 0.5 };
    Ok(lo + w.clamp(0.0, 1.0) * (hi - lo))
}

/// Incidence rate `beta * s(tau) * i(tau)` without domain checks (the raw
/// prevalence form goes negative past the final size, keeping the residual
/// smooth for the outer solver).
fn incidence_rate_raw(init: &InitialConditions, params: &SirParams, tau: f64) -> f64 {
    let s = init.s0 * (-params.beta * tau).exp();
    params.beta * s * sir::prevalence_at_tau(init, params, tau)
}

/// Weekly incidence peak of a full simulation, located by fitting a parabola
/// through the three weekly values around the argmax. Returns
/// `(piv_hat, pit_hat)`. Avoids trajectory allocation: only weekly samples
/// are retained.
fn full_ode_weekly_peak(
    init: &InitialConditions,
    params: &SirParams,
    weeks: usize,
    dt: f64,
) -> (f64, f64) {
    let steps_per_week = (1.0 / dt).round() as usize;
    let mut weekly = Vec::with_capacity(weeks + 1);
    let mut state = init.state();
    weekly.push(params.beta * state.s * state.i);
    for _ in 1..=weeks {
        weekly.push(params.beta * state.s * state.i);
        for _ in 0..steps_per_week {
            state = sir::rk4_step(state, params, dt);
        }
    }
    let mut w_max = 1usize;
    for w in 2..weekly.len() {
        if weekly[w] > weekly[w_max] {
            w_max = w;
        }
    }
    if w_max == 0 || w_max + 1 >= weekly.len() {
        return (weekly[w_max], w_max as f64);
    }
    let (ym, y0, yp) = (weekly[w_max - 1], weekly[w_max], weekly[w_max + 1]);
    let denom = ym - 2.0 * y0 + yp;
    if denom.abs() < 1e-300 {
        return (y0, w_max as f64);
    }
    let delta = (0.5 * (ym - yp) / denom).clamp(-1.0, 1.0);
    let piv_hat = y0 - 0.25 * (ym - yp) * delta;
    (piv_hat, w_max as f64 + delta)
}

const FULL_ODE_DT: f64 = 1e-2;
const FULL_ODE_HORIZON_WEEKS: usize = 40;

/// Residual vector of the two-equation system for one candidate.
fn residuals(
    method: InverseMethod,
    init: &InitialConditions,
    params: &SirParams,
    piv: f64,
    pit: f64,
) -> Result<(f64, f64)> {
    let (r1, r2) = match method {
        InverseMethod::FullOde => {
            let (piv_hat, pit_hat) =
                full_ode_weekly_peak(init, params, FULL_ODE_HORIZON_WEEKS, FULL_ODE_DT);
            // The two residuals live on incomparable scales (a fraction vs a
            // week count three orders of magnitude larger); normalizing by
            // the targets keeps the line search from starving the small
            // coordinate. Row scaling leaves the Newton direction and the
            // root set unchanged.
            ((piv_hat - piv) / piv, (pit_hat - pit) / pit)
        }
        _ => {
            let tau = method_tau(method, init, params, pit)?;
            let r1 = incidence_rate_raw(init, params, tau) - piv;
            let r2 = incidence_condition(init, params, tau);
            (r1, r2)
        }
    };
    if !r1.is_finite() || !r2.is_finite() {
        return Err(Error::invalid("residuals non-finite"));
    }
    Ok((r1, r2))
}

const LN_RATE_LO: f64 = -6.907_755_278_982_137; // ln(1e-3)
const LN_RATE_HI: f64 = 3.912_023_005_428_146; // ln(50)
const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: u32 = 200;

struct SolveOutcome {
    beta: f64,
    gamma: f64,
    norm: f64,
    best_r: (f64, f64),
}

/// Damped Newton iteration in `(ln beta, ln gamma)` with a forward-difference
/// Jacobian and backtracking line search on the squared residual norm.
fn newton_from<F>(x0: (f64, f64), eval: &F, iters: &mut u32) -> Option<SolveOutcome>
where
    F: Fn(f64, f64) -> Result<(f64, f64)>,
{
    let clamp = |v: f64| v.clamp(LN_RATE_LO, LN_RATE_HI);
    let mut x = (clamp(x0.0), clamp(x0.1));
    let mut f = eval(x.0.exp(), x.1.exp()).ok()?;
    let norm2 = |r: (f64, f64)| r.0 * r.0 + r.1 * r.1;
    let mut n2 = norm2(f);
    for _ in 0..NEWTON_MAX_ITERS {
        *iters += 1;
        if n2.sqrt() <= NEWTON_TOL {
            return Some(SolveOutcome {
                beta: x.0.exp(),
                gamma: x.1.exp(),
                norm: n2.sqrt(),
                best_r: f,
            });
        }
        // Forward-difference Jacobian in log space.
        let h0 = 1e-6 * x.0.abs().max(1.0);
        let h1 = 1e-6 * x.1.abs().max(1.0);
        let f0 = eval((x.0 + h0).exp(), x.1.exp()).ok()?;
        let f1 = eval(x.0.exp(), (x.1 + h1).exp()).ok()?;
        let j = [
            [(f0.0 - f.0) / h0, (f1.0 - f.0) / h1],
            [(f0.1 - f.1) / h0, (f1.1 - f.1) / h1],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-280 || !det.is_finite() {
            break;
        }
        let dx = (
            -(j[1][1] * f.0 - j[0][1] * f.1) / det,
            -(-j[1][0] * f.0 + j[0][0] * f.1) / det,
        );
        // Backtracking line search.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..14 {
            let cand = (clamp(x.0 + t * dx.0), clamp(x.1 + t * dx.1));
            if let Ok(fc) = eval(cand.0.exp(), cand.1.exp()) {
                let c2 = norm2(fc);
                if c2.is_finite() && c2 < n2 * (1.0 - 1e-4 * t) {
                    x = cand;
                    f = fc;
                    n2 = c2;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if n2.sqrt() <= NEWTON_TOL {
        Some(SolveOutcome { beta: x.0.exp(), gamma: x.1.exp(), norm: n2.sqrt(), best_r: f })
    } else {
        Some(SolveOutcome {
            beta: x.0.exp(),
            gamma: x.1.exp(),
            norm: f64::INFINITY.min(n2.sqrt()),
            best_r: f,
        })
    }
}

/// Derivative-free Nelder–Mead descent on the squared residual norm, used
/// when every Newton start stalls.
fn nelder_mead<F>(x0: (f64, f64), eval: &F, iters: &mut u32) -> Option<SolveOutcome>
where
    F: Fn(f64, f64) -> Result<(f64, f64)>,
{
    let clamp = |v: (f64, f64)| (v.0.clamp(LN_RATE_LO, LN_RATE_HI), v.1.clamp(LN_RATE_LO, LN_RATE_HI));
    let g = |v: (f64, f64)| -> f64 {
        match eval(v.0.exp(), v.1.exp()) {
            Ok(r) if r.0.is_finite() && r.1.is_finite() => r.0 * r.0 + r.1 * r.1,
            _ => f64::INFINITY,
        }
    };
    let mut simplex = vec![
        clamp(x0),
        clamp((x0.0 + 0.1, x0.1)),
        clamp((x0.0, x0.1 + 0.1)),
    ];
    let mut values: Vec<f64> = simplex.iter().map(|&v| g(v)).collect();
    for _ in 0..600 {
        *iters += 1;
        // Order ascending by value.
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        simplex = vec![simplex[idx[0]], simplex[idx[1]], simplex[idx[2]]];
        values = vec![values[idx[0]], values[idx[1]], values[idx[2]]];
        if values[0].sqrt() <= NEWTON_TOL || (values[2] - values[0]).abs() < 1e-32 {
            break;
        }
        let centroid = (
            0.5 * (simplex[0].0 + simplex[1].0),
            0.5 * (simplex[0].1 + simplex[1].1),
        );
        let reflect = clamp((
            centroid.0 + (centroid.0 - simplex[2].0),
            centroid.1 + (centroid.1 - simplex[2].1),
        ));
        let gr = g(reflect);
        if gr < values[0] {
            let expand = clamp((
                centroid.0 + 2.0 * (centroid.0 - simplex[2].0),
                centroid.1 + 2.0 * (centroid.1 - simplex[2].1),
            ));
            let ge = g(expand);
            if ge < gr {
                simplex[2] = expand;
                values[2] = ge;
            } else {
                simplex[2] = reflect;
                values[2] = gr;
            }
        } else if gr < values[1] {
            simplex[2] = reflect;
            values[2] = gr;
        } else {
            let contract = clamp((
                centroid.0 + 0.5 * (simplex[2].0 - centroid.0),
                centroid.1 + 0.5 * (simplex[2].1 - centroid.1),
            ));
            let gc = g(contract);
            if gc < values[2] {
                simplex[2] = contract;
                values[2] = gc;
            } else {
                for k in 1..3 {
                    simplex[k] = clamp((
                        simplex[0].0 + 0.5 * (simplex[k].0 - simplex[0].0),
                        simplex[0].1 + 0.5 * (simplex[k].1 - simplex[0].1),
                    ));
                    values[k] = g(simplex[k]);
                }
            }
        }
    }
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))?
        .0;
    if !values[best].is_finite() {
        return None;
    }
    let x = simplex[best];
    let r = eval(x.0.exp(), x.1.exp()).ok()?;
    Some(SolveOutcome {
        beta: x.0.exp(),
        gamma: x.1.exp(),
        norm: values[best].sqrt(),
        best_r: r,
    })
}

/// Multi-start seeds expressed as `rho * s0` targets; each is converted into
/// a `(beta, gamma)` guess by matching the prevalence-peak timescale.
const SEED_RHO_S0: [f64; 5] = [1.1, 1.5, 2.0, 2.8, 4.0];

fn seed_candidates(
    init: &InitialConditions,
    pit: f64,
    warm: Option<SirParams>,
) -> Vec<(f64, f64)> {
    let mut seeds = Vec::with_capacity(6);
    if let Some(p) = warm {
        seeds.push((p.beta.ln(), p.gamma.ln()));
    }
    for rs in SEED_RHO_S0 {
        let rho = rs / init.s0;
        if let Ok(bt) = scaled_peak_time(rho, init) {
            let beta = (bt / pit).max(1e-3);
            seeds.push((beta.ln(), (beta / rho).ln()));
        }
    }
    seeds
}

/// Classify a solver failure: scan a coarse parameter grid; if nothing comes
/// near the target peak the request is infeasible for this init, otherwise
/// it is a plain convergence failure.
fn classify_failure(
    init: &InitialConditions,
    piv: f64,
    pit: f64,
    best: Option<(f64, f64)>,
) -> Error {
    let mut nearest = f64::INFINITY;
    for bi in 0..30 {
        for gi in 0..30 {
            let beta = (LN_RATE_LO + (LN_RATE_HI - LN_RATE_LO) * bi as f64 / 29.0).exp();
            let gamma = (LN_RATE_LO + (LN_RATE_HI - LN_RATE_LO) * gi as f64 / 29.0).exp();
            let Ok(params) = SirParams::new(beta, gamma) else { continue };
            let Ok(pk) = crate::peak::peak_incidence(init, &params) else { continue };
            if pk.boundary {
                continue;
            }
            let d = ((pk.piv - piv) / piv.max(1e-12)).abs() + ((pk.pit - pit) / 35.0).abs();
            nearest = nearest.min(d);
        }
    }
    if nearest > 0.1 {
        Error::Infeasible(format!(
            "no epidemic curve with this initial state attains a peak near \
             (piv = {piv}, pit = {pit}); nearest relative distance {nearest:.3}"
        ))
    } else {
        let (rp, rt) = best.unwrap_or((f64::NAN, f64::NAN));
        Error::NoConvergence { residual_piv: rp, residual_pit: rt }
    }
}

/// Recover `(beta, gamma)` from an incidence peak using the given method and
/// default options.
pub fn incidence_to_params(
    peak: &PeakIncidence,
    init: &InitialConditions,
    method: InverseMethod,
) -> Result<InverseResult> {
    incidence_to_params_with(peak, init, method, InverseOptions::default())
}

/// Recover `(beta, gamma)` from an incidence peak.
///
/// Runs damped Newton from each multi-start seed, collects converged
/// solutions, and returns the one with the smallest residual norm (ties
/// broken by smaller `beta`). Falls back to Nelder–Mead from the best stalled
/// point if no start converges. A converged warm start short-circuits the
/// remaining seeds.
pub fn incidence_to_params_with(
    peak: &PeakIncidence,
    init: &InitialConditions,
    method: InverseMethod,
    opts: InverseOptions,
) -> Result<InverseResult> {
    let begin = Instant::now();
    let (piv, pit) = (peak.piv, peak.pit);
    if !piv.is_finite() || piv <= 0.0 || piv >= 1.0 {
        return Err(Error::Infeasible(format!(
            "peak incidence value {piv} outside the feasible interval (0, 1)"
        )));
    }
    if !pit.is_finite() || pit <= 1.0 || pit >= 35.0 {
        return Err(Error::Infeasible(format!(
            "peak incidence time {pit} outside the feasible window (1, 35) weeks"
        )));
    }

    let eval = |beta: f64, gamma: f64| -> Result<(f64, f64)> {
        let params = SirParams::new(beta, gamma)?;
        residuals(method, init, &params, piv, pit)
    };

    let mut iterations = 0u32;
    let mut converged: Vec<SolveOutcome> = Vec::new();
    let mut best_stalled: Option<SolveOutcome> = None;
    let warm_present = opts.warm_start.is_some();
    for (k, seed) in seed_candidates(init, pit, opts.warm_start).into_iter().enumerate() {
        if let Some(out) = newton_from(seed, &eval, &mut iterations) {
            if out.norm <= NEWTON_TOL {
                let warm_hit = warm_present && k == 0;
                converged.push(out);
                if warm_hit {
                    break;
                }
            } else {
                let better = best_stalled.as_ref().map_or(true, |b| out.norm < b.norm);
                if better {
                    best_stalled = Some(out);
                }
            }
        }
    }
    if converged.is_empty() {
        let nm_start = best_stalled
            .as_ref()
            .map(|b| (b.beta.ln(), b.gamma.ln()))
            .unwrap_or((0.0, -1.0));
        if let Some(out) = nelder_mead(nm_start, &eval, &mut iterations) {
            if out.norm <= NEWTON_TOL {
                converged.push(out);
            } else {
                let better = best_stalled.as_ref().map_or(true, |b| out.norm < b.norm);
                if better {
                    best_stalled = Some(out);
                }
            }
        }
    }
    let Some(sol) = converged.into_iter().min_by(|a, b| {
        (a.norm, a.beta)
            .partial_cmp(&(b.norm, b.beta))
            .unwrap_or(std::cmp::Ordering::Equal)
    }) else {
        return Err(classify_failure(init, piv, pit, best_stalled.map(|b| b.best_r)));
    };

    let params = SirParams::new(sol.beta, sol.gamma)?;
    let (residual_piv, residual_pit) = verified_residuals(method, init, &params, piv, pit)?;
    Ok(InverseResult {
        params,
        residual_piv,
        residual_pit,
        iterations,
        wall_time: begin.elapsed().as_secs_f64(),
    })
}

/// Recompute both residuals at the returned solution, measuring the time
/// equation with the exact time map.
fn verified_residuals(
    method: InverseMethod,
    init: &InitialConditions,
    params: &SirParams,
    piv: f64,
    pit: f64,
) -> Result<(f64, f64)> {
    match method {
        InverseMethod::FullOde => {
            let (piv_hat, pit_hat) =
                full_ode_weekly_peak(init, params, FULL_ODE_HORIZON_WEEKS, FULL_ODE_DT);
            Ok((piv_hat - piv, pit_hat - pit))
        }
        _ => {
            let tau = method_tau(method, init, params, pit)?;
            let r_piv = incidence_rate_raw(init, params, tau) - piv;
            let target = match method {
                InverseMethod::ComputeIntegral => pit - METHOD_TIME_LAG,
                _ => pit,
            };
            let tau_end = sir::tau_final(init, params)?;
            let safe_tau = tau.clamp(0.0, tau_end * (1.0 - 1e-9));
            let r_pit = sir::time_of_tau(init, params, safe_tau)? - target;
            Ok((r_piv, r_pit))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::peak::{peak_incidence, peak_prevalence};
    use crate::sir::simulate;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const FIG1_LEFT: (f64, f64) = (1.137, 0.446);

    fn default_init() -> InitialConditions {
        InitialConditions::new(0.9, 0.05, 0.05).unwrap()
    }

    /// Dense re-simulation: weekly incidence peak of the recovered curve.
    fn resim_weekly_peak(init: &InitialConditions, params: &SirParams) -> (f64, u32) {
        let traj = simulate(init, params, 40.0, 1e-2).unwrap();
        traj.weekly_incidence_peak().unwrap()
    }

    #[test]
    fn test_prevalence_round_trip_fig1() {
        let init = default_init();
        let truth = SirParams::new(FIG1_LEFT.0, FIG1_LEFT.1).unwrap();
        let pk = peak_prevalence(&init, &truth).unwrap();
        let rec = prevalence_to_params(&pk, &init).unwrap();
        assert_relative_eq!(rec.beta, truth.beta, max_relative = 1e-6);
        assert_relative_eq!(rec.gamma, truth.gamma, max_relative = 1e-6);
    }

    #[test]
    fn test_prevalence_round_trip_random() {
        let init = default_init();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let rho_s0: f64 = rng.gen_range(1.05..4.0);
            let gamma: f64 = rng.gen_range(0.15..1.5);
            let truth = SirParams::new(gamma * rho_s0 / init.s0, gamma).unwrap();
            let pk = peak_prevalence(&init, &truth).unwrap();
            let rec = prevalence_to_params(&pk, &init).unwrap();
            assert_relative_eq!(rec.beta, truth.beta, max_relative = 1e-5);
            assert_relative_eq!(rec.gamma, truth.gamma, max_relative = 1e-5);
        }
    }

    #[test]
    fn test_prevalence_boundary_continuity() {
        // ppv just above i0 puts rho * s0 just above 1.
        let init = default_init();
        let pk = PeakPrevalence::observed(init.i0 + 1e-7, 10.0);
        let rec = prevalence_to_params(&pk, &init).unwrap();
        let rs = rec.rho() * init.s0;
        assert!(rs > 1.0 && rs < 1.01, "rho * s0 = {rs} should approach 1+");
    }

    #[test]
    fn test_prevalence_rejects_bad_inputs() {
        let init = default_init();
        assert!(prevalence_to_params(&PeakPrevalence::observed(0.04, 10.0), &init).is_err());
        assert!(prevalence_to_params(&PeakPrevalence::observed(0.2, 0.0), &init).is_err());
        assert!(prevalence_to_params(&PeakPrevalence::observed(1.2, 10.0), &init).is_err());
        assert!(prevalence_to_params(&PeakPrevalence::observed(0.97, 10.0), &init).is_err());
    }

    #[test]
    fn test_incidence_rejects_infeasible_inputs() {
        let init = default_init();
        let zero = PeakIncidence::observed(0.0, 10.0);
        assert!(matches!(
            incidence_to_params(&zero, &init, InverseMethod::ComputeIntegral),
            Err(Error::Infeasible(_))
        ));
        let late = PeakIncidence::observed(0.1, 36.0);
        assert!(matches!(
            incidence_to_params(&late, &init, InverseMethod::ComputeIntegral),
            Err(Error::Infeasible(_))
        ));
        let early = PeakIncidence::observed(0.1, 0.5);
        assert!(incidence_to_params(&early, &init, InverseMethod::TaylorApprox).is_err());
    }

    #[test]
    fn test_compute_integral_round_trip() {
        let init = default_init();
        let truth = SirParams::new(FIG1_LEFT.0, FIG1_LEFT.1).unwrap();
        let (true_piv, true_week) = resim_weekly_peak(&init, &truth);
        let pk = PeakIncidence::observed(true_piv, true_week as f64);
        let res = incidence_to_params(&pk, &init, InverseMethod::ComputeIntegral).unwrap();
        let (piv_hat, week_hat) = resim_weekly_peak(&init, &res.params);
        assert_eq!(week_hat, true_week, "re-simulated peak week must match");
        assert!(
            (piv_hat - true_piv).abs() < 1e-3,
            "piv error {} too large",
            piv_hat - true_piv
        );
        assert!(res.residual_piv.abs() < 1e-9);
        assert!(res.residual_pit.abs() < 1e-6);
    }

    #[test]
    fn test_full_ode_round_trip() {
        let init = default_init();
        let truth = SirParams::new(FIG1_LEFT.0, FIG1_LEFT.1).unwrap();
        let (true_piv, true_week) = resim_weekly_peak(&init, &truth);
        let pk = PeakIncidence::observed(true_piv, true_week as f64);
        let res = incidence_to_params(&pk, &init, InverseMethod::FullOde).unwrap();
        let (piv_hat, week_hat) = resim_weekly_peak(&init, &res.params);
        assert_eq!(week_hat, true_week);
        assert!((piv_hat - true_piv).abs() < 2e-3);
    }

    #[test]
    fn test_single_ode_one_week_lag() {
        // Integrating to the literal peak time lands the rate condition one
        // report week late, so the recovered curve peaks one week after the
        // target.
        let init = default_init();
        let truth = SirParams::new(FIG1_LEFT.0, FIG1_LEFT.1).unwrap();
        let (true_piv, true_week) = resim_weekly_peak(&init, &truth);
        let pk = PeakIncidence::observed(true_piv, true_week as f64);
        let res = incidence_to_params(&pk, &init, InverseMethod::SingleOde).unwrap();
        let (_, week_hat) = resim_weekly_peak(&init, &res.params);
        assert!(
            week_hat as i64 - true_week as i64 >= 1,
            "single-ODE week {week_hat} should trail target {true_week}"
        );
    }

    #[test]
    fn test_taylor_converges_with_bias() {
        let init = default_init();
        let truth = SirParams::new(FIG1_LEFT.0, FIG1_LEFT.1).unwrap();
        let (true_piv, true_week) = resim_weekly_peak(&init, &truth);
        let pk = PeakIncidence::observed(true_piv, true_week as f64);
        let res = incidence_to_params(&pk, &init, InverseMethod::TaylorApprox).unwrap();
        let (piv_hat, week_hat) = resim_weekly_peak(&init, &res.params);
        // The tanh closed form is a rough time map: expect a nontrivial peak
        // shift but a usable value match (the solver still enforces the rate
        // equations at its own tau).
        assert!((piv_hat - true_piv).abs() < 5e-2);
        assert!(
            week_hat != true_week,
            "taylor recovered the exact week; expected a biased fit"
        );
    }

    #[test]
    fn test_eq_system_internal_consistency() {
        // At every method's solution, the rate-maximum condition holds at
        // the method's own tau within 1e-8.
        let init = default_init();
        let truth = SirParams::new(FIG1_LEFT.0, FIG1_LEFT.1).unwrap();
        let (true_piv, true_week) = resim_weekly_peak(&init, &truth);
        let pk = PeakIncidence::observed(true_piv, true_week as f64);
        for method in [
            InverseMethod::ComputeIntegral,
            InverseMethod::TaylorApprox,
            InverseMethod::SingleOde,
        ] {
            let res = incidence_to_params(&pk, &init, method).unwrap();
            let tau = method_tau(method, &init, &res.params, pk.pit).unwrap();
            let resid = incidence_condition(&init, &res.params, tau);
            assert!(
                resid.abs() < 1e-8,
                "{method}: condition residual {resid} at tau {tau}"
            );
        }
        // FullOde has no tau shortcut; its condition point is the forward
        // map's root, which satisfies the condition by construction.
        let res = incidence_to_params(&pk, &init, InverseMethod::FullOde).unwrap();
        let fwd = peak_incidence(&init, &res.params).unwrap();
        let resid = incidence_condition(&init, &res.params, fwd.tau_before_peak);
        assert!(resid.abs() < 1e-8);
    }

    #[test]
    fn test_inversion_deterministic() {
        let init = default_init();
        let truth = SirParams::new(0.9, 0.35).unwrap();
        let (piv, week) = resim_weekly_peak(&init, &truth);
        let pk = PeakIncidence::observed(piv, week as f64);
        let a = incidence_to_params(&pk, &init, InverseMethod::ComputeIntegral).unwrap();
        let b = incidence_to_params(&pk, &init, InverseMethod::ComputeIntegral).unwrap();
        assert_eq!(a.params.beta, b.params.beta);
        assert_eq!(a.params.gamma, b.params.gamma);
    }

    #[test]
    fn test_warm_start_short_circuits() {
        let init = default_init();
        let truth = SirParams::new(0.9, 0.35).unwrap();
        let (piv, week) = resim_weekly_peak(&init, &truth);
        let pk = PeakIncidence::observed(piv, week as f64);
        let cold = incidence_to_params(&pk, &init, InverseMethod::ComputeIntegral).unwrap();
        let warm = incidence_to_params_with(
            &pk,
            &init,
            InverseMethod::ComputeIntegral,
            InverseOptions { warm_start: Some(cold.params) },
        )
        .unwrap();
        assert_relative_eq!(warm.params.beta, cold.params.beta, max_relative = 1e-8);
        assert!(warm.iterations <= cold.iterations);
    }

    #[test]
    fn test_invert_time_map_matches_forward() {
        let init = default_init();
        let params = SirParams::new(FIG1_LEFT.0, FIG1_LEFT.1).unwrap();
        for target in [2.0, 6.0, 12.0, 20.0] {
            let tau = invert_time_map(&init, &params, target).unwrap();
            let t = sir::time_of_tau(&init, &params, tau).unwrap();
            assert_abs_diff_eq!(t, target, epsilon = 1e-8);
        }
    }

    #[test]
    #[ignore = "diagnostic: prints per-method accuracy/runtime on a central benchmark draw"]
    fn diag_mild_curve_landscape() {
        // Mirrors a central benchmark draw: broad curve peaking around week 18.
        let init = InitialConditions::new(0.9, 0.005, 0.095).unwrap();
        let prev = crate::peak::PeakPrevalence::observed(0.0144, 17.9);
        let truth = prevalence_to_params(&prev, &init).unwrap();
        let (true_piv, true_week) = resim_weekly_peak(&init, &truth);
        let pk = PeakIncidence::observed(true_piv, true_week as f64);
        println!("truth: beta={} gamma={} piv={true_piv} week={true_week}", truth.beta, truth.gamma);
        for method in InverseMethod::ALL {
            match incidence_to_params(&pk, &init, method) {
                Ok(res) => {
                    let (piv_hat, week_hat) = resim_weekly_peak(&init, &res.params);
                    println!(
                        "{:>18}: beta={:.6} gamma={:.6} piv_err={:+.3e} week_err={:+} r_piv={:+.2e} r_pit={:+.2e} iters={} time={:.4}s",
                        method.label(),
                        res.params.beta,
                        res.params.gamma,
                        piv_hat - true_piv,
                        week_hat as i64 - true_week as i64,
                        res.residual_piv,
                        res.residual_pit,
                        res.iterations,
                        res.wall_time,
                    );
                }
                Err(e) => println!("{:>18}: FAILED: {e}", method.label()),
            }
        }
    }

    #[test]
    #[ignore = "diagnostic: prints per-method accuracy/runtime on a reference case"]
    fn diag_method_landscape() {
        let init = default_init();
        let truth = SirParams::new(FIG1_LEFT.0, FIG1_LEFT.1).unwrap();
        let (true_piv, true_week) = resim_weekly_peak(&init, &truth);
        let pk = PeakIncidence::observed(true_piv, true_week as f64);
        println!("truth: beta={} gamma={} piv={true_piv} week={true_week}", truth.beta, truth.gamma);
        for method in InverseMethod::ALL {
            match incidence_to_params(&pk, &init, method) {
                Ok(res) => {
                    let (piv_hat, week_hat) = resim_weekly_peak(&init, &res.params);
                    println!(
                        "{:>18}: beta={:.6} gamma={:.6} piv_err={:+.3e} week_err={:+} r_piv={:+.2e} r_pit={:+.2e} iters={} time={:.4}s",
                        method.label(),
                        res.params.beta,
                        res.params.gamma,
                        piv_hat - true_piv,
                        week_hat as i64 - true_week as i64,
                        res.residual_piv,
                        res.residual_pit,
                        res.iterations,
                        res.wall_time,
                    );
                }
                Err(e) => println!("{:>18}: FAILED: {e}", method.label()),
            }
        }
    }
}
