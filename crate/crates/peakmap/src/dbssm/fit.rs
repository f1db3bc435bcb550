//! Posterior sampling by Metropolis-within-Gibbs.
//!
//! Each iteration updates, in order: the peak pair (joint random walk with
//! reflection at its box, rates recomputed through the inverse peak map), the
//! two concentration parameters (log-space random walks), the initial state
//! (simplex random walk, on a fixed period), and the weekly states (forward
//! sweep of single-site proposals drawn from the transition itself, so the
//! transition factor cancels in the acceptance ratio). Proposal scales adapt
//! toward a target acceptance rate during burn-in only; the post-burn-in
//! kernel is a fixed Metropolis-within-Gibbs scan.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use super::config::DbssmConfig;
use super::model::{ln_dirichlet_pdf, ln_gamma_pdf, obs_loglik, one_week_map, weekly_rate};
use super::prior::{map_to_params, sample_prior};
use super::samples::{
    AcceptanceRates, FitDiagnostics, LatentPath, PosteriorDraw, PosteriorSamples,
};
use crate::rng::stream_rng;
use crate::sir::{SirParams, SirState};
use crate::{Error, Result};

/// The initial-state site is updated on this iteration period; it is the
/// second-most expensive move (one inverse-map solve plus two normalizer
/// quadratures) and mixes fast, so every iteration would be wasted budget.
const THETA0_PERIOD: u64 = 5;
const ADAPT_WINDOW: u64 = 50;
const TARGET_ACCEPTANCE: f64 = 0.3;
/// Burn-in samples of the peak pair required before its empirical
/// covariance replaces the diagonal proposal shape.
const AM_MIN_SAMPLES: u64 = 100;
/// Random-walk proposal scaling 2.38²/d for a two-dimensional target.
const AM_SCALE: f64 = 2.8322;
/// Quantization of the inverse-map memo grid.
const CACHE_QUANTUM: f64 = 1e-6;
const RHAT_WARN: f64 = 1.1;

#[derive(Hash, PartialEq, Eq)]
struct CacheKey {
    piv: i64,
    pit: i64,
    s0: i64,
    i0: i64,
}

impl CacheKey {
    fn of(z: [f64; 2], theta0: &SirState) -> Self {
        let q = |x: f64| (x / CACHE_QUANTUM).round() as i64;
        CacheKey { piv: q(z[0]), pit: q(z[1]), s0: q(theta0.s), i0: q(theta0.i) }
    }
}

#[derive(Clone, Copy)]
struct Scales {
    /// Lower-triangular factor of the peak-pair proposal covariance. Starts
    /// diagonal; burn-in adaptation aligns it with the posterior's local
    /// correlation so steps travel along the ridge instead of across it.
    z_chol: [[f64; 2]; 2],
    /// Global multiplier on the peak-pair factor, driven by acceptance.
    z_mult: f64,
    lambda: f64,
    iota: f64,
    /// Proposal concentration for the initial-state site; larger means
    /// tighter moves.
    theta0: f64,
}

/// Running mean and covariance of the peak pair over burn-in draws.
#[derive(Default, Clone, Copy)]
struct ZStats {
    n: u64,
    mean: [f64; 2],
    c00: f64,
    c01: f64,
    c11: f64,
}

impl ZStats {
    fn push(&mut self, z: [f64; 2]) {
        self.n += 1;
        let w = 1.0 / self.n as f64;
        let d = [z[0] - self.mean[0], z[1] - self.mean[1]];
        self.mean[0] += d[0] * w;
        self.mean[1] += d[1] * w;
        let e = [z[0] - self.mean[0], z[1] - self.mean[1]];
        self.c00 += d[0] * e[0];
        self.c01 += d[0] * e[1];
        self.c11 += d[1] * e[1];
    }

    /// Sample covariance `(c00, c01, c11)` once enough draws accumulated.
    fn covariance(&self) -> Option<(f64, f64, f64)> {
        if self.n < AM_MIN_SAMPLES {
            return None;
        }
        let k = 1.0 / (self.n - 1) as f64;
        Some((self.c00 * k, self.c01 * k, self.c11 * k))
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    accepted: u64,
    attempted: u64,
}

impl Tally {
    fn hit(&mut self, accepted: bool) {
        self.attempted += 1;
        self.accepted += u64::from(accepted);
    }

    fn rate(&self) -> f64 {
        if self.attempted == 0 {
            return f64::NAN;
        }
        self.accepted as f64 / self.attempted as f64
    }
}

#[derive(Default, Clone, Copy)]
struct Counters {
    z: Tally,
    lambda: Tally,
    iota: Tally,
    theta0: Tally,
    theta: Tally,
}

/// Fold a real into `[lo, hi]` by reflection, preserving proposal symmetry.
fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    if w <= 0.0 {
        return lo;
    }
    let mut t = (x - lo) % (2.0 * w);
    if t < 0.0 {
        t += 2.0 * w;
    }
    lo + if t <= w { t } else { 2.0 * w - t }
}

fn ln_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // (0,1] to keep the log finite.
    (1.0 - rng.gen::<f64>()).ln()
}

struct Chain<'a> {
    cfg: &'a DbssmConfig,
    y: &'a [f64],
    chain_index: u32,
    rng: ChaCha8Rng,
    theta: Vec<SirState>,
    z: [f64; 2],
    params: SirParams,
    lambda: f64,
    iota: f64,
    /// log of the peak-pair prior's box mass at the current initial state.
    ln_box_mass: f64,
    /// Running transition/observation log-likelihood totals for the current
    /// state, so each block only evaluates its proposal side. Every update
    /// stores a freshly summed value — never an increment — so the cache
    /// cannot drift from what a recompute would give.
    cur_trans_ll: f64,
    cur_obs_ll: f64,
    cache: HashMap<CacheKey, Option<(f64, f64)>>,
    scales: Scales,
    z_stats: ZStats,
}

impl<'a> Chain<'a> {
    fn init(cfg: &'a DbssmConfig, y: &'a [f64], chain_index: u32, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, u64::from(chain_index));
        // First chain anchors at the moment-matched point; the rest start
        // from it dispersed at roughly posterior scale. Either falls back
        // to an ordinary prior draw if its point is infeasible for the
        // inverse map.
        let draw = if chain_index == 0 {
            moment_matched_start(cfg).or_else(|_| sample_prior(cfg, &mut rng))?
        } else {
            jittered_start(cfg, &mut rng).or_else(|_| sample_prior(cfg, &mut rng))?
        };

        let t_prime = y.len();
        let mut theta = Vec::with_capacity(t_prime + 1);
        theta.push(draw.theta0);
        for t in 1..=t_prime {
            let mean = one_week_map(&theta[t - 1], &draw.params);
            let alpha = [draw.iota * mean.s, draw.iota * mean.i, draw.iota * mean.r];
            // Exact-zero components (possible when a mean compartment has
            // burned out and its Dirichlet weight underflows) would zero
            // the path density, so such draws fall back to the mean.
            let state = match Dirichlet::new(&alpha) {
                Ok(dir) => {
                    let x = dir.sample(&mut rng);
                    if x.iter().all(|&v| v > 0.0) {
                        SirState::new(x[0], x[1], x[2]).unwrap_or(mean)
                    } else {
                        mean
                    }
                }
                Err(_) => mean,
            };
            theta.push(state);
        }

        let ln_box_mass = cfg.z_prior.truncated(draw.theta0.i)?.box_mass()?.ln();
        let sigma = cfg.z_prior.sigma;
        let scales = Scales {
            z_chol: [[0.3 * sigma[0][0].sqrt(), 0.0], [0.0, 0.3 * sigma[1][1].sqrt()]],
            z_mult: 1.0,
            lambda: 0.4,
            iota: 0.4,
            theta0: 4.0 * cfg.init_prior.iter().sum::<f64>(),
        };
        let mut chain = Chain {
            cfg,
            y,
            chain_index,
            rng,
            theta,
            z: draw.z,
            params: draw.params,
            lambda: draw.lambda,
            iota: draw.iota,
            ln_box_mass,
            cur_trans_ll: 0.0,
            cur_obs_ll: 0.0,
            cache: HashMap::new(),
            scales,
            z_stats: ZStats::default(),
        };
        chain.cur_trans_ll = chain.trans_total(&chain.theta, &chain.params, chain.iota);
        chain.cur_obs_ll = chain.obs_total(&chain.theta, &chain.params, chain.lambda);
        let lp = chain.full_log_posterior();
        if !lp.is_finite() {
            return Err(Error::McmcInit(format!(
                "chain {chain_index} starts at log posterior {lp} \
                 (transitions {:.3e}, observations {:.3e}, box mass ln {:.3e}, \
                 beta {:.3}, gamma {:.3}, lambda {:.3e}, iota {:.3e})",
                chain.cur_trans_ll,
                chain.cur_obs_ll,
                chain.ln_box_mass,
                chain.params.beta,
                chain.params.gamma,
                chain.lambda,
                chain.iota,
            )));
        }
        Ok(chain)
    }

    /// Inverse peak map with the per-chain memo grid and a warm start from
    /// the chain's current rates. Failures are memoized too: an infeasible
    /// grid cell stays infeasible.
    fn rates_for(&mut self, z: [f64; 2], theta0: &SirState) -> Option<SirParams> {
        let key = CacheKey::of(z, theta0);
        if let Some(hit) = self.cache.get(&key) {
            return hit.and_then(|(b, g)| SirParams::new(b, g).ok());
        }
        let solved = map_to_params(
            z,
            theta0,
            self.cfg.z_interpretation,
            self.cfg.inverse_method,
            Some(self.params),
        )
        .ok();
        self.cache.insert(key, solved.as_ref().map(|p| (p.beta, p.gamma)));
        solved
    }

    /// Total transition log density over weeks `1..=t'` of the given path
    /// (`theta[0]` is the initial state), so proposals can be scored on a
    /// candidate path without mutating the chain.
    fn trans_total(&self, theta: &[SirState], params: &SirParams, iota: f64) -> f64 {
        let mut ll = 0.0;
        for t in 1..theta.len() {
            let cur = &theta[t];
            let mean = one_week_map(&theta[t - 1], params);
            let alpha = [iota * mean.s, iota * mean.i, iota * mean.r];
            if alpha.iter().any(|&a| !a.is_finite() || a <= 0.0) {
                return f64::NEG_INFINITY;
            }
            ll += ln_dirichlet_pdf([cur.s, cur.i, cur.r], alpha);
            if ll == f64::NEG_INFINITY {
                return ll;
            }
        }
        ll
    }

    /// Total observation log density over weeks `1..=t'`; week `t` reads its
    /// rate off the week `t−1` state.
    fn obs_total(&self, theta: &[SirState], params: &SirParams, lambda: f64) -> f64 {
        let mut ll = 0.0;
        for (t, obs) in self.y.iter().enumerate() {
            ll += obs_loglik(*obs, weekly_rate(&theta[t], params), lambda)
                .unwrap_or(f64::NEG_INFINITY);
            if ll == f64::NEG_INFINITY {
                return ll;
            }
        }
        ll
    }

    /// Translate every week of the path by the difference between the
    /// noise-free weekly curve grown from `(init, params)` and the one
    /// grown from the current initial state and rates. The translation has
    /// unit Jacobian and the reversed step undoes it exactly, so it is a
    /// valid deterministic companion to a rate or initial-state change; it
    /// keeps each week's deviation from its curve fixed. `None` when a
    /// translated state leaves the open simplex.
    fn dragged_path(&self, init: SirState, params: &SirParams) -> Option<Vec<SirState>> {
        let mut out = Vec::with_capacity(self.theta.len());
        out.push(init);
        let (mut g_cur, mut g_new) = (self.theta[0], init);
        for t in 1..self.theta.len() {
            g_cur = one_week_map(&g_cur, &self.params);
            g_new = one_week_map(&g_new, params);
            let s = self.theta[t].s + g_new.s - g_cur.s;
            let i = self.theta[t].i + g_new.i - g_cur.i;
            let r = self.theta[t].r + g_new.r - g_cur.r;
            if !(s > 0.0 && i > 0.0 && r > 0.0) {
                return None;
            }
            out.push(SirState::new(s, i, r).ok()?);
        }
        Some(out)
    }

    fn z_logprior_unnorm(&self, z: [f64; 2], theta0: &SirState) -> f64 {
        match self.cfg.z_prior.truncated(theta0.i) {
            Ok(dist) => dist.logpdf_unnorm(z),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn full_log_posterior(&self) -> f64 {
        let theta0 = self.theta[0];
        ln_gamma_pdf(self.lambda, self.cfg.lambda_prior.shape, self.cfg.lambda_prior.rate)
            + ln_gamma_pdf(self.iota, self.cfg.iota_prior.shape, self.cfg.iota_prior.rate)
            + ln_dirichlet_pdf([theta0.s, theta0.i, theta0.r], self.cfg.init_prior)
            + self.z_logprior_unnorm(self.z, &theta0)
            - self.ln_box_mass
            + self.cur_trans_ll
            + self.cur_obs_ll
    }

    /// Peak-pair move: two-stage acceptance, with the latent path dragged
    /// along the shift in the noise-free curve. Without the drag every pair
    /// step is vetoed by the transition density of the existing path, so
    /// the walk crawls; with it, steps are judged on data fit and prior.
    /// The prior-only screen runs before the inverse-map solve, so
    /// proposals the prior would reject never pay for rates; with the full
    /// first-stage ratio applied there, the surviving second stage is
    /// exactly the likelihood ratio.
    fn update_z(&mut self) -> bool {
        let theta0 = self.theta[0];
        let lo = [self.cfg.z_prior.lo[0].max(theta0.i), self.cfg.z_prior.lo[1]];
        let hi = self.cfg.z_prior.hi;
        let (l, m) = (self.scales.z_chol, self.scales.z_mult);
        let e0: f64 = self.rng.sample(StandardNormal);
        let e1: f64 = self.rng.sample(StandardNormal);
        // The correlated Gaussian step is even in its argument, so the
        // reflected proposal stays symmetric.
        let prop = [
            reflect(self.z[0] + m * l[0][0] * e0, lo[0], hi[0]),
            reflect(self.z[1] + m * (l[1][0] * e0 + l[1][1] * e1), lo[1], hi[1]),
        ];
        let screen =
            self.z_logprior_unnorm(prop, &theta0) - self.z_logprior_unnorm(self.z, &theta0);
        if ln_uniform(&mut self.rng) >= screen {
            return false;
        }
        let Some(params) = self.rates_for(prop, &theta0) else {
            return false;
        };
        let Some(dragged) = self.dragged_path(theta0, &params) else {
            return false;
        };
        let trans = self.trans_total(&dragged, &params, self.iota);
        let obs = self.obs_total(&dragged, &params, self.lambda);
        if ln_uniform(&mut self.rng) < trans + obs - self.cur_trans_ll - self.cur_obs_ll {
            self.z = prop;
            self.params = params;
            self.theta = dragged;
            self.cur_trans_ll = trans;
            self.cur_obs_ll = obs;
            true
        } else {
            false
        }
    }

    fn update_lambda(&mut self) -> bool {
        let step = Normal::new(0.0, self.scales.lambda).expect("valid scale");
        let prop = self.lambda * step.sample(&mut self.rng).exp();
        let prior = &self.cfg.lambda_prior;
        let obs = self.obs_total(&self.theta, &self.params, prop);
        let delta = ln_gamma_pdf(prop, prior.shape, prior.rate)
            - ln_gamma_pdf(self.lambda, prior.shape, prior.rate)
            + obs
            - self.cur_obs_ll
            + prop.ln()
            - self.lambda.ln();
        if ln_uniform(&mut self.rng) < delta {
            self.lambda = prop;
            self.cur_obs_ll = obs;
            true
        } else {
            false
        }
    }

    fn update_iota(&mut self) -> bool {
        let step = Normal::new(0.0, self.scales.iota).expect("valid scale");
        let prop = self.iota * step.sample(&mut self.rng).exp();
        let prior = &self.cfg.iota_prior;
        let trans = self.trans_total(&self.theta, &self.params, prop);
        let delta = ln_gamma_pdf(prop, prior.shape, prior.rate)
            - ln_gamma_pdf(self.iota, prior.shape, prior.rate)
            + trans
            - self.cur_trans_ll
            + prop.ln()
            - self.iota.ln();
        if ln_uniform(&mut self.rng) < delta {
            self.iota = prop;
            self.cur_trans_ll = trans;
            true
        } else {
            false
        }
    }

    /// Initial-state move, two-stage like the peak-pair move and with the
    /// same path drag: priors, proposal asymmetry, and the box-mass
    /// normalizer screen first; the inverse-map solve, the drag, and the
    /// likelihood only after survival.
    fn update_theta0(&mut self) -> bool {
        let cur = self.theta[0];
        let kappa = self.scales.theta0;
        let alpha_fwd = [kappa * cur.s, kappa * cur.i, kappa * cur.r];
        let Ok(dir) = Dirichlet::new(&alpha_fwd) else {
            return false;
        };
        let x = dir.sample(&mut self.rng);
        let (Ok(prop), true) = (SirState::new(x[0], x[1], x[2]), x.iter().all(|&v| v > 0.0))
        else {
            return false;
        };
        // The current peak pair must stay inside the tightened box.
        if self.z[0] <= prop.i {
            return false;
        }
        let Ok(mass) = self.cfg.z_prior.truncated(prop.i).and_then(|d| d.box_mass()) else {
            return false;
        };
        let ln_mass_prop = mass.ln();
        if !ln_mass_prop.is_finite() {
            // Quadrature underflow: the tightened box holds no measurable
            // prior mass, so the normalizer ratio is meaningless.
            return false;
        }
        let alpha_rev = [kappa * prop.s, kappa * prop.i, kappa * prop.r];
        let a0 = self.cfg.init_prior;
        let screen = ln_dirichlet_pdf([prop.s, prop.i, prop.r], a0)
            - ln_dirichlet_pdf([cur.s, cur.i, cur.r], a0)
            - ln_mass_prop
            + self.ln_box_mass
            + ln_dirichlet_pdf([cur.s, cur.i, cur.r], alpha_rev)
            - ln_dirichlet_pdf([prop.s, prop.i, prop.r], alpha_fwd);
        if ln_uniform(&mut self.rng) >= screen {
            return false;
        }
        let Some(params) = self.rates_for(self.z, &prop) else {
            return false;
        };
        let Some(cand) = self.dragged_path(prop, &params) else {
            return false;
        };
        let trans = self.trans_total(&cand, &params, self.iota);
        let obs = self.obs_total(&cand, &params, self.lambda);
        if ln_uniform(&mut self.rng) < trans + obs - self.cur_trans_ll - self.cur_obs_ll {
            self.theta = cand;
            self.params = params;
            self.ln_box_mass = ln_mass_prop;
            self.cur_trans_ll = trans;
            self.cur_obs_ll = obs;
            true
        } else {
            false
        }
    }

    /// Forward sweep over the weekly sites. Proposals come from the
    /// transition itself, so only downstream factors enter the ratio; the
    /// final week has none and always accepts.
    fn update_theta_sites(&mut self) -> Tally {
        let t_prime = self.y.len();
        let mut tally = Tally::default();
        for t in 1..=t_prime {
            let mean_prev = one_week_map(&self.theta[t - 1], &self.params);
            let alpha = [self.iota * mean_prev.s, self.iota * mean_prev.i, self.iota * mean_prev.r];
            let Ok(dir) = Dirichlet::new(&alpha) else {
                tally.hit(false);
                continue;
            };
            let x = dir.sample(&mut self.rng);
            // A zero component would put later transition densities at
            // negative infinity, so such draws never enter the path.
            let (Ok(prop), true) = (SirState::new(x[0], x[1], x[2]), x.iter().all(|&v| v > 0.0))
            else {
                tally.hit(false);
                continue;
            };
            if t == t_prime {
                self.theta[t] = prop;
                tally.hit(true);
                continue;
            }
            let next = self.theta[t + 1];
            let score = |state: &SirState| -> f64 {
                let mean = one_week_map(state, &self.params);
                let a = [self.iota * mean.s, self.iota * mean.i, self.iota * mean.r];
                if a.iter().any(|&v| !v.is_finite() || v <= 0.0) {
                    return f64::NEG_INFINITY;
                }
                ln_dirichlet_pdf([next.s, next.i, next.r], a)
                    + obs_loglik(self.y[t], weekly_rate(state, &self.params), self.lambda)
                        .unwrap_or(f64::NEG_INFINITY)
            };
            let delta = score(&prop) - score(&self.theta[t]);
            let accepted = ln_uniform(&mut self.rng) < delta;
            if accepted {
                self.theta[t] = prop;
            }
            tally.hit(accepted);
        }
        // The sweep rewrote path states, so the running totals are resummed.
        self.cur_trans_ll = self.trans_total(&self.theta, &self.params, self.iota);
        self.cur_obs_ll = self.obs_total(&self.theta, &self.params, self.lambda);
        tally
    }

    fn adapt(&mut self, win: &Counters) {
        let nudge = |scale: &mut f64, tally: &Tally, invert: bool, lo: f64, hi: f64| {
            if tally.attempted == 0 {
                return;
            }
            let gap = tally.rate() - TARGET_ACCEPTANCE;
            let factor = if invert { (-gap).exp() } else { gap.exp() };
            *scale = (*scale * factor).clamp(lo, hi);
        };
        nudge(&mut self.scales.z_mult, &win.z, false, 1e-3, 1e3);
        nudge(&mut self.scales.lambda, &win.lambda, false, 1e-4, 10.0);
        nudge(&mut self.scales.iota, &win.iota, false, 1e-4, 10.0);
        // Larger concentration means smaller steps, so the sense flips.
        nudge(&mut self.scales.theta0, &win.theta0, true, 10.0, 1e9);

        if let Some((c00, c01, c11)) = self.z_stats.covariance() {
            // Floors keep the factor full rank even when one coordinate
            // barely moved; the correlation cap keeps it well conditioned.
            let sigma = self.cfg.z_prior.sigma;
            let floor = |c: f64, s: f64| (c * AM_SCALE).max((1e-3 * 0.3 * s.sqrt()).powi(2));
            let a = floor(c00, sigma[0][0]);
            let c = floor(c11, sigma[1][1]);
            let cap = 0.99 * (a * c).sqrt();
            let b = (c01 * AM_SCALE).clamp(-cap, cap);
            let l00 = a.sqrt();
            let l10 = b / l00;
            let l11 = (c - l10 * l10).max(0.0).sqrt();
            if l00.is_finite() && l10.is_finite() && l11 > 0.0 && l11.is_finite() {
                self.scales.z_chol = [[l00, 0.0], [l10, l11]];
            }
        }
    }

    fn snapshot(&self, iter: u64) -> PosteriorDraw {
        PosteriorDraw {
            chain: self.chain_index,
            iter,
            beta: self.params.beta,
            gamma: self.params.gamma,
            lambda: self.lambda,
            iota: self.iota,
            path: LatentPath { theta: self.theta.clone(), z: self.z },
        }
    }

    fn run(mut self) -> (Vec<PosteriorDraw>, Counters) {
        let mcmc = self.cfg.mcmc;
        let mut draws = Vec::with_capacity(mcmc.retained_per_chain() as usize);
        let mut post = Counters::default();
        let mut win = Counters::default();
        for it in 1..=mcmc.iterations {
            let burning = it <= mcmc.burn_in;
            let tallies = {
                let z = self.update_z();
                let lambda = self.update_lambda();
                let iota = self.update_iota();
                let theta0 = (it % THETA0_PERIOD == 0).then(|| self.update_theta0());
                let theta = self.update_theta_sites();
                (z, lambda, iota, theta0, theta)
            };
            let book = if burning { &mut win } else { &mut post };
            book.z.hit(tallies.0);
            book.lambda.hit(tallies.1);
            book.iota.hit(tallies.2);
            if let Some(a) = tallies.3 {
                book.theta0.hit(a);
            }
            book.theta.accepted += tallies.4.accepted;
            book.theta.attempted += tallies.4.attempted;

            if burning {
                self.z_stats.push(self.z);
                if it == mcmc.burn_in / 2 {
                    // Drop the relaxation transient so the adapted shape
                    // reflects the settled region, not the approach to it.
                    self.z_stats = ZStats::default();
                }
                if it % ADAPT_WINDOW == 0 {
                    self.adapt(&win);
                    win = Counters::default();
                }
            }
            if !burning && (it - mcmc.burn_in) % mcmc.thinning == 0 {
                draws.push(self.snapshot(it));
            }
        }
        (draws, post)
    }
}

fn moment_matched_start(cfg: &DbssmConfig) -> Result<super::prior::PriorDraw> {
    let a0: f64 = cfg.init_prior.iter().sum();
    let theta0 =
        SirState::new(cfg.init_prior[0] / a0, cfg.init_prior[1] / a0, cfg.init_prior[2] / a0)?;
    let lambda = cfg.lambda_prior.mean();
    let iota = cfg.iota_prior.mean();
    let margin = 1e-6;
    let z = [
        cfg.z_prior.mu[0].clamp(
            cfg.z_prior.lo[0].max(theta0.i) + margin,
            cfg.z_prior.hi[0] - margin,
        ),
        cfg.z_prior.mu[1].clamp(cfg.z_prior.lo[1] + margin, cfg.z_prior.hi[1] - margin),
    ];
    let params = map_to_params(z, &theta0, cfg.z_interpretation, cfg.inverse_method, None)?;
    Ok(super::prior::PriorDraw { lambda, iota, theta0, z, params })
}

/// Start for the non-anchor chains: the moment-matched point dispersed at
/// roughly posterior scale — the peak pair by half a prior standard
/// deviation per coordinate, the concentrations by half a log-unit, the
/// initial state by a full prior draw — so chains begin distinct without
/// having to cross the whole prior to meet.
fn jittered_start<R: Rng + ?Sized>(
    cfg: &DbssmConfig,
    rng: &mut R,
) -> Result<super::prior::PriorDraw> {
    let dir = Dirichlet::new(&cfg.init_prior)
        .map_err(|e| Error::invalid(format!("initial-state prior: {e}")))?;
    let t0 = dir.sample(rng);
    let theta0 = SirState::new(t0[0], t0[1], t0[2])?;
    let margin = 1e-6;
    let zp = &cfg.z_prior;
    let (n0, n1): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
    let z = [
        reflect(
            zp.mu[0] + 0.5 * zp.sigma[0][0].sqrt() * n0,
            zp.lo[0].max(theta0.i) + margin,
            zp.hi[0] - margin,
        ),
        reflect(zp.mu[1] + 0.5 * zp.sigma[1][1].sqrt() * n1, zp.lo[1] + margin, zp.hi[1] - margin),
    ];
    let (n2, n3): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
    let lambda = cfg.lambda_prior.mean() * (0.5 * n2).exp();
    let iota = cfg.iota_prior.mean() * (0.5 * n3).exp();
    let params = map_to_params(z, &theta0, cfg.z_interpretation, cfg.inverse_method, None)?;
    Ok(super::prior::PriorDraw { lambda, iota, theta0, z, params })
}

/// Split potential-scale-reduction factor over per-chain retained series.
/// Each chain is halved; between- and within-sequence variances are compared.
pub(crate) fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let mut seqs: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let n = c.len() / 2;
        if n < 2 {
            return f64::NAN;
        }
        seqs.push(&c[..n]);
        seqs.push(&c[c.len() - n..]);
    }
    let n = seqs[0].len() as f64;
    let m = seqs.len() as f64;
    let means: Vec<f64> = seqs.iter().map(|s| s.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>();
    let w = seqs
        .iter()
        .zip(&means)
        .map(|(s, mu)| s.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Fit the model to an observed weekly series. `seed` fixes every random
/// choice; chains run concurrently and own independent rng streams, so
/// results are reproducible regardless of scheduling.
pub fn fit(y: &[f64], config: &DbssmConfig, seed: u64) -> Result<PosteriorSamples> {
    config.validate()?;
    if y.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least three observed weeks, got {}",
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite() || **v <= 0.0 || **v >= 1.0) {
        return Err(Error::invalid(format!(
            "observations must lie strictly inside (0, 1), got {bad}"
        )));
    }

    let chains = config.mcmc.chains;
    let results: Vec<Result<(Vec<PosteriorDraw>, Counters)>> = (0..chains)
        .into_par_iter()
        .map(|c| Ok(Chain::init(config, y, c as u32, seed)?.run()))
        .collect();

    let mut draws = Vec::new();
    let mut totals = Counters::default();
    for res in results {
        let (chain_draws, counters) = res?;
        draws.extend(chain_draws);
        for (into, from) in [
            (&mut totals.z, counters.z),
            (&mut totals.lambda, counters.lambda),
            (&mut totals.iota, counters.iota),
            (&mut totals.theta0, counters.theta0),
            (&mut totals.theta, counters.theta),
        ] {
            into.accepted += from.accepted;
            into.attempted += from.attempted;
        }
    }

    let mut samples = PosteriorSamples {
        t_prime: y.len(),
        draws,
        diagnostics: FitDiagnostics {
            n_chains: chains,
            n_iterations: config.mcmc.iterations,
            n_burn_in: config.mcmc.burn_in,
            n_thinning: config.mcmc.thinning,
            acceptance: AcceptanceRates {
                z: totals.z.rate(),
                lambda: totals.lambda.rate(),
                iota: totals.iota.rate(),
                theta0: totals.theta0.rate(),
                theta_sites: totals.theta.rate(),
            },
            split_rhat: Vec::new(),
            warnings: Vec::new(),
        },
    };

    let scalars: [(&str, fn(&PosteriorDraw) -> f64); 9] = [
        ("beta", |d| d.beta),
        ("gamma", |d| d.gamma),
        ("lambda", |d| d.lambda),
        ("iota", |d| d.iota),
        ("piv", |d| d.path.z[0]),
        ("pit", |d| d.path.z[1]),
        ("theta0_s", |d| d.theta0().s),
        ("theta0_i", |d| d.theta0().i),
        ("theta0_r", |d| d.theta0().r),
    ];
    for (name, pick) in scalars {
        let series: Vec<Vec<f64>> =
            (0..chains).map(|c| samples.chain_series(c as u32, pick)).collect();
        let rhat = split_rhat(&series);
        if rhat > RHAT_WARN {
            samples
                .diagnostics
                .warnings
                .push(format!("split R-hat for {name} is {rhat:.3} (> {RHAT_WARN})"));
        }
        samples.diagnostics.split_rhat.push((name.to_string(), rhat));
    }
    Ok(samples)
}
