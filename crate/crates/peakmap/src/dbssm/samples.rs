//! Retained posterior draws, convergence diagnostics, and their file formats.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sir::SirState;
use crate::{Error, Result};

/// A latent trajectory paired with the peak pair that generated its rates.
#[derive(Debug, Clone)]
pub struct LatentPath {
    /// Weekly states, index 0 holding the initial state.
    pub theta: Vec<SirState>,
    /// Peak pair `(value, week)`.
    pub z: [f64; 2],
}

/// One retained draw.
#[derive(Debug, Clone)]
pub struct PosteriorDraw {
    pub chain: u32,
    /// Global iteration index within the chain (1-based, pre-thinning).
    pub iter: u64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub iota: f64,
    pub path: LatentPath,
}

impl PosteriorDraw {
    pub fn theta0(&self) -> &SirState {
        &self.path.theta[0]
    }
}

/// Post-burn-in acceptance rates per proposal family.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub z: f64,
    pub lambda: f64,
    pub iota: f64,
    pub theta0: f64,
    pub theta_sites: f64,
}

/// Sampler settings and convergence summaries for a finished fit.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_chains: usize,
    pub n_iterations: u64,
    pub n_burn_in: u64,
    pub n_thinning: u64,
    pub acceptance: AcceptanceRates,
    /// Split potential-scale-reduction factor per scalar, in a fixed order.
    pub split_rhat: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

/// All retained draws across chains, in (chain, iteration) order.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    /// Number of observed weeks the fit conditioned on.
    pub t_prime: usize,
    pub draws: Vec<PosteriorDraw>,
    pub diagnostics: FitDiagnostics,
}

impl PosteriorSamples {
    /// Scalar series for one chain, for diagnostics: extracts `pick` from each
    /// retained draw in order.
    pub(crate) fn chain_series(&self, chain: u32, pick: impl Fn(&PosteriorDraw) -> f64) -> Vec<f64> {
        self.draws.iter().filter(|d| d.chain == chain).map(pick).collect()
    }

    /// One row per retained draw: scalars plus the initial state.
    pub fn write_draws_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record([
            "chain", "iter", "beta", "gamma", "lambda", "iota", "piv", "pit", "theta0_s",
            "theta0_i", "theta0_r",
        ])?;
        for d in &self.draws {
            let t0 = d.theta0();
            w.write_record([
                d.chain.to_string(),
                d.iter.to_string(),
                d.beta.to_string(),
                d.gamma.to_string(),
                d.lambda.to_string(),
                d.iota.to_string(),
                d.path.z[0].to_string(),
                d.path.z[1].to_string(),
                t0.s.to_string(),
                t0.i.to_string(),
                t0.r.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Companion file carrying every draw's full weekly path, one row per
    /// (draw, week). Required to forecast from a reloaded fit.
    pub fn write_states_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["chain", "iter", "week", "s", "i", "r"])?;
        for d in &self.draws {
            for (week, st) in d.path.theta.iter().enumerate() {
                w.write_record([
                    d.chain.to_string(),
                    d.iter.to_string(),
                    week.to_string(),
                    st.s.to_string(),
                    st.i.to_string(),
                    st.r.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_diagnostics_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.diagnostics)
            .map_err(|e| Error::invalid(format!("diagnostics serialization: {e}")))?;
        std::fs::write(path.as_ref(), json)?;
        Ok(())
    }

    /// Rebuild samples from the draw and state files. Diagnostics are not
    /// reconstructed; forecasting does not need them.
    pub fn read_csv(draws_path: impl AsRef<Path>, states_path: impl AsRef<Path>) -> Result<Self> {
        let mut draws: Vec<PosteriorDraw> = Vec::new();
        let mut index: HashMap<(u32, u64), usize> = HashMap::new();
        let mut rd = csv::Reader::from_path(draws_path.as_ref())?;
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != 11 {
                return Err(Error::invalid(format!(
                    "draw row has {} fields, expected 11",
                    rec.len()
                )));
            }
            let field = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|e| Error::invalid(format!("draw field {k}: {e}")))
            };
            let chain: u32 =
                rec[0].parse().map_err(|e| Error::invalid(format!("chain: {e}")))?;
            let iter: u64 = rec[1].parse().map_err(|e| Error::invalid(format!("iter: {e}")))?;
            if index.insert((chain, iter), draws.len()).is_some() {
                return Err(Error::invalid(format!("duplicate draw ({chain}, {iter})")));
            }
            draws.push(PosteriorDraw {
                chain,
                iter,
                beta: field(2)?,
                gamma: field(3)?,
                lambda: field(4)?,
                iota: field(5)?,
                path: LatentPath { theta: Vec::new(), z: [field(6)?, field(7)?] },
            });
        }

        let mut rd = csv::Reader::from_path(states_path.as_ref())?;
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != 6 {
                return Err(Error::invalid(format!(
                    "state row has {} fields, expected 6",
                    rec.len()
                )));
            }
            let chain: u32 =
                rec[0].parse().map_err(|e| Error::invalid(format!("chain: {e}")))?;
            let iter: u64 = rec[1].parse().map_err(|e| Error::invalid(format!("iter: {e}")))?;
            let week: usize =
                rec[2].parse().map_err(|e| Error::invalid(format!("week: {e}")))?;
            let parse = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|e| Error::invalid(format!("state field {k}: {e}")))
            };
            let state = SirState::new(parse(3)?, parse(4)?, parse(5)?)?;
            let &slot = index
                .get(&(chain, iter))
                .ok_or_else(|| Error::invalid(format!("orphan state row ({chain}, {iter})")))?;
            let theta = &mut draws[slot].path.theta;
            if week != theta.len() {
                return Err(Error::invalid(format!(
                    "state rows for draw ({chain}, {iter}) out of order at week {week}"
                )));
            }
            theta.push(state);
        }

        let t_prime = match draws.first() {
            Some(d) if !d.path.theta.is_empty() => d.path.theta.len() - 1,
            _ => return Err(Error::invalid("no draws or no state rows")),
        };
        for d in &draws {
            if d.path.theta.len() != t_prime + 1 {
                return Err(Error::invalid(format!(
                    "draw ({}, {}) has {} weeks of states, expected {}",
                    d.chain,
                    d.iter,
                    d.path.theta.len(),
                    t_prime + 1
                )));
            }
        }
        Ok(PosteriorSamples { t_prime, draws, diagnostics: FitDiagnostics::default() })
    }
}
