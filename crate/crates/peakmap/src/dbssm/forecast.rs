//! Posterior predictive forecasting.
//!
//! Each retained draw is propagated past the last assimilated week by
//! alternating the stochastic state transition and the observation draw, so
//! forecast spread combines parameter, state, and observation uncertainty.

use rand_distr::{Beta, Dirichlet, Distribution};

use super::model::{one_week_map, weekly_rate};
use super::samples::PosteriorSamples;
use crate::rng::stream_rng;
use crate::sir::SirState;
use crate::{Error, Result};

/// Summaries of the predictive distribution for one future week.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ForecastWeek {
    pub week: usize,
    pub mean: f64,
    pub q025: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Forecast {
    pub weeks: Vec<ForecastWeek>,
}

impl Forecast {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "week,mean,q025,q25,q50,q75,q975")?;
        for wk in &self.weeks {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                wk.week, wk.mean, wk.q025, wk.q25, wk.q50, wk.q75, wk.q975
            )?;
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of a sorted sample.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Simulate the observation process `horizon - t'` weeks past the end of the
/// fitted series for every retained draw. `seed` controls the predictive
/// randomness only; each draw owns an independent stream, so the output does
/// not depend on evaluation order.
pub fn forecast(samples: &PosteriorSamples, horizon: usize, seed: u64) -> Result<Forecast> {
    let t_prime = samples.t_prime;
    if horizon <= t_prime {
        return Err(Error::invalid(format!(
            "forecast horizon {horizon} must exceed the {t_prime} assimilated weeks"
        )));
    }
    if samples.draws.is_empty() {
        return Err(Error::invalid("no retained draws to forecast from"));
    }
    let ahead = horizon - t_prime;
    let mut per_week: Vec<Vec<f64>> = vec![Vec::with_capacity(samples.draws.len()); ahead];
    for (k, draw) in samples.draws.iter().enumerate() {
        let mut rng = stream_rng(seed, k as u64);
        let params = crate::sir::SirParams::new(draw.beta, draw.gamma)?;
        let mut state = *draw.path.theta.last().expect("paths are non-empty");
        for slot in per_week.iter_mut() {
            // Observation for week t+1 reads the rate off the week-t state.
            let inc = weekly_rate(&state, &params).clamp(1e-12, 1.0 - 1e-12);
            let a = (draw.lambda * inc).max(1e-12);
            let b = (draw.lambda * (1.0 - inc)).max(1e-12);
            let obs = Beta::new(a, b)
                .map_err(|e| Error::invalid(format!("predictive shapes invalid: {e}")))?
                .sample(&mut rng);
            slot.push(obs);

            let mean = one_week_map(&state, &params);
            let alpha = [draw.iota * mean.s, draw.iota * mean.i, draw.iota * mean.r];
            state = match Dirichlet::new(&alpha) {
                Ok(dir) => {
                    let x = dir.sample(&mut rng);
                    SirState::new(x[0], x[1], x[2]).unwrap_or(mean)
                }
                // Degenerate concentration: fall back to the deterministic map.
                Err(_) => mean,
            };
        }
    }

    let mut weeks = Vec::with_capacity(ahead);
    for (offset, mut vals) in per_week.into_iter().enumerate() {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.sort_by(|a, b| a.partial_cmp(b).expect("finite forecasts"));
        weeks.push(ForecastWeek {
            week: t_prime + offset + 1,
            mean,
            q025: quantile(&vals, 0.025),
            q25: quantile(&vals, 0.25),
            q50: quantile(&vals, 0.50),
            q75: quantile(&vals, 0.75),
            q975: quantile(&vals, 0.975),
        });
    }
    Ok(Forecast { weeks })
}
