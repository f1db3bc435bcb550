//! Dirichlet-Beta state-space model over the weekly compartment path, with
//! rates tied to the reported peak pair through the inverse peak map.
//!
//! The observed fraction for a week is Beta-distributed around that week's
//! incidence rate; the latent compartment path follows a Dirichlet transition
//! centered on the one-week deterministic map. Rates `(beta, gamma)` carry no
//! free prior of their own: they are the deterministic image of the peak pair
//! and the initial state, so peak-pair beliefs elicited from surveillance
//! history translate directly into rate beliefs.

mod config;
mod fit;
mod forecast;
mod model;
mod prior;
mod samples;

pub use config::{fit_z_prior, DbssmConfig, GammaPrior, McmcConfig, ZInterpretation, ZPrior};
pub use fit::fit;
pub use forecast::{forecast, Forecast, ForecastWeek};
pub(crate) use model::OBS_CLAMP;
pub use model::{generate_season, obs_loglik, one_week_map, transition_logpdf, weekly_rate};
pub use prior::{sample_prior, PriorDraw};
pub use samples::{
    AcceptanceRates, FitDiagnostics, LatentPath, PosteriorDraw, PosteriorSamples,
};
