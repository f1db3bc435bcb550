//! Mapping between SIR epidemic parameters and peak summaries.
//!
//! The library is organized around one forward map and its inverses. Given
//! transmission/recovery rates `(beta, gamma)` and initial compartment
//! proportions, [`peak::peak_prevalence`] and [`peak::peak_incidence`] produce
//! the peak value/time pairs of the epidemic curve. [`invert::prevalence_to_params`]
//! and [`invert::incidence_to_params`] recover `(beta, gamma)` from those pairs,
//! the latter by one of four [`invert::InverseMethod`] strategies whose accuracy
//! and cost trade-offs are measured by [`bench::run_benchmark`].
//!
//! On top of the deterministic maps, [`dbssm`] implements a Dirichlet-Beta
//! state-space model for weekly incidence proportions with a peak-informed prior,
//! fit by Metropolis-within-Gibbs and propagated into forecast quantile bands.
//! [`ingest`] prepares weekly surveillance data for fitting.

pub mod bench;
pub mod dbssm;
mod error;
pub mod ingest;
pub mod invert;
pub mod peak;
pub mod quad;
pub mod rng;
pub mod root;
pub mod sir;
pub mod zdist;

pub use error::{Error, Result};
