//! Long-term average treatment effects from a combined experimental /
//! observational dataset.
//!
//! The experimental sample carries the treatment but not the long-term
//! outcome; the observational sample carries the outcome but not the
//! treatment. Surrogates and two proxy families (`w`, observed everywhere,
//! and `z`, observed only in the observational sample) bridge the two and
//! adjust for a latent confounder.
//!
//! Module map:
//!
//! * [`data`]: dataset model, missingness contract, CSV I/O.
//! * [`synth`]: linear-Gaussian generator with closed-form oracle quantities.
//! * [`basis`]: feature maps shared by every regression and solver.
//! * [`bridge`]: outcome and surrogate bridge solvers.
//! * [`nuisance`]: propensity score and pseudo-outcome regression.
//! * [`estimators`]: cross-fitting, the four estimators, variance and CI.
//! * [`baselines`]: RCT benchmark, surrogate index, OLS/IV diagnostics.
//! * [`harness`]: split-and-mask design and the Monte Carlo engine.

pub mod baselines;
pub mod basis;
pub mod bridge;
pub mod data;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod normal;
pub mod nuisance;
pub mod synth;

pub use error::{Error, Result};
