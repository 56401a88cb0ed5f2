//! Analytic and Monte Carlo evaluation of UAV-to-ground free-space QKD links.
//!
//! * [`beam`]: Gaussian beam geometry and aperture capture probability.
//! * [`channel`]: atmosphere, turbulence, pointing, field of view and background.
//! * [`analytics`]: detection probability, key rate and QBER in closed form.
//! * [`montecarlo`]: slot-level simulation of the same link.
//! * [`sweep`]: parameter sweeps and single-variable optimisation.
//! * [`config`], [`emit`]: configuration text and result tables.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod analytics;
pub mod beam;
pub mod channel;
pub mod config;
pub mod emit;
pub mod error;
pub mod montecarlo;
pub mod quadrature;
pub mod special;
pub mod sweep;

pub use analytics::{AnalyticContext, CaptureMode, Method, PerformanceReport};
pub use config::LinkConfig;
pub use error::{Error, Result};
