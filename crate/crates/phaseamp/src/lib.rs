//! AMP.A for phase retrieval.
//!
//! - [`elliptic`]: complete elliptic integrals K, E, T.
//! - [`se_maps`]: closed-form state-evolution maps and their Monte-Carlo oracle.
//! - [`se_dynamics`]: nullclines, regions, trajectories, thresholds, noise sensitivity.
//! - [`amp`]: finite-n AMP.A for real and complex Gaussian sensing.
//! - [`spectral`]: decoupled spectral initialization.

pub mod amp;
pub mod elliptic;
pub mod error;
pub mod quad;
pub mod se_dynamics;
pub mod se_maps;
pub mod spectral;

pub use error::{Error, Result};
pub use se_maps::{Field, ModelParams, SEState};
