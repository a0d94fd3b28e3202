//! Monte Carlo simulation and theory for a Bose-Einstein condensate bouncing
//! off a rough evanescent-wave mirror.
//!
//! The pipeline is: [`config`] → [`ensemble`] sampling → [`dynamics`]
//! (fall, stochastic bounce, flight) → [`imaging`] → [`inference`] of the
//! line-of-sight kick width. [`theory`] evaluates the ring-model anisotropy
//! and the roughness bound on the velocity spread.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod constants;
pub mod dynamics;
pub mod ensemble;
pub mod imaging;
pub mod inference;
pub mod params;
pub mod pgm;
pub mod quadrature;
pub mod rng;
pub mod theory;

pub use config::{load_config, parse_config, validate_config, Config};
pub use constants::{EvanescentWaveParams, PhysicalConstants};
pub use dynamics::{bounce, propagate_ballistic, simulate_bounce_experiment, BounceRecord, Experiment};
pub use ensemble::{ensemble_moments, sample_initial_ensemble, AtomEnsemble};
pub use imaging::{extract_z_profile, fit_gaussian_width, render_image, AbsorptionImage, DensityProfile};
pub use inference::{infer_sigma_vy, profile_residual, InferenceReport};
pub use params::{EnsembleParams, ImagingParams, MirrorKickModel};
pub use theory::{anisotropy_chi, chi_alpha4_closed_form, derived_kinematics, sigma_vx_bound, wmax_bound};
