//! Parameter records for the trapped cloud, the mirror kick and the camera.
//!
//! All fields are SI (m, s, kg, K, rad/s).

use std::fmt;

/// Release conditions of the bimodal cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleParams {
    pub n_atoms: usize,
    pub condensed_fraction: f64,
    /// Thermal-cloud temperature (K).
    pub temperature: f64,
    /// Trap angular frequency along x (rad/s).
    pub omega_x: f64,
    /// Radial trap angular frequency (rad/s).
    pub omega_perp: f64,
    /// Thomas-Fermi position radius along x (m).
    pub r_x: f64,
    /// Thomas-Fermi velocity radius along x (m/s).
    pub v_x: f64,
    /// Thomas-Fermi velocity radius along y and z (m/s).
    pub v_perp: f64,
    /// Center-of-mass velocity at release (m/s).
    pub v0: [f64; 3],
    /// Height of the trap center above the mirror (m).
    pub h0: f64,
}

impl EnsembleParams {
    /// Number of atoms drawn from the condensate model, ⌊f·N⌋.
    pub fn n_condensed(&self) -> usize {
        (self.condensed_fraction * self.n_atoms as f64).floor() as usize
    }

    pub fn omegas(&self) -> [f64; 3] {
        [self.omega_x, self.omega_perp, self.omega_perp]
    }

    pub fn velocity_radii(&self) -> [f64; 3] {
        [self.v_x, self.v_perp, self.v_perp]
    }
}

/// Gaussian horizontal kick imparted by the rough mirror, plus the roughness
/// spectrum it is attributed to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorKickModel {
    /// Standard deviation (1/√e half-width) of the kick along x (m/s).
    pub sigma_vx: f64,
    /// Standard deviation of the kick along y (m/s).
    pub sigma_vy: f64,
    /// Power-law exponent of the roughness spectrum.
    pub alpha: f64,
    /// rms surface roughness (m).
    pub sigma_s: f64,
}

impl MirrorKickModel {
    pub fn specular() -> Self {
        Self {
            sigma_vx: 0.0,
            sigma_vy: 0.0,
            alpha: 4.0,
            sigma_s: 0.0,
        }
    }

    pub fn with_sigma_vy(mut self, sigma_vy: f64) -> Self {
        self.sigma_vy = sigma_vy;
        self
    }
}

/// Camera geometry in the (x, z) plane; the line of sight is y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagingParams {
    pub pixels_x: usize,
    pub pixels_z: usize,
    /// Physical extent of the field along x (m).
    pub field_x: f64,
    /// Physical extent of the field along z (m).
    pub field_z: f64,
    /// x coordinate of the field's lower edge (m).
    pub origin_x: f64,
    /// z coordinate of the field's lower edge (m).
    pub origin_z: f64,
    /// Gaussian blur, rms in pixels.
    pub blur_rms: f64,
    /// Profile region extent along x (m).
    pub region_x: f64,
    /// Profile region extent along z (m).
    pub region_z: f64,
}

impl ImagingParams {
    /// Pixel pitch (x, z) in m/pixel.
    pub fn pitch(&self) -> (f64, f64) {
        (self.field_x / self.pixels_x as f64, self.field_z / self.pixels_z as f64)
    }
}

/// One failed invariant found by [`crate::config::validate_config`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}
