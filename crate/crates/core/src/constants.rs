//! Physical constants and the optical parameters of the evanescent-wave mirror.

use std::f64::consts::PI;

/// Boltzmann constant (J/K).
pub const K_BOLTZMANN: f64 = 1.380_649e-23;

/// Planck constant h (J·s).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Atomic mass unit (kg).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Mass of ⁸⁷Rb in atomic mass units.
pub const RB87_MASS_U: f64 = 86.909;

/// Standard gravitational acceleration used unless a config overrides it (m/s²).
pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Gravitational acceleration (m/s²).
    pub g: f64,
    /// Planck constant h (J·s).
    pub h: f64,
    /// Atomic mass (kg).
    pub m_atom: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            g: STANDARD_GRAVITY,
            h: PLANCK,
            m_atom: RB87_MASS_U * ATOMIC_MASS_UNIT,
        }
    }
}

impl PhysicalConstants {
    /// Thermal velocity scale √(k_B T / m) (m/s).
    pub fn thermal_velocity(&self, temperature: f64) -> f64 {
        (K_BOLTZMANN * temperature / self.m_atom).sqrt()
    }

    /// de Broglie wavelength h/(m v) at speed `v` (m).
    pub fn de_broglie_wavelength(&self, v: f64) -> f64 {
        self.h / (self.m_atom * v)
    }
}

/// Optical constants of the evanescent-wave mirror.
///
/// Only the laser wavelength, the decay length and `eta = K_ev / k_L` are
/// independent; the free-space wavevector and the recoil velocity follow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvanescentWaveParams {
    /// Laser wavelength (m).
    pub lambda_l: f64,
    /// Inverse decay length of the field amplitude κ (1/m), with I ∝ e^{-2κz}.
    pub kappa: f64,
    /// K_ev / k_L.
    pub eta: f64,
}

impl EvanescentWaveParams {
    pub fn new(lambda_l: f64, decay_length: f64, eta: f64) -> Self {
        Self {
            lambda_l,
            kappa: 1.0 / decay_length,
            eta,
        }
    }

    /// Free-space wavevector 2π/λ_L (1/m).
    pub fn k_l(&self) -> f64 {
        2.0 * PI / self.lambda_l
    }

    /// In-plane wavevector of the guided mode K_ev = η k_L (1/m).
    pub fn k_ev(&self) -> f64 {
        self.eta * self.k_l()
    }

    /// Recoil velocity h/(m λ_L) (m/s).
    pub fn v_rec(&self, constants: &PhysicalConstants) -> f64 {
        constants.h / (constants.m_atom * self.lambda_l)
    }

    pub fn decay_length(&self) -> f64 {
        1.0 / self.kappa
    }
}
