//! Diffuse-reflection theory for a power-law rough surface.
//!
//! The atomic response is modelled as two thin rings of radius k_L centred at
//! ±K_ev in the surface plane. Both rings contribute equally, so every
//! velocity moment reduces to an angular integral over one ring,
//!
//! ```text
//! I_w(α, η) = ∫₀^π w(φ) (1 − 2η cos φ + η²)^(−α/2) dφ
//! ```
//!
//! with weight w = (cos φ − η)² for x, sin² φ for y and 1 for the total
//! scattering probability. The anisotropy is χ = √(I_x / I_y).

use std::f64::consts::PI;

use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::params::{EnsembleParams, MirrorKickModel};
use crate::quadrature::{integrate, QuadratureError, Tolerance};

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("eta = 1 puts the singularity of the ring integrand on the integration path")]
    SingularEta,
    #[error("eta must be finite and non-negative, got {0}")]
    InvalidEta(f64),
    #[error("alpha must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
    #[error("closed form needs eta > 1/sqrt(2), got {0}")]
    ClosedFormDomain(f64),
    #[error("{name} must be {bound}, got {value}")]
    OutOfRange {
        name: &'static str,
        bound: &'static str,
        value: f64,
    },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Power-law roughness spectrum P_S(Q) ∝ Q^(−α).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoughnessSpectrum {
    pub alpha: f64,
    /// rms roughness (m).
    pub sigma_s: f64,
}

impl RoughnessSpectrum {
    /// Exponent range typical of polished dielectric surfaces.
    pub const VALIDATED_ALPHA: (f64, f64) = (2.0, 5.0);

    /// Spectrum up to its normalization.
    pub fn relative_power(&self, q: f64) -> f64 {
        q.powf(-self.alpha)
    }

    pub fn in_validated_range(&self) -> bool {
        (Self::VALIDATED_ALPHA.0..=Self::VALIDATED_ALPHA.1).contains(&self.alpha)
    }
}

impl From<&MirrorKickModel> for RoughnessSpectrum {
    fn from(k: &MirrorKickModel) -> Self {
        Self {
            alpha: k.alpha,
            sigma_s: k.sigma_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngularWeight {
    /// (cos φ − η)²
    X,
    /// sin² φ
    Y,
    /// 1
    Unit,
}

/// Angular ring integral for one weight.
///
/// η > 1 is the physical case. 0 ≤ η < 1 is accepted as well since the
/// integrand stays smooth there; η = 1 is rejected.
pub fn angular_integral(weight: AngularWeight, alpha: f64, eta: f64) -> Result<f64, TheoryError> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(TheoryError::InvalidEta(eta));
    }
    if eta == 1.0 {
        return Err(TheoryError::SingularEta);
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(TheoryError::InvalidAlpha(alpha));
    }
    let power = -0.5 * alpha;
    let base = 1.0 + eta * eta;
    let integrand = |phi: f64| {
        let (s, c) = phi.sin_cos();
        let w = match weight {
            AngularWeight::X => (c - eta) * (c - eta),
            AngularWeight::Y => s * s,
            AngularWeight::Unit => 1.0,
        };
        w * (base - 2.0 * eta * c).powf(power)
    };
    Ok(integrate(integrand, 0.0, PI, Tolerance::default())?.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropyResult {
    /// σ_vx / σ_vy.
    pub chi: f64,
    pub numerator_integral: f64,
    pub denominator_integral: f64,
    pub alpha: f64,
    pub eta: f64,
}

pub fn anisotropy_chi(alpha: f64, eta: f64) -> Result<AnisotropyResult, TheoryError> {
    let numerator_integral = angular_integral(AngularWeight::X, alpha, eta)?;
    let denominator_integral = angular_integral(AngularWeight::Y, alpha, eta)?;
    Ok(AnisotropyResult {
        chi: (numerator_integral / denominator_integral).sqrt(),
        numerator_integral,
        denominator_integral,
        alpha,
        eta,
    })
}

/// χ for α = 4, where χ² = 2η² − 1.
pub fn chi_alpha4_closed_form(eta: f64) -> Result<f64, TheoryError> {
    if !(eta > std::f64::consts::FRAC_1_SQRT_2) {
        return Err(TheoryError::ClosedFormDomain(eta));
    }
    Ok((2.0 * eta * eta - 1.0).sqrt())
}

/// Upper bound on the total diffuse-reflection probability,
/// (4π σ_s e^{κ z0} / λ_dB)².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmaxBound {
    pub value: f64,
    /// The bound exceeds 1 and therefore does not constrain w.
    pub exceeds_unity: bool,
}

pub fn wmax_bound(sigma_s: f64, kappa: f64, z0: f64, lambda_db: f64) -> Result<WmaxBound, TheoryError> {
    let check = |name, bound, value: f64, ok: bool| {
        if ok && value.is_finite() {
            Ok(())
        } else {
            Err(TheoryError::OutOfRange { name, bound, value })
        }
    };
    check("sigma_s", "non-negative", sigma_s, sigma_s >= 0.0)?;
    check("kappa", "positive", kappa, kappa > 0.0)?;
    check("z0", "non-negative", z0, z0 >= 0.0)?;
    check("lambda_dB", "positive", lambda_db, lambda_db > 0.0)?;
    let amplitude = 4.0 * PI * sigma_s * (kappa * z0).exp() / lambda_db;
    let value = amplitude * amplitude;
    Ok(WmaxBound {
        value,
        exceeds_unity: value > 1.0,
    })
}

/// x-velocity spread implied by a scattering probability `wmax`:
/// σ_vx = v_rec √(wmax · I_x / I_1).
pub fn sigma_vx_bound(wmax: f64, alpha: f64, eta: f64, v_rec: f64) -> Result<f64, TheoryError> {
    if !(wmax >= 0.0) || !wmax.is_finite() {
        return Err(TheoryError::OutOfRange {
            name: "wmax",
            bound: "non-negative",
            value: wmax,
        });
    }
    let ratio = angular_integral(AngularWeight::X, alpha, eta)? / angular_integral(AngularWeight::Unit, alpha, eta)?;
    Ok(v_rec * (wmax * ratio).sqrt())
}

/// Free-fall and expansion quantities derived from the release parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    /// √(2 h0 / g) (s).
    pub fall_time: f64,
    /// g · fall_time (m/s).
    pub impact_velocity: f64,
    /// h / (m · impact_velocity) (m).
    pub lambda_db: f64,
    /// (π/2)(ω_x/ω_⊥) V_⊥ (m/s).
    pub v_x_castin_dum: f64,
    /// λ_dB h0 / R (m).
    pub speckle_size: f64,
}

/// `reflection_size` is the cloud size R at the mirror; `None` uses R_x.
pub fn derived_kinematics(
    params: &EnsembleParams,
    constants: &PhysicalConstants,
    reflection_size: Option<f64>,
) -> Kinematics {
    let fall_time = (2.0 * params.h0 / constants.g).sqrt();
    let impact_velocity = constants.g * fall_time;
    let lambda_db = constants.de_broglie_wavelength(impact_velocity);
    let r = reflection_size.unwrap_or(params.r_x);
    Kinematics {
        fall_time,
        impact_velocity,
        lambda_db,
        v_x_castin_dum: 0.5 * PI * (params.omega_x / params.omega_perp) * params.v_perp,
        speckle_size: lambda_db * params.h0 / r,
    }
}
