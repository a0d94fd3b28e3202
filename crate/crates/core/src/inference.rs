//! Grid scan over the line-of-sight kick width σ_vy.
//!
//! Each candidate is simulated with the same seed (common random numbers),
//! rendered, reduced to a z-profile and compared with the reference profile
//! by mean squared difference.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::Config;
use crate::dynamics::{simulate_bounce_experiment, SimulationError};
use crate::imaging::{
    add_poisson_noise, extract_z_profile, render_image, AbsorptionImage, DensityProfile, ImagingError, ProfileRegion,
};

/// Candidates whose residual is within this factor of the best one form
/// the acceptance bracket.
pub const BRACKET_BAND: f64 = 1.5;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("at least 2 candidates are required, got {0}")]
    TooFewCandidates(usize),
    #[error("candidate sigma_vy must be finite and non-negative, got {0}")]
    InvalidCandidate(f64),
    #[error("profiles do not overlap in z")]
    NoOverlap,
    #[error("reference profile: {0}")]
    Reference(ImagingError),
    #[error("candidate sigma_vy = {candidate} m/s: {source}")]
    Candidate {
        candidate: f64,
        #[source]
        source: Box<InferenceError>,
    },
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Mean squared difference over the reference points covered by the trial,
/// with the trial linearly interpolated onto the reference grid.
pub fn profile_residual(reference: &DensityProfile, trial: &DensityProfile) -> Result<f64, InferenceError> {
    let (sum, n) = reference
        .z
        .iter()
        .zip(&reference.values)
        .filter_map(|(z, r)| trial.interpolate(*z).map(|t| (t - r).powi(2)))
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    if n == 0 {
        return Err(InferenceError::NoOverlap);
    }
    Ok(sum / n as f64)
}

/// Simulate and render one image at `time_of_flight`, honouring the
/// config's noise switch.
pub fn synthesize_image(config: &Config, time_of_flight: f64, seed: u64) -> Result<AbsorptionImage, InferenceError> {
    let exp = simulate_bounce_experiment(config, time_of_flight, seed)?;
    let mut image = render_image(&exp.ensemble, &config.imaging)?;
    if config.poisson_noise {
        add_poisson_noise(&mut image, seed);
    }
    Ok(image)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    /// Candidate σ_vy values (m/s), in the order given.
    pub candidates: Vec<f64>,
    pub residuals: Vec<f64>,
    pub best: f64,
    /// σ_vx / best; `None` when the best candidate is zero.
    pub anisotropy: Option<f64>,
    /// Smallest and largest candidate with residual ≤ band × minimum.
    pub bracket: (f64, f64),
    pub band: f64,
    pub sigma_vx: f64,
    pub time_of_flight: f64,
    pub seed: u64,
}

impl InferenceReport {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "candidate_sigma_vy_m_s,residual")?;
        for (c, r) in self.candidates.iter().zip(&self.residuals) {
            writeln!(out, "{c:?},{r:?}")?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let mm = |v: f64| v * 1e3;
        let _ = writeln!(s, "time of flight: {:.3} ms", mm(self.time_of_flight));
        let _ = writeln!(s, "sigma_vx: {:.4} mm/s", mm(self.sigma_vx));
        let _ = writeln!(s, "best sigma_vy: {:.4} mm/s", mm(self.best));
        match self.anisotropy {
            Some(chi) => {
                let _ = writeln!(s, "anisotropy sigma_vx/sigma_vy: {chi:.4}");
            }
            None => {
                let _ = writeln!(s, "anisotropy sigma_vx/sigma_vy: unbounded (best is 0)");
            }
        }
        let _ = writeln!(
            s,
            "bracket (residual <= {} x min): [{:.4}, {:.4}] mm/s",
            self.band,
            mm(self.bracket.0),
            mm(self.bracket.1)
        );
        let _ = writeln!(s, "seed: {}", self.seed);
        s
    }
}

/// Scan `candidates` for the σ_vy whose simulated profile best matches the
/// reference image. The reference timestamp sets the time of flight.
pub fn infer_sigma_vy(
    reference: &AbsorptionImage,
    config: &Config,
    candidates: &[f64],
    seed: u64,
) -> Result<InferenceReport, InferenceError> {
    if candidates.len() < 2 {
        return Err(InferenceError::TooFewCandidates(candidates.len()));
    }
    if let Some(bad) = candidates.iter().find(|c| !c.is_finite() || **c < 0.0) {
        return Err(InferenceError::InvalidCandidate(*bad));
    }
    let region = ProfileRegion::from_imaging(&config.imaging);
    let reference_profile = extract_z_profile(reference, &region).map_err(InferenceError::Reference)?;
    let tof = reference.timestamp;

    let residuals: Vec<f64> = candidates
        .par_iter()
        .map(|&candidate| {
            let trial = || -> Result<f64, InferenceError> {
                let mut cfg = config.clone();
                cfg.kick.sigma_vy = candidate;
                cfg.poisson_noise = false;
                let image = synthesize_image(&cfg, tof, seed)?;
                let profile = extract_z_profile(&image, &region)?;
                profile_residual(&reference_profile, &profile)
            };
            trial().map_err(|e| InferenceError::Candidate {
                candidate,
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;

    let (best_idx, min) =
        residuals.iter().enumerate().fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, v)| if *v < bv { (i, *v) } else { (bi, bv) },
        );
    let best = candidates[best_idx];
    let within: Vec<f64> = candidates
        .iter()
        .zip(&residuals)
        .filter(|(_, r)| **r <= BRACKET_BAND * min)
        .map(|(c, _)| *c)
        .collect();
    let bracket = within.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        (lo.min(*c), hi.max(*c))
    });
    let sigma_vx = config.kick.sigma_vx;

    Ok(InferenceReport {
        candidates: candidates.to_vec(),
        residuals,
        best,
        anisotropy: (best > 0.0).then(|| sigma_vx / best),
        bracket,
        band: BRACKET_BAND,
        sigma_vx,
        time_of_flight: tof,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::reference_config;

    fn flat(value: f64, n: usize) -> DensityProfile {
        DensityProfile {
            z: (0..n).map(|i| i as f64 * 1e-5).collect(),
            values: vec![value; n],
        }
    }

    #[test]
    fn residual_basics() {
        let a = flat(1.0, 10);
        assert_eq!(profile_residual(&a, &a).unwrap(), 0.0);
        assert_eq!(profile_residual(&a, &flat(0.5, 10)).unwrap(), 0.25);
        let shifted = DensityProfile {
            z: a.z.iter().map(|z| z + 1.0).collect(),
            values: a.values.clone(),
        };
        assert!(matches!(profile_residual(&a, &shifted), Err(InferenceError::NoOverlap)));
    }

    #[test]
    fn partial_overlap_uses_covered_points_only() {
        let reference = flat(1.0, 10);
        let trial = DensityProfile {
            z: reference.z[5..].to_vec(),
            values: vec![0.0; 5],
        };
        assert_eq!(profile_residual(&reference, &trial).unwrap(), 1.0);
    }

    #[test]
    fn single_candidate_rejected() {
        let c = reference_config();
        let im = AbsorptionImage::zeros(4, 4, (0.0, 0.0), (1.0, 1.0));
        assert!(matches!(
            infer_sigma_vy(&im, &c, &[0.0195], 1),
            Err(InferenceError::TooFewCandidates(1))
        ));
        assert!(matches!(
            infer_sigma_vy(&im, &c, &[0.0, -1.0], 1),
            Err(InferenceError::InvalidCandidate(_))
        ));
    }

    #[test]
    fn blank_reference_has_no_peak() {
        let c = reference_config();
        let im = AbsorptionImage::zeros(16, 16, (0.0, 0.0), (1e-4, 1e-4));
        assert!(matches!(
            infer_sigma_vy(&im, &c, &[0.0, 0.0195], 1),
            Err(InferenceError::Reference(_))
        ));
    }

    #[test]
    fn closed_loop_small_cloud() {
        let mut c = reference_config();
        c.ensemble.n_atoms = 60_000;
        let reference = synthesize_image(&c, 0.059, 101).unwrap();
        let candidates = [0.0, 0.5 * c.kick.sigma_vx, c.kick.sigma_vx];
        let report = infer_sigma_vy(&reference, &c, &candidates, 202).unwrap();
        assert_eq!(report.best, candidates[1], "{:?}", report.residuals);
        assert!(report.residuals[0] > report.residuals[1]);
        assert!(report.residuals[2] > report.residuals[1]);
        assert!(report.bracket.0 <= report.best && report.best <= report.bracket.1);
        assert!((report.anisotropy.unwrap() - 2.0).abs() < 1e-12);
        let again = infer_sigma_vy(&reference, &c, &candidates, 202).unwrap();
        assert_eq!(report, again);
    }
}
