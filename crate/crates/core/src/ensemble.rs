//! Initial bimodal cloud: Thomas-Fermi condensate plus Gaussian thermal cloud.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::params::EnsembleParams;
use crate::rng::{Purpose, StreamFactory};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnsembleError {
    #[error("ensemble must contain at least one atom")]
    Empty,
}

/// Simulation state: one position and velocity per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomEnsemble {
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
    pub is_condensed: Vec<bool>,
    /// Time since release (s).
    pub time: f64,
}

impl AtomEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Build an ensemble from explicit states at time zero.
    pub fn from_states(positions: Vec<[f64; 3]>, velocities: Vec<[f64; 3]>) -> Self {
        assert_eq!(positions.len(), velocities.len());
        let n = positions.len();
        Self {
            positions,
            velocities,
            is_condensed: vec![false; n],
            time: 0.0,
        }
    }

    /// Write `x,y,z,vx,vy,vz,is_condensed` rows in SI units.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,y,z,vx,vy,vz,is_condensed")?;
        for ((p, v), c) in self.positions.iter().zip(&self.velocities).zip(&self.is_condensed) {
            writeln!(
                out,
                "{:?},{:?},{:?},{:?},{:?},{:?},{}",
                p[0], p[1], p[2], v[0], v[1], v[2], *c as u8
            )?;
        }
        Ok(())
    }
}

/// Draw a point in the unit ball with density ∝ 1 − |u|².
///
/// Rejection from the enclosing cube; about one proposal in five is kept.
pub fn sample_tf_unit_ball<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let u = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let r2: f64 = u.iter().map(|c| c * c).sum();
        if r2 < 1.0 && rng.random::<f64>() < 1.0 - r2 {
            return u;
        }
    }
}

/// Sample the released cloud.
///
/// The first ⌊f·N⌋ atoms are condensed: x from the projected Thomas-Fermi
/// profile of radius `r_x`, y = z = 0, and velocities from the inverted
/// parabola with radii (V_x, V_⊥, V_⊥). The rest are thermal, Gaussian in
/// position (rms √(k_B T/m)/ω_i) and velocity (rms √(k_B T/m)). All atoms are
/// then offset by (0, 0, h0) and v0.
pub fn sample_initial_ensemble(
    params: &EnsembleParams,
    constants: &PhysicalConstants,
    seed: u64,
) -> Result<AtomEnsemble, EnsembleError> {
    if params.n_atoms == 0 {
        return Err(EnsembleError::Empty);
    }
    let n_condensed = params.n_condensed();
    let factory = StreamFactory::new(seed, Purpose::InitialState);
    let v_th = constants.thermal_velocity(params.temperature);
    let omegas = params.omegas();
    let radii = params.velocity_radii();
    let origin = [0.0, 0.0, params.h0];

    let states: Vec<([f64; 3], [f64; 3])> = (0..params.n_atoms)
        .into_par_iter()
        .map(|i| {
            let mut rng = factory.stream(i as u64);
            let (pos, vel) = if i < n_condensed {
                let x = sample_tf_unit_ball(&mut rng)[0] * params.r_x;
                let u = sample_tf_unit_ball(&mut rng);
                ([x, 0.0, 0.0], [u[0] * radii[0], u[1] * radii[1], u[2] * radii[2]])
            } else {
                let mut pos = [0.0; 3];
                let mut vel = [0.0; 3];
                for axis in 0..3 {
                    let g: f64 = rng.sample(StandardNormal);
                    pos[axis] = g * v_th / omegas[axis];
                }
                for v in vel.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *v = g * v_th;
                }
                (pos, vel)
            };
            (
                [pos[0] + origin[0], pos[1] + origin[1], pos[2] + origin[2]],
                [vel[0] + params.v0[0], vel[1] + params.v0[1], vel[2] + params.v0[2]],
            )
        })
        .collect();

    let (positions, velocities) = states.into_iter().unzip();
    Ok(AtomEnsemble {
        positions,
        velocities,
        is_condensed: (0..params.n_atoms).map(|i| i < n_condensed).collect(),
        time: 0.0,
    })
}

/// Per-axis sample statistics; rms is taken about the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleMoments {
    pub mean_position: [f64; 3],
    pub rms_position: [f64; 3],
    pub mean_velocity: [f64; 3],
    pub rms_velocity: [f64; 3],
}

fn axis_stats(values: &[[f64; 3]]) -> ([f64; 3], [f64; 3]) {
    let n = values.len() as f64;
    let mut mean = [0.0; 3];
    for v in values {
        for a in 0..3 {
            mean[a] += v[a];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 3];
    for v in values {
        for a in 0..3 {
            let d = v[a] - mean[a];
            var[a] += d * d;
        }
    }
    (mean, var.map(|s| (s / n).sqrt()))
}

pub fn ensemble_moments(ensemble: &AtomEnsemble) -> Result<EnsembleMoments, EnsembleError> {
    if ensemble.is_empty() {
        return Err(EnsembleError::Empty);
    }
    let (mean_position, rms_position) = axis_stats(&ensemble.positions);
    let (mean_velocity, rms_velocity) = axis_stats(&ensemble.velocities);
    Ok(EnsembleMoments {
        mean_position,
        rms_position,
        mean_velocity,
        rms_velocity,
    })
}
