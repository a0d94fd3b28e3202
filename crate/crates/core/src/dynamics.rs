//! Ballistic flight under gravity and the stochastic rough-mirror bounce.
//!
//! The mirror is the plane z = 0. A bounce reverses v_z, adds independent
//! Gaussian kicks along x and y, then rescales v_z so that the kinetic energy
//! is unchanged. Every event time is an exact root of the ballistic parabola.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{validate_config, Config};
use crate::constants::PhysicalConstants;
use crate::ensemble::{sample_initial_ensemble, AtomEnsemble, EnsembleError};
use crate::params::{MirrorKickModel, Violation};
use crate::rng::{Purpose, StreamFactory};

/// Kick draws per atom before falling back to a specular bounce.
pub const MAX_KICK_DRAWS: usize = 100;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidConfig(Vec<Violation>),
    #[error("time of flight must be non-negative, got {0} s")]
    NegativeTime(f64),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BounceRecord {
    pub n_bounced: usize,
    /// Applied (δv_x, δv_y) per bounced atom, when requested.
    pub kick_samples: Option<Vec<(f64, f64)>>,
    /// Atoms whose first kick draw exceeded the available energy.
    pub n_energy_clamped: usize,
}

#[inline]
fn advance(p: &mut [f64; 3], v: &mut [f64; 3], dt: f64, g: f64) {
    p[0] += v[0] * dt;
    p[1] += v[1] * dt;
    p[2] += v[2] * dt - 0.5 * g * dt * dt;
    v[2] -= g * dt;
}

/// Closed-form free flight over `dt`.
pub fn propagate_ballistic(ensemble: &mut AtomEnsemble, dt: f64, constants: &PhysicalConstants) {
    let g = constants.g;
    ensemble
        .positions
        .par_iter_mut()
        .zip(ensemble.velocities.par_iter_mut())
        .for_each(|(p, v)| advance(p, v, dt, g));
    ensemble.time += dt;
}

/// Time until an atom at height `z` > 0 with vertical velocity `vz` reaches
/// the mirror. `None` if it starts at or below the plane.
pub fn mirror_arrival_time(z: f64, vz: f64, g: f64) -> Option<f64> {
    if z <= 0.0 {
        return None;
    }
    let s = (vz * vz + 2.0 * g * z).sqrt();
    // avoid cancellation in vz + s for falling atoms
    Some(if vz <= 0.0 { 2.0 * z / (s - vz) } else { (vz + s) / g })
}

/// Reflect an incoming velocity with a given horizontal kick, conserving
/// kinetic energy. `None` when the kick needs more energy than is available.
pub fn apply_kick(v: [f64; 3], dvx: f64, dvy: f64) -> Option<[f64; 3]> {
    if dvx == 0.0 && dvy == 0.0 {
        return Some([v[0], v[1], -v[2]]);
    }
    let vx = v[0] + dvx;
    let vy = v[1] + dvy;
    let radicand = v[2] * v[2] - ((vx * vx - v[0] * v[0]) + (vy * vy - v[1] * v[1]));
    (radicand >= 0.0).then(|| [vx, vy, radicand.sqrt()])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BounceOutcome {
    pub velocity: [f64; 3],
    pub kick: (f64, f64),
    pub resampled: bool,
}

/// Bounce one atom with kicks drawn from `rng`.
///
/// Two standard normals are consumed per draw whatever the widths, so
/// changing one width leaves the other axis's kicks untouched.
pub fn bounce_velocity<R: Rng + ?Sized>(v: [f64; 3], kick: &MirrorKickModel, rng: &mut R) -> BounceOutcome {
    if kick.sigma_vx == 0.0 && kick.sigma_vy == 0.0 {
        return BounceOutcome {
            velocity: [v[0], v[1], -v[2]],
            kick: (0.0, 0.0),
            resampled: false,
        };
    }
    for attempt in 0..MAX_KICK_DRAWS {
        let gx: f64 = rng.sample(StandardNormal);
        let gy: f64 = rng.sample(StandardNormal);
        let dvx = if kick.sigma_vx > 0.0 { kick.sigma_vx * gx } else { 0.0 };
        let dvy = if kick.sigma_vy > 0.0 { kick.sigma_vy * gy } else { 0.0 };
        if let Some(velocity) = apply_kick(v, dvx, dvy) {
            return BounceOutcome {
                velocity,
                kick: (dvx, dvy),
                resampled: attempt > 0,
            };
        }
    }
    BounceOutcome {
        velocity: [v[0], v[1], -v[2]],
        kick: (0.0, 0.0),
        resampled: true,
    }
}

/// Bounce every incoming (v_z < 0) atom in place. Atoms moving up are left
/// untouched and not counted.
pub fn bounce(ensemble: &mut AtomEnsemble, kick: &MirrorKickModel, seed: u64, record_kicks: bool) -> BounceRecord {
    let factory = StreamFactory::new(seed, Purpose::MirrorKick);
    let outcomes: Vec<Option<BounceOutcome>> = ensemble
        .velocities
        .par_iter_mut()
        .enumerate()
        .map(|(i, v)| {
            if v[2] >= 0.0 {
                return None;
            }
            let out = bounce_velocity(*v, kick, &mut factory.stream(i as u64));
            *v = out.velocity;
            Some(out)
        })
        .collect();
    summarize(outcomes.iter().flatten(), record_kicks)
}

fn summarize<'a>(outcomes: impl Iterator<Item = &'a BounceOutcome>, record_kicks: bool) -> BounceRecord {
    let mut record = BounceRecord {
        kick_samples: record_kicks.then(Vec::new),
        ..Default::default()
    };
    for o in outcomes {
        record.n_bounced += 1;
        record.n_energy_clamped += o.resampled as usize;
        if let Some(k) = record.kick_samples.as_mut() {
            k.push(o.kick);
        }
    }
    record
}

/// Result of a full release–fall–bounce–flight run.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub ensemble: AtomEnsemble,
    pub bounce: BounceRecord,
    /// Mean arrival time at the mirror of the atoms that bounced (s).
    pub mean_bounce_time: Option<f64>,
}

/// Release the cloud, let each atom fall to the mirror, bounce it at its own
/// arrival time and fly it to `time_of_flight`. Atoms that have not reached
/// the mirror by then stay in flight. There is at most one bounce per atom.
pub fn simulate_bounce_experiment(
    config: &Config,
    time_of_flight: f64,
    seed: u64,
) -> Result<Experiment, SimulationError> {
    let violations = validate_config(config);
    if !violations.is_empty() {
        return Err(SimulationError::InvalidConfig(violations));
    }
    if time_of_flight < 0.0 || time_of_flight.is_nan() {
        return Err(SimulationError::NegativeTime(time_of_flight));
    }
    let mut ensemble = sample_initial_ensemble(&config.ensemble, &config.constants, seed)?;
    let g = config.constants.g;
    let kick = config.kick;
    let factory = StreamFactory::new(seed, Purpose::MirrorKick);

    let events: Vec<Option<(f64, BounceOutcome)>> = ensemble
        .positions
        .par_iter_mut()
        .zip(ensemble.velocities.par_iter_mut())
        .enumerate()
        .map(|(i, (p, v))| match mirror_arrival_time(p[2], v[2], g) {
            Some(t_hit) if t_hit <= time_of_flight => {
                advance(p, v, t_hit, g);
                p[2] = 0.0;
                let out = bounce_velocity(*v, &kick, &mut factory.stream(i as u64));
                *v = out.velocity;
                advance(p, v, time_of_flight - t_hit, g);
                Some((t_hit, out))
            }
            _ => {
                advance(p, v, time_of_flight, g);
                None
            }
        })
        .collect();
    ensemble.time = time_of_flight;

    let hits: Vec<&(f64, BounceOutcome)> = events.iter().flatten().collect();
    let mean_bounce_time = (!hits.is_empty()).then(|| hits.iter().map(|(t, _)| t).sum::<f64>() / hits.len() as f64);
    let record = summarize(hits.iter().map(|(_, o)| o), false);
    Ok(Experiment {
        ensemble,
        bounce: record,
        mean_bounce_time,
    })
}
