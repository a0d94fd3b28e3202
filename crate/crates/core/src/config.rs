//! Plain-text `key = value` configuration.
//!
//! Every quantity has a base name and a dimension; the key is the base name
//! followed by a unit suffix, e.g. `h0_mm = 3.59` or `temperature_nK = 285`.
//! Accepted suffixes:
//!
//! | dimension   | suffixes                          |
//! |-------------|-----------------------------------|
//! | length      | `m`, `mm`, `um` (or `µm`), `nm`   |
//! | velocity    | `m_s`, `mm_s`                     |
//! | temperature | `K`, `nK`                         |
//! | time        | `s`, `ms`                         |
//! | frequency   | `hz` (ω = 2π f), `rad_s`          |
//! | acceleration| `m_s2`                            |
//!
//! Power-of-ten suffixes are converted by exact division by 10^k. Lists are
//! comma separated. `#` starts a comment. Each quantity may be given once.
//! [`to_config_string`] writes the SI form of every key so that a reload is
//! bit-identical.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::constants::{EvanescentWaveParams, PhysicalConstants};
use crate::params::{EnsembleParams, ImagingParams, MirrorKickModel, Violation};

/// Seed used when a caller does not supply one.
pub const DEFAULT_SEED: u64 = 20050627;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: `{key}` sets `{quantity}` already given on line {first_line}")]
    DuplicateKey {
        key: String,
        quantity: String,
        line: usize,
        first_line: usize,
    },
    #[error("line {line}: `{key}` expects {expected}, got `{value}`")]
    InvalidValue {
        key: String,
        line: usize,
        value: String,
        expected: &'static str,
    },
    #[error("missing required keys: {}", .keys.join(", "))]
    MissingKeys { keys: Vec<String> },
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub constants: PhysicalConstants,
    pub mirror: EvanescentWaveParams,
    pub ensemble: EnsembleParams,
    pub kick: MirrorKickModel,
    pub imaging: ImagingParams,
    pub seed: u64,
    /// Total times of flight since release (s).
    pub tof: Vec<f64>,
    /// Duration the mirror beam is on (s). Recorded, not used by the dynamics.
    pub mirror_window: Option<f64>,
    /// Add Poisson noise to rendered images.
    pub poisson_noise: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dim {
    Length,
    Velocity,
    Temperature,
    Time,
    Frequency,
    Acceleration,
    Plain,
}

impl Dim {
    /// (suffix, multiplier applied as value / divisor * factor)
    fn suffixes(self) -> &'static [(&'static str, Unit)] {
        match self {
            Dim::Length => &[
                ("m", Unit::Pow10(0)),
                ("mm", Unit::Pow10(3)),
                ("um", Unit::Pow10(6)),
                ("µm", Unit::Pow10(6)),
                ("nm", Unit::Pow10(9)),
            ],
            Dim::Velocity => &[("m_s", Unit::Pow10(0)), ("mm_s", Unit::Pow10(3))],
            Dim::Temperature => &[("K", Unit::Pow10(0)), ("nK", Unit::Pow10(9))],
            Dim::Time => &[("s", Unit::Pow10(0)), ("ms", Unit::Pow10(3))],
            Dim::Frequency => &[("rad_s", Unit::Pow10(0)), ("hz", Unit::TwoPi)],
            Dim::Acceleration => &[("m_s2", Unit::Pow10(0))],
            Dim::Plain => &[],
        }
    }

    fn si_suffix(self) -> Option<&'static str> {
        self.suffixes().first().map(|(s, _)| *s)
    }
}

#[derive(Debug, Clone, Copy)]
enum Unit {
    Pow10(i32),
    TwoPi,
}

impl Unit {
    fn to_si(self, v: f64) -> f64 {
        match self {
            Unit::Pow10(0) => v,
            Unit::Pow10(k) => v / 10f64.powi(k),
            Unit::TwoPi => 2.0 * PI * v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Real,
    Count,
    List,
    Flag,
}

struct Quantity {
    name: &'static str,
    dim: Dim,
    kind: Kind,
    required: bool,
}

const fn q(name: &'static str, dim: Dim, kind: Kind, required: bool) -> Quantity {
    Quantity {
        name,
        dim,
        kind,
        required,
    }
}

use Dim::*;
use Kind::*;

const QUANTITIES: &[Quantity] = &[
    q("g", Acceleration, Real, false),
    q("lambda_L", Length, Real, true),
    q("decay_length", Length, Real, true),
    q("eta", Plain, Real, true),
    q("n_atoms", Plain, Count, true),
    q("condensed_fraction", Plain, Real, true),
    q("temperature", Temperature, Real, true),
    q("trap_freq_x", Frequency, Real, true),
    q("trap_freq_perp", Frequency, Real, true),
    q("R_x", Length, Real, true),
    q("V_x", Velocity, Real, true),
    q("V_perp", Velocity, Real, true),
    q("v0_x", Velocity, Real, true),
    q("v0_y", Velocity, Real, true),
    q("v0_z", Velocity, Real, true),
    q("h0", Length, Real, true),
    q("sigma_vx", Velocity, Real, true),
    q("sigma_vy", Velocity, Real, true),
    q("alpha", Plain, Real, true),
    q("sigma_s", Length, Real, true),
    q("pixels_x", Plain, Count, true),
    q("pixels_z", Plain, Count, true),
    q("field_x", Length, Real, true),
    q("field_z", Length, Real, true),
    q("origin_x", Length, Real, true),
    q("origin_z", Length, Real, true),
    q("blur_rms_px", Plain, Real, true),
    q("region_x", Length, Real, true),
    q("region_z", Length, Real, true),
    q("seed", Plain, Count, true),
    q("tof", Time, List, true),
    q("mirror_window", Time, Real, false),
    q("poisson_noise", Plain, Flag, false),
];

#[derive(Debug, Clone)]
enum Value {
    Real(f64),
    Count(u64),
    List(Vec<f64>),
    Flag(bool),
}

/// Resolve a key to (quantity index, unit).
fn resolve_key(key: &str) -> Option<(usize, Option<Unit>)> {
    QUANTITIES.iter().enumerate().find_map(|(i, qd)| {
        if qd.dim == Plain {
            return (key == qd.name).then_some((i, None));
        }
        let rest = key.strip_prefix(qd.name)?.strip_prefix('_')?;
        qd.dim
            .suffixes()
            .iter()
            .find(|(s, _)| *s == rest)
            .map(|(_, u)| (i, Some(*u)))
    })
}

fn key_forms(qd: &Quantity) -> String {
    match qd.dim {
        Plain => qd.name.to_string(),
        dim => {
            let sfx: Vec<&str> = dim.suffixes().iter().map(|(s, _)| *s).filter(|s| *s != "µm").collect();
            format!("{}_{{{}}}", qd.name, sfx.join(","))
        }
    }
}

fn parse_value(qd: &Quantity, unit: Option<Unit>, raw: &str) -> Option<Value> {
    let real = |s: &str| -> Option<f64> {
        let v: f64 = s.trim().parse().ok()?;
        v.is_finite().then(|| unit.map_or(v, |u| u.to_si(v)))
    };
    match qd.kind {
        Real => real(raw).map(Value::Real),
        Count => raw.trim().parse::<u64>().ok().map(Value::Count),
        List => {
            let items: Option<Vec<f64>> = raw.split(',').map(real).collect();
            items.filter(|v| !v.is_empty()).map(Value::List)
        }
        Flag => match raw.trim() {
            "true" | "1" | "yes" | "on" => Some(Value::Flag(true)),
            "false" | "0" | "no" | "off" => Some(Value::Flag(false)),
            _ => None,
        },
    }
}

fn expected(kind: Kind) -> &'static str {
    match kind {
        Real => "a finite number",
        Count => "a non-negative integer",
        List => "a comma-separated list of numbers",
        Flag => "true or false",
    }
}

/// Parse configuration text.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let mut found: HashMap<usize, (Value, usize)> = HashMap::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: "empty key".into(),
            });
        }
        let (qi, unit) = resolve_key(key).ok_or_else(|| ConfigError::UnknownKey {
            key: key.to_string(),
            line,
        })?;
        let qd = &QUANTITIES[qi];
        if let Some((_, first_line)) = found.get(&qi) {
            return Err(ConfigError::DuplicateKey {
                key: key.to_string(),
                quantity: qd.name.to_string(),
                line,
                first_line: *first_line,
            });
        }
        let parsed = parse_value(qd, unit, value).ok_or_else(|| ConfigError::InvalidValue {
            key: key.to_string(),
            line,
            value: value.to_string(),
            expected: expected(qd.kind),
        })?;
        found.insert(qi, (parsed, line));
    }

    let missing: Vec<String> = QUANTITIES
        .iter()
        .enumerate()
        .filter(|(i, qd)| qd.required && !found.contains_key(i))
        .map(|(_, qd)| key_forms(qd))
        .collect();
    if !missing.is_empty() {
        return Err(ConfigError::MissingKeys { keys: missing });
    }

    let index = |name: &str| QUANTITIES.iter().position(|qd| qd.name == name).unwrap();
    let real = |name: &str| match found.get(&index(name)) {
        Some((Value::Real(v), _)) => Some(*v),
        _ => None,
    };
    let count = |name: &str| match found.get(&index(name)) {
        Some((Value::Count(v), _)) => Some(*v),
        _ => None,
    };
    // Required keys are present past this point, and their value kind is
    // fixed by the quantity table.
    let r = |name: &str| real(name).expect("required real");
    let c = |name: &str| count(name).expect("required count");

    let mut constants = PhysicalConstants::default();
    if let Some(g) = real("g") {
        constants.g = g;
    }
    let tof = match found.get(&index("tof")) {
        Some((Value::List(v), _)) => v.clone(),
        _ => unreachable!("tof is required"),
    };
    let poisson_noise = matches!(found.get(&index("poisson_noise")), Some((Value::Flag(true), _)));

    Ok(Config {
        constants,
        mirror: EvanescentWaveParams {
            lambda_l: r("lambda_L"),
            kappa: 1.0 / r("decay_length"),
            eta: r("eta"),
        },
        ensemble: EnsembleParams {
            n_atoms: c("n_atoms") as usize,
            condensed_fraction: r("condensed_fraction"),
            temperature: r("temperature"),
            omega_x: r("trap_freq_x"),
            omega_perp: r("trap_freq_perp"),
            r_x: r("R_x"),
            v_x: r("V_x"),
            v_perp: r("V_perp"),
            v0: [r("v0_x"), r("v0_y"), r("v0_z")],
            h0: r("h0"),
        },
        kick: MirrorKickModel {
            sigma_vx: r("sigma_vx"),
            sigma_vy: r("sigma_vy"),
            alpha: r("alpha"),
            sigma_s: r("sigma_s"),
        },
        imaging: ImagingParams {
            pixels_x: c("pixels_x") as usize,
            pixels_z: c("pixels_z") as usize,
            field_x: r("field_x"),
            field_z: r("field_z"),
            origin_x: r("origin_x"),
            origin_z: r("origin_z"),
            blur_rms: r("blur_rms_px"),
            region_x: r("region_x"),
            region_z: r("region_z"),
        },
        seed: c("seed"),
        tof,
        mirror_window: real("mirror_window"),
        poisson_noise,
    })
}

/// Read and parse a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Serialize every field with SI keys.
pub fn to_config_string(config: &Config) -> String {
    let mut out = String::new();
    let si = |name: &str| {
        let qd = QUANTITIES.iter().find(|qd| qd.name == name).unwrap();
        match qd.dim.si_suffix() {
            Some(s) => format!("{name}_{s}"),
            None => name.to_string(),
        }
    };
    let real = |out: &mut String, name: &str, v: f64| {
        let _ = writeln!(out, "{} = {v:?}", si(name));
    };
    let c = config;
    real(&mut out, "g", c.constants.g);
    real(&mut out, "lambda_L", c.mirror.lambda_l);
    real(&mut out, "decay_length", 1.0 / c.mirror.kappa);
    real(&mut out, "eta", c.mirror.eta);
    let _ = writeln!(out, "n_atoms = {}", c.ensemble.n_atoms);
    real(&mut out, "condensed_fraction", c.ensemble.condensed_fraction);
    real(&mut out, "temperature", c.ensemble.temperature);
    real(&mut out, "trap_freq_x", c.ensemble.omega_x);
    real(&mut out, "trap_freq_perp", c.ensemble.omega_perp);
    real(&mut out, "R_x", c.ensemble.r_x);
    real(&mut out, "V_x", c.ensemble.v_x);
    real(&mut out, "V_perp", c.ensemble.v_perp);
    real(&mut out, "v0_x", c.ensemble.v0[0]);
    real(&mut out, "v0_y", c.ensemble.v0[1]);
    real(&mut out, "v0_z", c.ensemble.v0[2]);
    real(&mut out, "h0", c.ensemble.h0);
    real(&mut out, "sigma_vx", c.kick.sigma_vx);
    real(&mut out, "sigma_vy", c.kick.sigma_vy);
    real(&mut out, "alpha", c.kick.alpha);
    real(&mut out, "sigma_s", c.kick.sigma_s);
    let _ = writeln!(out, "pixels_x = {}", c.imaging.pixels_x);
    let _ = writeln!(out, "pixels_z = {}", c.imaging.pixels_z);
    real(&mut out, "field_x", c.imaging.field_x);
    real(&mut out, "field_z", c.imaging.field_z);
    real(&mut out, "origin_x", c.imaging.origin_x);
    real(&mut out, "origin_z", c.imaging.origin_z);
    real(&mut out, "blur_rms_px", c.imaging.blur_rms);
    real(&mut out, "region_x", c.imaging.region_x);
    real(&mut out, "region_z", c.imaging.region_z);
    let _ = writeln!(out, "seed = {}", c.seed);
    let tof: Vec<String> = c.tof.iter().map(|t| format!("{t:?}")).collect();
    let _ = writeln!(out, "{} = {}", si("tof"), tof.join(", "));
    if let Some(w) = c.mirror_window {
        real(&mut out, "mirror_window", w);
    }
    let _ = writeln!(out, "poisson_noise = {}", c.poisson_noise);
    out
}

/// Check every parameter invariant; returns all violations.
pub fn validate_config(config: &Config) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut check = |ok: bool, field: &str, msg: &str| {
        if !ok {
            v.push(Violation::new(field, msg));
        }
    };
    let c = config;
    check(c.constants.g > 0.0, "g", "g must be positive");
    check(c.constants.h > 0.0, "h", "Planck constant must be positive");
    check(c.constants.m_atom > 0.0, "m_atom", "atomic mass must be positive");

    check(c.mirror.lambda_l > 0.0, "lambda_L", "lambda_L must be positive");
    check(
        c.mirror.kappa > 0.0 && c.mirror.kappa.is_finite(),
        "decay_length",
        "decay_length must be positive",
    );
    check(c.mirror.eta > 1.0, "eta", "eta must exceed 1");

    let e = &c.ensemble;
    check(e.n_atoms >= 1, "n_atoms", "n_atoms must be at least 1");
    check(
        (0.0..=1.0).contains(&e.condensed_fraction),
        "condensed_fraction",
        "condensed_fraction must lie in [0, 1]",
    );
    check(e.temperature >= 0.0, "temperature", "temperature must be non-negative");
    check(e.omega_x > 0.0, "trap_freq_x", "trap_freq_x must be positive");
    check(e.omega_perp > 0.0, "trap_freq_perp", "trap_freq_perp must be positive");
    check(e.r_x >= 0.0, "R_x", "R_x must be non-negative");
    check(e.v_x >= 0.0, "V_x", "V_x must be non-negative");
    check(e.v_perp >= 0.0, "V_perp", "V_perp must be non-negative");
    check(e.h0 > 0.0, "h0", "h0 must be positive");

    let k = &c.kick;
    check(k.sigma_vx >= 0.0, "sigma_vx", "sigma_vx must be non-negative");
    check(k.sigma_vy >= 0.0, "sigma_vy", "sigma_vy must be non-negative");
    check(k.sigma_s >= 0.0, "sigma_s", "sigma_s must be non-negative");
    check((2.0..=5.0).contains(&k.alpha), "alpha", "alpha must lie in [2, 5]");

    let im = &c.imaging;
    check(im.pixels_x > 0, "pixels_x", "pixels_x must be positive");
    check(im.pixels_z > 0, "pixels_z", "pixels_z must be positive");
    check(im.field_x > 0.0, "field_x", "field_x must be positive");
    check(im.field_z > 0.0, "field_z", "field_z must be positive");
    check(im.blur_rms >= 0.0, "blur_rms_px", "blur_rms_px must be non-negative");
    check(im.region_x > 0.0, "region_x", "region_x must be positive");
    check(im.region_z > 0.0, "region_z", "region_z must be positive");

    check(!c.tof.is_empty(), "tof", "at least one time of flight is required");
    check(
        c.tof.iter().all(|t| *t >= 0.0),
        "tof",
        "times of flight must be non-negative",
    );
    if let Some(w) = c.mirror_window {
        check(w >= 0.0, "mirror_window", "mirror_window must be non-negative");
    }
    v
}

/// The reference configuration reproducing the 59 ms profile comparison.
pub const FIG3_CONFIG: &str = include_str!("../configs/fig3_profiles.conf");

/// Parsed [`FIG3_CONFIG`].
pub fn reference_config() -> Config {
    parse_config(FIG3_CONFIG).expect("shipped reference config parses")
}
