//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage, 3 configuration, 4 I/O.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{load_config, to_config_string, validate_config, Config, ConfigError};
use crate::constants::{EvanescentWaveParams, PhysicalConstants};
use crate::dynamics::{simulate_bounce_experiment, SimulationError};
use crate::imaging::{add_poisson_noise, extract_z_profile, render_image, AbsorptionImage, ProfileRegion};
use crate::inference::{infer_sigma_vy, InferenceError};
use crate::pgm::{read_image, write_image, PgmError};
use crate::theory::{anisotropy_chi, sigma_vx_bound, wmax_bound, AngularWeight};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, Parser)]
#[command(name = "rough-mirror", version, about = "Rough atom-mirror bounce simulator")]
pub struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render absorption images and z-profiles at one or more times of flight.
    Simulate(SimulateArgs),
    /// Tabulate the anisotropy χ(α, η) and the roughness bound chain.
    Theory(TheoryArgs),
    /// Scan σ_vy candidates against a reference image.
    Infer(InferArgs),
    /// Check a configuration file and report every violation.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Time of flight in ms; repeatable. Defaults to the config's `tof`.
    #[arg(long = "tof", value_name = "MS")]
    pub tof_ms: Vec<f64>,
    /// Defaults to the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Also write the sum of all images as composite.pgm.
    #[arg(long)]
    pub superimpose: bool,
    /// Also write the final atom states of every run as CSV.
    #[arg(long)]
    pub dump_ensemble: bool,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// Comma-separated values or start:step:stop ranges.
    #[arg(long, value_name = "LIST", required_unless_present = "paper_point")]
    pub alpha_grid: Option<String>,
    #[arg(long, value_name = "LIST", required_unless_present = "paper_point")]
    pub eta_grid: Option<String>,
    /// Single row α = 4, η = 1.66 plus the bound chain.
    #[arg(long, conflicts_with_all = ["alpha_grid", "eta_grid"])]
    pub paper_point: bool,
    /// Classical turning point above the surface (nm).
    #[arg(long, default_value_t = 132.0)]
    pub z0_nm: f64,
    /// Fall height used for the impact de Broglie wavelength (mm).
    #[arg(long, default_value_t = 3.6)]
    pub height_mm: f64,
    /// rms surface roughness (nm).
    #[arg(long, default_value_t = 3.3)]
    pub sigma_s_nm: f64,
    #[arg(long, default_value_t = 93.8)]
    pub decay_length_nm: f64,
    #[arg(long, default_value_t = 780.0)]
    pub lambda_nm: f64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Reference image (PGM with its `.txt` sidecar).
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Candidate σ_vy values in mm/s: a comma list or start:step:stop.
    #[arg(long, value_name = "LIST")]
    pub candidates: String,
    /// Defaults to the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PgmError> for CliError {
    fn from(e: PgmError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Parse `a,b,c` where each item is a number or a `start:step:stop` range
/// (inclusive of stop up to rounding).
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim) {
        let nums: Vec<f64> = item
            .split(':')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("`{item}` is not a number or start:step:stop"))
            })
            .collect::<Result<_, _>>()?;
        match nums[..] {
            [v] if v.is_finite() => out.push(v),
            [start, step, stop] if [start, step, stop].iter().all(|v| v.is_finite()) => {
                if !(step > 0.0) || stop < start {
                    return Err(format!("range `{item}` needs step > 0 and stop >= start"));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                out.extend((0..=n).map(|i| start + i as f64 * step));
            }
            _ => return Err(format!("`{item}` is not a finite number or start:step:stop")),
        }
    }
    if out.is_empty() {
        return Err("grid is empty".into());
    }
    Ok(out)
}

/// Plain-text record of one invocation.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub seed: Option<u64>,
    pub threads: usize,
    pub config: Option<String>,
    pub outputs: Vec<PathBuf>,
    pub started: SystemTime,
    pub duration: std::time::Duration,
    pub version: &'static str,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "subcommand: {}", self.subcommand);
        let _ = writeln!(s, "version: rough-mirror {}", self.version);
        match self.seed {
            Some(seed) => {
                let _ = writeln!(s, "seed: {seed}");
            }
            None => {
                let _ = writeln!(s, "seed: none");
            }
        }
        let _ = writeln!(s, "threads: {}", self.threads);
        let started = self
            .started
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let _ = writeln!(s, "started_unix_s: {started:.3}");
        let _ = writeln!(s, "duration_s: {:.3}", self.duration.as_secs_f64());
        let _ = writeln!(s, "outputs:");
        for o in &self.outputs {
            let size = fs::metadata(o).map(|m| m.len()).unwrap_or(0);
            let _ = writeln!(s, "  {} ({size} bytes)", o.display());
        }
        if let Some(cfg) = &self.config {
            let _ = writeln!(s, "config:");
            for line in cfg.lines() {
                let _ = writeln!(s, "  {line}");
            }
        }
        s
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_with<F>(&mut self, name: &str, body: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| io_error(&path, e))?);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| io_error(&path, e))?;
        self.files.push(path.clone());
        Ok(path)
    }

    fn write_image(&mut self, name: &str, image: &AbsorptionImage) -> Result<(), CliError> {
        let (pgm, sidecar) = write_image(image, &self.path(name))?;
        self.files.push(pgm);
        self.files.push(sidecar);
        Ok(())
    }
}

fn load_valid_config(path: &Path) -> Result<Config, CliError> {
    let config = load_config(path)?;
    let violations = validate_config(&config);
    if violations.is_empty() {
        Ok(config)
    } else {
        let list: Vec<String> = violations
            .iter()
            .map(|v| format!("  {}: {}", v.field, v.message))
            .collect();
        Err(CliError::Config(format!(
            "invalid config {}:\n{}",
            path.display(),
            list.join("\n")
        )))
    }
}

/// File stem shared by every output belonging to one time of flight.
fn tof_stem(tof: f64) -> String {
    format!("tof_{:07.3}ms", tof * 1e3)
}

struct Finished {
    seed: Option<u64>,
    config: Option<String>,
    outputs: Vec<PathBuf>,
    out_dir: PathBuf,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Finished, CliError> {
    let mut config = load_valid_config(&args.config)?;
    if !args.tof_ms.is_empty() {
        config.tof = args.tof_ms.iter().map(|t| t * 1e-3).collect();
    }
    if config.tof.is_empty() {
        return Err(CliError::Usage("at least one --tof is required".into()));
    }
    if let Some(bad) = config.tof.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(CliError::Usage(format!(
            "--tof must be finite and non-negative, got {} ms",
            bad * 1e3
        )));
    }
    let seed = args.seed.unwrap_or(config.seed);
    config.seed = seed;
    let mut out = Outputs::new(&args.out_dir)?;
    let region = ProfileRegion::from_imaging(&config.imaging);

    let mut composite: Option<AbsorptionImage> = None;
    for &tof in &config.tof {
        let exp = simulate_bounce_experiment(&config, tof, seed)?;
        let mut image = render_image(&exp.ensemble, &config.imaging).map_err(|e| CliError::Config(e.to_string()))?;
        if config.poisson_noise {
            add_poisson_noise(&mut image, seed);
        }
        let stem = tof_stem(tof);
        out.write_image(&format!("{stem}.pgm"), &image)?;
        let profile = extract_z_profile(&image, &region).map_err(|e| CliError::Config(format!("{stem}: {e}")))?;
        out.write_with(&format!("{stem}_profile.csv"), |w| profile.write_csv(w))?;
        if args.dump_ensemble {
            out.write_with(&format!("{stem}_ensemble.csv"), |w| exp.ensemble.write_csv(w))?;
        }
        println!(
            "{stem}: {} atoms bounced, {} in field, {} outside",
            exp.bounce.n_bounced,
            exp.ensemble.len() - image.dropped,
            image.dropped
        );
        if args.superimpose {
            match composite.as_mut() {
                Some(c) => {
                    c.accumulate(&image);
                    c.timestamp = tof;
                }
                None => composite = Some(image),
            }
        }
    }
    if let Some(c) = composite {
        out.write_image("composite.pgm", &c)?;
    }
    Ok(Finished {
        seed: Some(seed),
        config: Some(to_config_string(&config)),
        outputs: out.files,
        out_dir: out.dir,
    })
}

const REFERENCE_ALPHA: f64 = 4.0;
const REFERENCE_ETA: f64 = 1.66;

fn cmd_theory(args: &TheoryArgs) -> Result<Finished, CliError> {
    let (alphas, etas) = if args.paper_point {
        (vec![REFERENCE_ALPHA], vec![REFERENCE_ETA])
    } else {
        let grid = |name: &str, g: &Option<String>| {
            parse_grid(g.as_deref().unwrap_or_default()).map_err(|e| CliError::Usage(format!("--{name}: {e}")))
        };
        (grid("alpha-grid", &args.alpha_grid)?, grid("eta-grid", &args.eta_grid)?)
    };
    let mut out = Outputs::new(&args.out_dir)?;

    let mut csv = String::from("alpha,eta,chi,integral_x,integral_y,error\n");
    for &alpha in &alphas {
        for &eta in &etas {
            let row = if !(eta > 1.0) {
                Err(format!("eta must exceed 1, got {eta}"))
            } else {
                anisotropy_chi(alpha, eta).map_err(|e| e.to_string())
            };
            match row {
                Ok(r) => {
                    let _ = writeln!(
                        csv,
                        "{alpha:?},{eta:?},{:?},{:?},{:?},",
                        r.chi, r.numerator_integral, r.denominator_integral
                    );
                    println!("alpha {alpha} eta {eta}: chi = {:.5}", r.chi);
                }
                Err(e) => {
                    let _ = writeln!(csv, "{alpha:?},{eta:?},,,,{}", e.replace(',', ";"));
                    println!("alpha {alpha} eta {eta}: {e}");
                }
            }
        }
    }
    out.write_with("theory.csv", |w| w.write_all(csv.as_bytes()))?;

    if args.paper_point {
        let chain = bound_chain(args).map_err(|e| CliError::Usage(e.to_string()))?;
        out.write_with("bounds.csv", |w| w.write_all(chain.as_bytes()))?;
        print!("{}", chain.replace(',', " = "));
    }
    Ok(Finished {
        seed: None,
        config: None,
        outputs: out.files,
        out_dir: out.dir,
    })
}

/// Quantity,value rows of the roughness bound σ_vx ≤ v_rec √(wmax I_x/I_1).
fn bound_chain(args: &TheoryArgs) -> Result<String, crate::theory::TheoryError> {
    let constants = PhysicalConstants::default();
    let mirror = EvanescentWaveParams::new(args.lambda_nm * 1e-9, args.decay_length_nm * 1e-9, REFERENCE_ETA);
    let h = args.height_mm * 1e-3;
    let impact_velocity = (2.0 * constants.g * h).sqrt();
    let lambda_db = constants.de_broglie_wavelength(impact_velocity);
    let z0 = args.z0_nm * 1e-9;
    let sigma_s = args.sigma_s_nm * 1e-9;
    let wmax = wmax_bound(sigma_s, mirror.kappa, z0, lambda_db)?;
    let ratio = crate::theory::angular_integral(AngularWeight::X, REFERENCE_ALPHA, REFERENCE_ETA)?
        / crate::theory::angular_integral(AngularWeight::Unit, REFERENCE_ALPHA, REFERENCE_ETA)?;
    let v_rec = mirror.v_rec(&constants);
    let sigma_vx = sigma_vx_bound(wmax.value, REFERENCE_ALPHA, REFERENCE_ETA, v_rec)?;
    let mut s = String::from("quantity,value\n");
    let rows: [(&str, f64); 12] = [
        ("alpha", REFERENCE_ALPHA),
        ("eta", REFERENCE_ETA),
        ("fall_height_m", h),
        ("impact_velocity_m_s", impact_velocity),
        ("lambda_db_m", lambda_db),
        ("sigma_s_m", sigma_s),
        ("decay_length_m", mirror.decay_length()),
        ("z0_m", z0),
        ("wmax", wmax.value),
        ("integral_ratio_x_over_unit", ratio),
        ("v_rec_m_s", v_rec),
        ("sigma_vx_bound_m_s", sigma_vx),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v:?}");
    }
    let _ = writeln!(s, "sigma_vx_bound_v_rec,{:?}", sigma_vx / v_rec);
    let _ = writeln!(s, "wmax_exceeds_unity,{}", wmax.exceeds_unity);
    Ok(s)
}

fn cmd_infer(args: &InferArgs) -> Result<Finished, CliError> {
    let candidates: Vec<f64> = parse_grid(&args.candidates)
        .map_err(|e| CliError::Usage(format!("--candidates: {e}")))?
        .into_iter()
        .map(|c| c * 1e-3)
        .collect();
    if candidates.len() < 2 {
        return Err(CliError::Usage(format!(
            "--candidates needs at least 2 values to compare, got {}",
            candidates.len()
        )));
    }
    let config = load_valid_config(&args.config)?;
    let reference = read_image(&args.reference)?;
    let seed = args.seed.unwrap_or(config.seed);
    let report = infer_sigma_vy(&reference, &config, &candidates, seed).map_err(|e| match e {
        InferenceError::TooFewCandidates(_) | InferenceError::InvalidCandidate(_) => CliError::Usage(e.to_string()),
        InferenceError::Reference(_) => CliError::Io(format!("{}: {e}", args.reference.display())),
        other => CliError::Config(other.to_string()),
    })?;
    let mut out = Outputs::new(&args.out_dir)?;
    out.write_with("inference.csv", |w| report.write_csv(w))?;
    let summary = report.summary();
    out.write_with("inference_summary.txt", |w| w.write_all(summary.as_bytes()))?;
    print!("{summary}");
    Ok(Finished {
        seed: Some(seed),
        config: Some(to_config_string(&config)),
        outputs: out.files,
        out_dir: out.dir,
    })
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    load_valid_config(&args.config)?;
    println!("{}: ok", args.config.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let (name, finished) = match &cli.command {
        Command::Simulate(a) => ("simulate", cmd_simulate(a)?),
        Command::Theory(a) => ("theory", cmd_theory(a)?),
        Command::Infer(a) => ("infer", cmd_infer(a)?),
        Command::Validate(a) => return cmd_validate(a),
    };
    let manifest = RunManifest {
        subcommand: name,
        seed: finished.seed,
        threads: rayon::current_num_threads(),
        config: finished.config,
        outputs: finished.outputs,
        started,
        duration: clock.elapsed(),
        version: env!("CARGO_PKG_VERSION"),
    };
    let path = finished.out_dir.join(MANIFEST_NAME);
    fs::write(&path, manifest.render()).map_err(|e| io_error(&path, e))
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", cli.threads);
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os())
}
