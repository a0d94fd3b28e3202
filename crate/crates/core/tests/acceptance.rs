//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rough_mirror::config::{reference_config, DEFAULT_SEED};
use rough_mirror::dynamics::{bounce, simulate_bounce_experiment};
use rough_mirror::ensemble::AtomEnsemble;
use rough_mirror::imaging::{bin_atoms, fit_gaussian_width, gaussian_blur, render_image};
use rough_mirror::inference::{infer_sigma_vy, synthesize_image};
use rough_mirror::theory::{
    angular_integral, anisotropy_chi, chi_alpha4_closed_form, derived_kinematics, sigma_vx_bound, wmax_bound,
    AngularWeight,
};

const ETA: f64 = 1.66;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Trapezoid rule on the ring integrand, independent of the adaptive
/// quadrature under test.
fn trapezoid(weight: AngularWeight, alpha: f64, eta: f64) -> f64 {
    let n = 200_000;
    let h = PI / n as f64;
    let f = |phi: f64| {
        let w = match weight {
            AngularWeight::X => (phi.cos() - eta).powi(2),
            AngularWeight::Y => phi.sin().powi(2),
            AngularWeight::Unit => 1.0,
        };
        w * (1.0 - 2.0 * eta * phi.cos() + eta * eta).powf(-alpha / 2.0)
    };
    let inner: f64 = (1..n).map(|i| f(i as f64 * h)).sum();
    h * (0.5 * f(0.0) + inner + 0.5 * f(PI))
}

fn point_value() -> Outcome {
    let t = Instant::now();
    let chi = anisotropy_chi(4.0, ETA).unwrap().chi;
    let elapsed = t.elapsed().as_secs_f64();
    outcome(
        (chi - 2.12).abs() <= 0.005 && elapsed < 1.0,
        format!("chi(4, 1.66) = {chi:.5}, target 2.12 +/- 0.005, {elapsed:.4} s (< 1 s)"),
    )
}

fn range() -> Outcome {
    let t = Instant::now();
    let alphas: Vec<f64> = (0..=12).map(|i| 2.0 + 0.25 * i as f64).collect();
    let chis: Vec<f64> = alphas.iter().map(|a| anisotropy_chi(*a, ETA).unwrap().chi).collect();
    let (min_idx, min) = chis.iter().enumerate().fold(
        (0, f64::INFINITY),
        |(bi, bv), (i, v)| if *v < bv { (i, *v) } else { (bi, bv) },
    );
    let max = chis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let symmetry = alphas
        .iter()
        .zip(&chis)
        .map(|(a, c)| (c - anisotropy_chi(6.0 - a, ETA).unwrap().chi).abs())
        .fold(0.0, f64::max);
    let elapsed = t.elapsed().as_secs_f64();
    let pass =
        min >= 2.05 - 0.005 && max <= 2.31 + 0.005 && alphas[min_idx] == 3.0 && symmetry <= 1e-8 && elapsed < 5.0;
    outcome(
        pass,
        format!(
            "chi in [{min:.5}, {max:.5}] (band [2.045, 2.315]), min at alpha = {}, max |chi(a) - chi(6-a)| = {symmetry:.1e}, {elapsed:.3} s (< 5 s)",
            alphas[min_idx]
        ),
    )
}

fn closed_form() -> Outcome {
    let worst = [1.1, 1.66, 2.5]
        .iter()
        .map(|eta| (anisotropy_chi(4.0, *eta).unwrap().chi - chi_alpha4_closed_form(*eta).unwrap()).abs())
        .fold(0.0, f64::max);
    outcome(
        worst <= 1e-8,
        format!("max |quadrature - sqrt(2 eta^2 - 1)| over eta in {{1.1, 1.66, 2.5}} = {worst:.1e} (<= 1e-8)"),
    )
}

fn bound_chain() -> Outcome {
    let c = reference_config();
    let constants = c.constants;
    let kappa = 1.0 / 93.8e-9;
    let sigma_s = 3.3e-9;
    let v = (2.0 * constants.g * 3.6e-3).sqrt();
    let lambda_db = constants.de_broglie_wavelength(v);
    let lambda_oracle = rough_mirror::constants::PLANCK / (constants.m_atom * v);

    let ratio = angular_integral(AngularWeight::X, 4.0, ETA).unwrap()
        / angular_integral(AngularWeight::Unit, 4.0, ETA).unwrap();
    let ratio_oracle = trapezoid(AngularWeight::X, 4.0, ETA) / trapezoid(AngularWeight::Unit, 4.0, ETA);

    // back-solve z0 from sigma_vx = 8 v_rec: (8)^2 = wmax ratio
    let amplitude = (64.0 / ratio).sqrt();
    let z0_solved = (amplitude * lambda_db / (4.0 * PI * sigma_s)).ln() / kappa;

    let v_rec = c.mirror.v_rec(&constants);
    let wmax = wmax_bound(sigma_s, kappa, 132e-9, lambda_db).unwrap();
    let bound = sigma_vx_bound(wmax.value, 4.0, ETA, v_rec).unwrap() / v_rec;

    let pass = (lambda_db - 17.3e-9).abs() <= 0.05e-9
        && (lambda_db / lambda_oracle - 1.0).abs() < 1e-12
        && (ratio - 0.6718).abs() <= 5e-5
        && (ratio / ratio_oracle - 1.0).abs() < 1e-8
        && (z0_solved - 132e-9).abs() <= 1e-9
        && wmax.exceeds_unity
        && (bound - 8.00).abs() <= 0.05;
    outcome(
        pass,
        format!(
            "lambda_dB = {:.3} nm, I_x/I_1 = {ratio:.5}, back-solved z0 = {:.2} nm, sigma_vx bound(z0 = 132 nm) = {bound:.3} v_rec (target 8.00 +/- 0.05)",
            lambda_db * 1e9,
            z0_solved * 1e9
        ),
    )
}

fn kinematics() -> Outcome {
    let c = reference_config();
    let k = derived_kinematics(&c.ensemble, &c.constants, None);
    let vx = k.v_x_castin_dum * 1e3;
    let fall = k.fall_time * 1e3;
    outcome(
        (fall - 27.0).abs() <= 0.5 && (vx - 0.89).abs() <= 0.005,
        format!("fall time = {fall:.3} ms (27 +/- 0.5), V_x = {vx:.4} mm/s (0.89 +/- 0.005)"),
    )
}

fn width_budget() -> Outcome {
    let c = reference_config();
    let t = Instant::now();
    let exp = simulate_bounce_experiment(&c, 0.059, DEFAULT_SEED).unwrap();
    let image = render_image(&exp.ensemble, &c.imaging).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    let (xs, ys) = image.x_marginal();
    let fit = fit_gaussian_width(&xs, &ys).unwrap();
    let flight = 0.059 - exp.mean_bounce_time.unwrap();
    let sigma = fit.width / flight;
    let rel = sigma / c.kick.sigma_vx - 1.0;
    outcome(
        rel.abs() <= 0.03 && c.ensemble.n_atoms == 300_000 && elapsed < 10.0,
        format!(
            "fitted width {:.4} mm / post-bounce flight {:.3} ms = {:.3} mm/s vs 39 mm/s ({:+.2}%, limit 3%), n = {}, {elapsed:.2} s (< 10 s)",
            fit.width * 1e3,
            flight * 1e3,
            sigma * 1e3,
            rel * 100.0,
            c.ensemble.n_atoms
        ),
    )
}

fn identifiability() -> Outcome {
    let c = reference_config();
    let sx = c.kick.sigma_vx;
    let candidates = [0.0, 0.5 * sx, sx];
    let mut hits = [0usize; 3];
    let mut rejections = 0;
    for (ti, truth) in candidates.iter().enumerate() {
        for s in 0..10u64 {
            let mut rc = c.clone();
            rc.kick.sigma_vy = *truth;
            let reference = synthesize_image(&rc, 0.059, 1000 + s).unwrap();
            let report = infer_sigma_vy(&reference, &c, &candidates, 5000 + s).unwrap();
            if report.best == *truth {
                hits[ti] += 1;
            }
            if ti == 1 && report.residuals[0] > report.residuals[1] && report.residuals[2] > report.residuals[1] {
                rejections += 1;
            }
        }
    }
    outcome(
        hits.iter().all(|h| *h >= 9) && rejections == 10,
        format!(
            "correct picks per truth (0, sx/2, sx): {}/10, {}/10, {}/10 (need >= 9); isotropic and 1-D both worse at sx/2 in {rejections}/10 seeds",
            hits[0], hits[1], hits[2]
        ),
    )
}

fn conservation() -> Outcome {
    let c = reference_config();
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let nx = Normal::new(-0.0307, 0.005).unwrap();
    let nz = Normal::new(-0.265, 0.005).unwrap();
    let velocities: Vec<[f64; 3]> = (0..n)
        .map(|_| [nx.sample(&mut rng), 0.003 * nx.sample(&mut rng), nz.sample(&mut rng)])
        .collect();
    let mut ens = AtomEnsemble::from_states(vec![[0.0; 3]; n], velocities.clone());
    bounce(&mut ens, &c.kick, 9, false);
    let ke = |v: &[f64; 3]| v.iter().map(|x| x * x).sum::<f64>();
    let energy = velocities
        .iter()
        .zip(&ens.velocities)
        .map(|(a, b)| (ke(b) / ke(a) - 1.0).abs())
        .fold(0.0, f64::max);

    let exp = simulate_bounce_experiment(&c, 0.059, DEFAULT_SEED).unwrap();
    let binned = bin_atoms(&exp.ensemble, &c.imaging).unwrap();
    let counted = binned.total() as usize + binned.dropped;
    let mut blurred = binned.clone();
    gaussian_blur(&mut blurred, 3.0);
    let blur = (blurred.total() / binned.total() - 1.0).abs();
    outcome(
        energy <= 1e-12 && counted == exp.ensemble.len() && blur <= 1e-9,
        format!(
            "max relative KE change over {n} bounces = {energy:.1e} (<= 1e-12), binned + dropped = {counted} of {}, blur sum drift = {blur:.1e} (<= 1e-9)",
            exp.ensemble.len()
        ),
    )
}

fn run_simulate(dir: &Path, threads: usize) -> bool {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fig2_bounce.conf");
    Command::new(env!("CARGO_BIN_EXE_rough-mirror"))
        .args([
            "--threads",
            &threads.to_string(),
            "simulate",
            "--superimpose",
            "--tof",
            "29",
            "--tof",
            "59",
        ])
        .arg("--config")
        .arg(&config)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if !(run_simulate(a.path(), 1) && run_simulate(b.path(), 4)) {
        return outcome(false, "simulate run failed");
    }
    let mut compared = 0;
    let mut differing = Vec::new();
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.txt")
        .collect();
    names.sort();
    for name in &names {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap_or_default();
        compared += 1;
        if x != y {
            differing.push(name.clone());
        }
    }
    let has_kinds = names.iter().any(|n| n.ends_with(".pgm")) && names.iter().any(|n| n.ends_with(".csv"));
    outcome(
        differing.is_empty() && has_kinds,
        format!("--threads 1 vs 4: {compared} files compared (PGM, sidecars, CSV), differing: {differing:?}"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("anisotropy point value", point_value),
        ("anisotropy range and symmetry", range),
        ("closed-form consistency", closed_form),
        ("roughness bound chain", bound_chain),
        ("release kinematics", kinematics),
        ("Monte Carlo width budget", width_budget),
        ("closed-loop sigma_vy identifiability", identifiability),
        ("conservation suite", conservation),
        ("thread-count determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
