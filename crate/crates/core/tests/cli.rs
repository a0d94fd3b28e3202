use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rough-mirror"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    (
        status.code().unwrap_or(-1),
        String::from_utf8_lossy(&stdout).into_owned(),
        String::from_utf8_lossy(&stderr).into_owned(),
    )
}

/// Small cloud so each run stays fast.
fn small_config(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(config("fig3_profiles.conf")).unwrap();
    let text: String = text
        .lines()
        .map(|l| {
            if l.trim_start().starts_with("n_atoms") {
                "n_atoms = 20000"
            } else {
                l
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let path = dir.join("small.conf");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.conf");
    let (code, _, err) = run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(&missing)
        .arg("--out-dir")
        .arg(dir.path()));
    assert_eq!(code, 3);
    assert!(err.contains(&missing.display().to_string()), "{err}");
}

#[test]
fn invalid_config_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("fig3_profiles.conf"))
        .unwrap()
        .replace("eta = 1.66", "eta = 0.9");
    let path = dir.path().join("bad.conf");
    fs::write(&path, text).unwrap();
    let (code, _, err) = run(bin().arg("validate").arg("--config").arg(&path));
    assert_eq!(code, 3);
    assert!(err.contains("eta"), "{err}");
    let (code, out, _) = run(bin().arg("validate").arg("--config").arg(config("fig2_bounce.conf")));
    assert_eq!(code, 0);
    assert!(out.contains("ok"));
}

#[test]
fn zero_tof_images_the_cloud_at_release_height() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let (code, _, err) = run(bin()
        .args(["simulate", "--tof", "0", "--dump-ensemble", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out));
    assert_eq!(code, 0, "{err}");
    let image = rough_mirror::pgm::read_image(&out.join("tof_000.000ms.pgm")).unwrap();
    assert_eq!(image.timestamp, 0.0);
    let (_, iz) = image.peak_pixel();
    assert!((image.z_center(iz) - 3.59e-3).abs() < 2.0 * image.pitch.1);

    let csv = fs::read_to_string(out.join("tof_000.000ms_ensemble.csv")).unwrap();
    assert_eq!(csv.lines().count(), 20_001);
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("subcommand: simulate"));
    for line in manifest.lines().filter(|l| l.ends_with(" bytes)")) {
        let path = line.trim().rsplit_once(" (").unwrap().0;
        assert!(fs::metadata(path).unwrap().len() > 0, "{path}");
    }
}

#[test]
fn multi_delay_run_with_composite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let mut cmd = bin();
    cmd.args(["simulate", "--superimpose", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out);
    for t in ["29", "34", "39", "44", "49"] {
        cmd.args(["--tof", t]);
    }
    let (code, _, err) = run(&mut cmd);
    assert_eq!(code, 0, "{err}");
    let images: Vec<_> = ["029", "034", "039", "044", "049"]
        .iter()
        .map(|t| rough_mirror::pgm::read_image(&out.join(format!("tof_{t}.000ms.pgm"))).unwrap())
        .collect();
    let composite = rough_mirror::pgm::read_image(&out.join("composite.pgm")).unwrap();
    let sum: f64 = images.iter().map(|i| i.total()).sum();
    assert!((composite.total() / sum - 1.0).abs() < 1e-3);
}

#[test]
fn theory_grid_with_singular_eta_keeps_other_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(bin()
        .args([
            "theory",
            "--alpha-grid",
            "2,3,4,5",
            "--eta-grid",
            "1.0,1.66",
            "--out-dir",
        ])
        .arg(dir.path()));
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(dir.path().join("theory.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 6);
        if cols[1] == "1.0" {
            assert!(cols[2].is_empty() && !cols[5].is_empty());
        } else {
            let chi: f64 = cols[2].parse().unwrap();
            assert!((2.05..=2.31).contains(&chi), "{chi}");
        }
    }
}

#[test]
fn theory_paper_point() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(bin().args(["theory", "--paper-point", "--out-dir"]).arg(dir.path()));
    assert_eq!(code, 0);
    assert!(out.contains("chi = 2.12"));
    let csv = fs::read_to_string(dir.path().join("theory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let bounds = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    let v: f64 = bounds
        .lines()
        .find_map(|l| l.strip_prefix("sigma_vx_bound_v_rec,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((v - 8.0).abs() < 0.05);
}

#[test]
fn theory_bad_grid_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(bin()
        .args(["theory", "--alpha-grid", "5:0.5:2", "--eta-grid", "1.66", "--out-dir"])
        .arg(dir.path()));
    assert_eq!(code, 2);
}

fn reference(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = small_config(dir);
    let out = dir.join("ref");
    let (code, _, err) = run(bin()
        .args(["simulate", "--tof", "59", "--seed", "3", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out));
    assert_eq!(code, 0, "{err}");
    (cfg, out.join("tof_059.000ms.pgm"))
}

#[test]
fn infer_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, pgm) = reference(dir.path());
    let out = dir.path().join("inf");
    let (code, stdout, err) = run(bin()
        .args(["infer", "--candidates", "0,19.5,39", "--seed", "3", "--reference"])
        .arg(&pgm)
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out));
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("best sigma_vy: 19.5000 mm/s"), "{stdout}");
    let csv = fs::read_to_string(out.join("inference.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("candidate_sigma_vy_m_s,residual"));
    assert_eq!(csv.lines().count(), 4);

    let (code, _, err) = run(bin()
        .args(["infer", "--candidates", "19.5", "--reference"])
        .arg(&pgm)
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out));
    assert_eq!(code, 2);
    assert!(err.contains("at least 2"), "{err}");

    let bad = dir.path().join("bad.pgm");
    let mut bytes = fs::read(&pgm).unwrap();
    bytes[8] = b'x';
    fs::write(&bad, bytes).unwrap();
    fs::copy(
        rough_mirror::pgm::sidecar_path(&pgm),
        rough_mirror::pgm::sidecar_path(&bad),
    )
    .unwrap();
    let (code, _, err) = run(bin()
        .args(["infer", "--candidates", "0,19.5", "--reference"])
        .arg(&bad)
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out));
    assert_eq!(code, 4);
    assert!(err.contains("byte 8"), "{err}");
}

#[test]
fn unwritable_out_dir_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let (code, _, _) = run(bin()
        .args(["theory", "--paper-point", "--out-dir"])
        .arg(blocker.join("sub")));
    assert_eq!(code, 4);
}
