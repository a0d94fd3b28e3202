//! Synthetic absorption images and the profiles extracted from them.
//!
//! Images are column densities integrated along the line of sight y, binned
//! on the (x, z) camera grid. Row 0 is the lowest z.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::ensemble::AtomEnsemble;
use crate::params::ImagingParams;
use crate::rng::{Purpose, StreamFactory};

/// Atoms per binning chunk; chunking is fixed so merge order never depends
/// on the worker count.
const BIN_CHUNK: usize = 1 << 15;

/// Blur kernels are truncated at this many standard deviations.
pub const BLUR_TRUNCATION: f64 = 4.0;

/// Iteration cap of the Gaussian fit.
pub const FIT_MAX_ITERATIONS: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum ImagingError {
    #[error("imaging field has zero size")]
    EmptyField,
    #[error("profile region does not intersect the image")]
    EmptyRegion,
    #[error("profile region contains no signal")]
    ZeroRegion,
    #[error("calibration needs at least 3 samples at distinct times")]
    DegenerateTimes,
    #[error("calibration track does not describe a fall (curvature {0} px/s²)")]
    NotFalling(f64),
    #[error("gaussian fit needs at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("gaussian fit needs non-negative values with some signal")]
    InvalidValues,
    #[error("gaussian fit did not converge after {0} iterations")]
    NoConvergence(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionImage {
    pub pixels_x: usize,
    pub pixels_z: usize,
    /// Row-major, `data[iz * pixels_x + ix]`, atoms per pixel.
    pub data: Vec<f64>,
    /// Lower-left corner of the field (x, z) in m.
    pub origin: (f64, f64),
    /// Pixel pitch (x, z) in m.
    pub pitch: (f64, f64),
    /// Time since release (s).
    pub timestamp: f64,
    /// Atoms that fell outside the field.
    pub dropped: usize,
}

impl AbsorptionImage {
    pub fn zeros(pixels_x: usize, pixels_z: usize, origin: (f64, f64), pitch: (f64, f64)) -> Self {
        Self {
            pixels_x,
            pixels_z,
            data: vec![0.0; pixels_x * pixels_z],
            origin,
            pitch,
            timestamp: 0.0,
            dropped: 0,
        }
    }

    #[inline]
    pub fn get(&self, ix: usize, iz: usize) -> f64 {
        self.data[iz * self.pixels_x + ix]
    }

    #[inline]
    pub fn get_mut(&mut self, ix: usize, iz: usize) -> &mut f64 {
        &mut self.data[iz * self.pixels_x + ix]
    }

    pub fn x_center(&self, ix: usize) -> f64 {
        self.origin.0 + (ix as f64 + 0.5) * self.pitch.0
    }

    pub fn z_center(&self, iz: usize) -> f64 {
        self.origin.1 + (iz as f64 + 0.5) * self.pitch.1
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Pixel holding the largest value; first in row-major order on ties.
    pub fn peak_pixel(&self) -> (usize, usize) {
        let best = argmax(&self.data);
        (best % self.pixels_x, best / self.pixels_x)
    }

    /// Sum over z of every column: the x-marginal (x centres, values).
    pub fn x_marginal(&self) -> (Vec<f64>, Vec<f64>) {
        let xs = (0..self.pixels_x).map(|ix| self.x_center(ix)).collect();
        let mut vals = vec![0.0; self.pixels_x];
        for row in self.data.chunks_exact(self.pixels_x) {
            for (acc, v) in vals.iter_mut().zip(row) {
                *acc += v;
            }
        }
        (xs, vals)
    }

    /// Same geometry and timestamp, pixel-wise sum.
    pub fn accumulate(&mut self, other: &AbsorptionImage) {
        assert_eq!((self.pixels_x, self.pixels_z), (other.pixels_x, other.pixels_z));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        self.dropped += other.dropped;
    }
}

/// Bin atoms on the (x, z) grid without blur. Returns the image and the
/// number of atoms outside the field (also stored in `dropped`).
pub fn bin_atoms(ensemble: &AtomEnsemble, imaging: &ImagingParams) -> Result<AbsorptionImage, ImagingError> {
    let (nx, nz) = (imaging.pixels_x, imaging.pixels_z);
    if nx == 0 || nz == 0 || !(imaging.field_x > 0.0) || !(imaging.field_z > 0.0) {
        return Err(ImagingError::EmptyField);
    }
    let pitch = imaging.pitch();
    let origin = (imaging.origin_x, imaging.origin_z);

    let partials: Vec<(Vec<u32>, usize)> = ensemble
        .positions
        .par_chunks(BIN_CHUNK)
        .map(|chunk| {
            let mut counts = vec![0u32; nx * nz];
            let mut dropped = 0;
            for p in chunk {
                let fx = ((p[0] - origin.0) / pitch.0).floor();
                let fz = ((p[2] - origin.1) / pitch.1).floor();
                if fx >= 0.0 && fz >= 0.0 && fx < nx as f64 && fz < nz as f64 {
                    counts[fz as usize * nx + fx as usize] += 1;
                } else {
                    dropped += 1;
                }
            }
            (counts, dropped)
        })
        .collect();

    let mut counts = vec![0u64; nx * nz];
    let mut dropped = 0;
    for (part, d) in &partials {
        for (c, p) in counts.iter_mut().zip(part) {
            *c += *p as u64;
        }
        dropped += d;
    }
    Ok(AbsorptionImage {
        pixels_x: nx,
        pixels_z: nz,
        data: counts.into_iter().map(|c| c as f64).collect(),
        origin,
        pitch,
        timestamp: ensemble.time,
        dropped,
    })
}

/// Bin and blur.
pub fn render_image(ensemble: &AtomEnsemble, imaging: &ImagingParams) -> Result<AbsorptionImage, ImagingError> {
    let mut image = bin_atoms(ensemble, imaging)?;
    gaussian_blur(&mut image, imaging.blur_rms);
    Ok(image)
}

fn kernel(sigma: f64) -> Vec<f64> {
    let half = (BLUR_TRUNCATION * sigma).ceil() as usize;
    (0..=2 * half)
        .map(|i| {
            let d = i as f64 - half as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect()
}

/// Spread each source sample over its in-range neighbours with weights
/// renormalized to one, so the sum is conserved at the borders.
fn blur_line(src: &[f64], dst: &mut [f64], kernel: &[f64]) {
    let n = src.len() as isize;
    let half = (kernel.len() / 2) as isize;
    dst.iter_mut().for_each(|d| *d = 0.0);
    for (i, &v) in src.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let i = i as isize;
        let lo = (i - half).max(0);
        let hi = (i + half).min(n - 1);
        let norm: f64 = (lo..=hi).map(|j| kernel[(j - i + half) as usize]).sum();
        for j in lo..=hi {
            dst[j as usize] += v * kernel[(j - i + half) as usize] / norm;
        }
    }
}

/// Separable Gaussian blur of rms `sigma_px` pixels, truncated at
/// [`BLUR_TRUNCATION`] σ. A non-positive width leaves the image unchanged.
pub fn gaussian_blur(image: &mut AbsorptionImage, sigma_px: f64) {
    if !(sigma_px > 0.0) {
        return;
    }
    let k = kernel(sigma_px);
    let (nx, nz) = (image.pixels_x, image.pixels_z);

    let mut rows = vec![0.0; nx * nz];
    rows.par_chunks_mut(nx)
        .zip(image.data.par_chunks(nx))
        .for_each(|(dst, src)| blur_line(src, dst, &k));

    // transpose so columns are contiguous
    let mut cols = vec![0.0; nx * nz];
    for iz in 0..nz {
        for ix in 0..nx {
            cols[ix * nz + iz] = rows[iz * nx + ix];
        }
    }
    let mut cols_out = vec![0.0; nx * nz];
    cols_out
        .par_chunks_mut(nz)
        .zip(cols.par_chunks(nz))
        .for_each(|(dst, src)| blur_line(src, dst, &k));
    for ix in 0..nx {
        for iz in 0..nz {
            image.data[iz * nx + ix] = cols_out[ix * nz + iz];
        }
    }
}

/// Replace every pixel by a Poisson draw with that mean.
pub fn add_poisson_noise(image: &mut AbsorptionImage, seed: u64) {
    let factory = StreamFactory::new(seed, Purpose::ImageNoise);
    image.data.par_iter_mut().enumerate().for_each(|(i, v)| {
        if *v > 0.0 {
            let mut rng = factory.stream(i as u64);
            *v = Poisson::new(*v).map(|p| p.sample(&mut rng)).unwrap_or(*v);
        }
    });
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCalibration {
    /// Vertical pixel pitch (m/pixel).
    pub pitch: f64,
    /// Initial velocity term (pixels/s).
    pub velocity_px: f64,
    /// rms residual of the quadratic fit (pixels).
    pub residual_rms: f64,
}

/// Fit `row = r0 + u·t + (g/2p)·t²` to centre-of-mass tracks of a falling
/// cloud, with rows counted downwards, and return the pitch p.
pub fn calibrate_pixel_size(track: &[(f64, f64)], g: f64) -> Result<PixelCalibration, ImagingError> {
    let mut times: Vec<f64> = track.iter().map(|s| s.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.len() < 3 {
        return Err(ImagingError::DegenerateTimes);
    }
    let n = track.len();
    let design = DMatrix::from_fn(n, 3, |i, j| track[i].0.powi(j as i32));
    let rows = DVector::from_iterator(n, track.iter().map(|s| s.1));
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&rows, 1e-14)
        .map_err(|_| ImagingError::DegenerateTimes)?;
    let curvature = coef[2];
    if !(curvature > 0.0) {
        return Err(ImagingError::NotFalling(curvature));
    }
    let residual = &design * &coef - rows;
    Ok(PixelCalibration {
        pitch: g / (2.0 * curvature),
        velocity_px: coef[1],
        residual_rms: (residual.norm_squared() / n as f64).sqrt(),
    })
}

/// Peak-normalized density profile along z.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    /// Strictly increasing (m).
    pub z: Vec<f64>,
    /// Peak value is 1.
    pub values: Vec<f64>,
}

impl DensityProfile {
    /// Linear interpolation; `None` outside the sampled range.
    pub fn interpolate(&self, z: f64) -> Option<f64> {
        let (first, last) = (*self.z.first()?, *self.z.last()?);
        if z < first || z > last {
            return None;
        }
        let k = self.z.partition_point(|v| *v <= z);
        if k == self.z.len() {
            return self.values.last().copied();
        }
        let (z0, z1) = (self.z[k - 1], self.z[k]);
        let w = (z - z0) / (z1 - z0);
        Some(self.values[k - 1] * (1.0 - w) + self.values[k] * w)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "z_m,value")?;
        for (z, v) in self.z.iter().zip(&self.values) {
            writeln!(out, "{z:?},{v:?}")?;
        }
        Ok(())
    }
}

/// Rectangle used for profile extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRegion {
    /// (x, z) centre in m; `None` centres with [`locate_peak`].
    pub center: Option<(f64, f64)>,
    pub extent_x: f64,
    pub extent_z: f64,
}

impl ProfileRegion {
    pub fn from_imaging(imaging: &ImagingParams) -> Self {
        Self {
            center: None,
            extent_x: imaging.region_x,
            extent_z: imaging.region_z,
        }
    }
}

fn index_range(origin: f64, pitch: f64, n: usize, center: f64, extent: f64) -> Option<(usize, usize)> {
    let lo = ((center - 0.5 * extent - origin) / pitch - 0.5).ceil().max(0.0);
    let hi = ((center + 0.5 * extent - origin) / pitch - 0.5)
        .floor()
        .min(n as f64 - 1.0);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

/// Normalized moving average with Gaussian weights of rms `sigma` samples.
fn smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    if !(sigma > 0.0) {
        return values.to_vec();
    }
    let k = kernel(sigma);
    let half = (k.len() / 2) as isize;
    let n = values.len() as isize;
    (0..n)
        .map(|i| {
            let (mut acc, mut norm) = (0.0, 0.0);
            for j in (i - half).max(0)..=(i + half).min(n - 1) {
                let w = k[(j - i + half) as usize];
                acc += w * values[j as usize];
                norm += w;
            }
            acc / norm
        })
        .collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn column_sums(image: &AbsorptionImage, (x0, x1): (usize, usize)) -> Vec<f64> {
    (0..image.pixels_z)
        .map(|iz| (x0..=x1).map(|ix| image.get(ix, iz)).sum())
        .collect()
}

/// Peak-density location used to centre a profile region.
///
/// Along x the cloud is broad, so the peak is taken on the x-marginal after
/// smoothing it with a Gaussian of rms half the region width. Along z the
/// peak is the largest row sum within the region's columns.
pub fn locate_peak(image: &AbsorptionImage, region: &ProfileRegion) -> (f64, f64) {
    let (_, marginal) = image.x_marginal();
    let sigma_px = 0.5 * region.extent_x / image.pitch.0;
    let ix = argmax(&smooth(&marginal, sigma_px));
    let cx = image.x_center(ix);
    let iz = index_range(image.origin.0, image.pitch.0, image.pixels_x, cx, region.extent_x)
        .map(|cols| argmax(&column_sums(image, cols)))
        .unwrap_or(0);
    (cx, image.z_center(iz))
}

/// Sum pixel rows across the region along x and normalize to unit peak.
/// Without an explicit centre the region is centred by [`locate_peak`].
pub fn extract_z_profile(image: &AbsorptionImage, region: &ProfileRegion) -> Result<DensityProfile, ImagingError> {
    let (cx, cz) = region.center.unwrap_or_else(|| locate_peak(image, region));
    let cols = index_range(image.origin.0, image.pitch.0, image.pixels_x, cx, region.extent_x)
        .ok_or(ImagingError::EmptyRegion)?;
    let (z0, z1) = index_range(image.origin.1, image.pitch.1, image.pixels_z, cz, region.extent_z)
        .ok_or(ImagingError::EmptyRegion)?;
    let values: Vec<f64> = column_sums(image, cols)[z0..=z1].to_vec();
    let peak = values.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(ImagingError::ZeroRegion);
    }
    Ok(DensityProfile {
        z: (z0..=z1).map(|iz| image.z_center(iz)).collect(),
        values: values.into_iter().map(|v| v / peak).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub center: f64,
    /// 1/√e half-width, equal to the standard deviation.
    pub width: f64,
    pub iterations: usize,
}

/// Least-squares fit of `A exp(−(x−μ)²/2σ²)` by Levenberg-Marquardt.
///
/// A fitted width beyond twice the sampled span is reported as
/// non-convergence: such data does not determine a Gaussian.
pub fn fit_gaussian_width(xs: &[f64], ys: &[f64]) -> Result<GaussianFit, ImagingError> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 5 {
        return Err(ImagingError::TooFewPoints(xs.len()));
    }
    if ys.iter().any(|y| !(*y >= 0.0) || !y.is_finite()) || ys.iter().all(|y| *y == 0.0) {
        return Err(ImagingError::InvalidValues);
    }
    let (xmin, xmax) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    let span = xmax - xmin;

    // moment starting point, coordinates relative to the data midpoint
    let shift = 0.5 * (xmin + xmax);
    let total: f64 = ys.iter().sum();
    let mean = xs.iter().zip(ys).map(|(x, y)| (x - shift) * y).sum::<f64>() / total;
    let var = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - shift - mean).powi(2) * y)
        .sum::<f64>()
        / total;
    let amp0 = ys.iter().cloned().fold(0.0, f64::max);
    let mut p = Vector3::new(amp0, mean, var.sqrt().max(span * 1e-3));

    let cost = |p: &Vector3<f64>| -> f64 {
        xs.iter()
            .zip(ys)
            .map(|(x, y)| {
                let d = (x - shift - p[1]) / p[2];
                (p[0] * (-0.5 * d * d).exp() - y).powi(2)
            })
            .sum()
    };
    let mut c = cost(&p);
    let mut lambda = 1e-3;
    for iter in 1..=FIT_MAX_ITERATIONS {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (x, y) in xs.iter().zip(ys) {
            let d = (x - shift - p[1]) / p[2];
            let e = (-0.5 * d * d).exp();
            let r = p[0] * e - y;
            let j = Vector3::new(e, p[0] * e * d / p[2], p[0] * e * d * d / p[2]);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let mut accepted = false;
        for _ in 0..50 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let tc = if trial[2] > 0.0 { cost(&trial) } else { f64::INFINITY };
            if tc <= c {
                let converged = (0..3).all(|k| step[k].abs() <= 1e-12 * (trial[k].abs() + span * 1e-9))
                    || (c - tc) <= 1e-15 * c.max(1e-300);
                p = trial;
                c = tc;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if converged {
                    if p[2] > 2.0 * span {
                        return Err(ImagingError::NoConvergence(iter));
                    }
                    return Ok(GaussianFit {
                        amplitude: p[0],
                        center: p[1] + shift,
                        width: p[2],
                        iterations: iter,
                    });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || p[2] > 1e3 * span {
            return Err(ImagingError::NoConvergence(iter));
        }
    }
    Err(ImagingError::NoConvergence(FIT_MAX_ITERATIONS))
}
