//! 16-bit binary PGM (P5, maxval 65535) images with a text sidecar.
//!
//! The PGM's top row is the highest z. Grey levels are column densities
//! divided by `scale`; the sidecar (`<image>.txt`) records the scale along
//! with pitch, origin, timestamp and dropped count so an image can be read
//! back in physical units.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::imaging::AbsorptionImage;

pub const MAXVAL: u16 = 65535;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("PGM header invalid at byte {offset}: {message}")]
    Header { offset: usize, message: String },
    #[error("PGM pixel data truncated at byte {offset}: expected {expected} bytes")]
    Truncated { offset: usize, expected: usize },
    #[error("sidecar {path} line {line}: {message}")]
    Sidecar {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("sidecar geometry {sidecar:?} does not match PGM size {pgm:?}")]
    SizeMismatch {
        sidecar: (usize, usize),
        pgm: (usize, usize),
    },
}

/// Path of the sidecar belonging to `image_path`.
pub fn sidecar_path(image_path: &Path) -> PathBuf {
    let mut s = image_path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Grey levels (top row first) and the column density per grey level.
pub fn quantize(image: &AbsorptionImage) -> (Vec<u16>, f64) {
    let peak = image.data.iter().cloned().fold(0.0, f64::max);
    let scale = if peak > 0.0 { peak / MAXVAL as f64 } else { 1.0 };
    let mut grey = Vec::with_capacity(image.data.len());
    for iz in (0..image.pixels_z).rev() {
        for ix in 0..image.pixels_x {
            let v = (image.get(ix, iz) / scale).round();
            grey.push(v.clamp(0.0, MAXVAL as f64) as u16);
        }
    }
    (grey, scale)
}

pub fn encode_pgm(width: usize, height: usize, grey: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{MAXVAL}\n").into_bytes();
    out.reserve(grey.len() * 2);
    for g in grey {
        out.extend_from_slice(&g.to_be_bytes());
    }
    out
}

fn sidecar_text(image: &AbsorptionImage, scale: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "pixels_x = {}", image.pixels_x);
    let _ = writeln!(s, "pixels_z = {}", image.pixels_z);
    let _ = writeln!(s, "pitch_x_m = {:?}", image.pitch.0);
    let _ = writeln!(s, "pitch_z_m = {:?}", image.pitch.1);
    let _ = writeln!(s, "origin_x_m = {:?}", image.origin.0);
    let _ = writeln!(s, "origin_z_m = {:?}", image.origin.1);
    let _ = writeln!(s, "timestamp_s = {:?}", image.timestamp);
    let _ = writeln!(s, "scale = {scale:?}");
    let _ = writeln!(s, "dropped = {}", image.dropped);
    s
}

/// Write `path` and its sidecar; returns both paths.
pub fn write_image(image: &AbsorptionImage, path: &Path) -> Result<(PathBuf, PathBuf), PgmError> {
    let (grey, scale) = quantize(image);
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| PgmError::Io { path: p, source }
    };
    fs::write(path, encode_pgm(image.pixels_x, image.pixels_z, &grey)).map_err(io_err(path))?;
    let side = sidecar_path(path);
    fs::write(&side, sidecar_text(image, scale)).map_err(io_err(&side))?;
    Ok((path.to_path_buf(), side))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, message: impl Into<String>) -> PgmError {
        PgmError::Header {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, PgmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        // only ASCII digits were consumed
        let digits = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        digits.parse().map_err(|_| PgmError::Header {
            offset: start,
            message: format!("{what} out of range"),
        })
    }
}

/// Decode a binary PGM into (width, height, grey levels top row first).
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>), PgmError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.get(..2) != Some(b"P5") {
        return Err(cur.err("magic number is not P5"));
    }
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_pos = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        cur.pos = maxval_pos;
        cur.skip_space_and_comments();
        return Err(cur.err(format!("maxval {maxval} outside 1..=65535")));
    }
    if width == 0 || height == 0 {
        return Err(cur.err("zero image size"));
    }
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(cur.err("expected whitespace before pixel data"));
    }
    cur.pos += 1;
    let bpp = if maxval > 255 { 2 } else { 1 };
    let expected = width * height * bpp;
    let data = &bytes[cur.pos..];
    if data.len() < expected {
        return Err(PgmError::Truncated {
            offset: cur.pos + data.len(),
            expected,
        });
    }
    let grey = if bpp == 2 {
        data[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        data[..expected].iter().map(|b| *b as u16).collect()
    };
    Ok((width, height, grey))
}

fn parse_sidecar(path: &Path, text: &str) -> Result<SidecarFields, PgmError> {
    let err = |line, message: String| PgmError::Sidecar {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut f = SidecarFields::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(i + 1, format!("expected `key = value`, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        let real = || {
            v.parse::<f64>()
                .map_err(|_| err(i + 1, format!("`{k}` is not a number")))
        };
        let count = || {
            v.parse::<usize>()
                .map_err(|_| err(i + 1, format!("`{k}` is not an integer")))
        };
        match k {
            "pixels_x" => f.pixels_x = Some(count()?),
            "pixels_z" => f.pixels_z = Some(count()?),
            "pitch_x_m" => f.pitch_x = Some(real()?),
            "pitch_z_m" => f.pitch_z = Some(real()?),
            "origin_x_m" => f.origin_x = Some(real()?),
            "origin_z_m" => f.origin_z = Some(real()?),
            "timestamp_s" => f.timestamp = Some(real()?),
            "scale" => f.scale = Some(real()?),
            "dropped" => f.dropped = Some(count()?),
            _ => return Err(err(i + 1, format!("unknown key `{k}`"))),
        }
    }
    Ok(f)
}

#[derive(Default)]
struct SidecarFields {
    pixels_x: Option<usize>,
    pixels_z: Option<usize>,
    pitch_x: Option<f64>,
    pitch_z: Option<f64>,
    origin_x: Option<f64>,
    origin_z: Option<f64>,
    timestamp: Option<f64>,
    scale: Option<f64>,
    dropped: Option<usize>,
}

/// Read an image written by [`write_image`].
pub fn read_image(path: &Path) -> Result<AbsorptionImage, PgmError> {
    let bytes = fs::read(path).map_err(|source| PgmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h, grey) = decode_pgm(&bytes)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|source| PgmError::Io {
        path: side.clone(),
        source,
    })?;
    let f = parse_sidecar(&side, &text)?;
    let missing = |key: &str| PgmError::Sidecar {
        path: side.clone(),
        line: 0,
        message: format!("missing `{key}`"),
    };
    let nx = f.pixels_x.ok_or_else(|| missing("pixels_x"))?;
    let nz = f.pixels_z.ok_or_else(|| missing("pixels_z"))?;
    if (nx, nz) != (w, h) {
        return Err(PgmError::SizeMismatch {
            sidecar: (nx, nz),
            pgm: (w, h),
        });
    }
    let scale = f.scale.ok_or_else(|| missing("scale"))?;
    let mut image = AbsorptionImage::zeros(
        nx,
        nz,
        (
            f.origin_x.ok_or_else(|| missing("origin_x_m"))?,
            f.origin_z.ok_or_else(|| missing("origin_z_m"))?,
        ),
        (
            f.pitch_x.ok_or_else(|| missing("pitch_x_m"))?,
            f.pitch_z.ok_or_else(|| missing("pitch_z_m"))?,
        ),
    );
    image.timestamp = f.timestamp.ok_or_else(|| missing("timestamp_s"))?;
    image.dropped = f.dropped.unwrap_or(0);
    for (row, line) in grey.chunks_exact(nx).enumerate() {
        let iz = nz - 1 - row;
        for (ix, g) in line.iter().enumerate() {
            *image.get_mut(ix, iz) = *g as f64 * scale;
        }
    }
    Ok(image)
}
