//! Bayer CFA demosaicing of 16-bit mosaics.
//!
//! Two kernels are provided. [`demosaic_bilinear`] averages the nearest
//! same-colour neighbours. [`demosaic_gradient`] does the same for red and
//! blue but picks the green pair along the direction of the smaller green
//! gradient. Both keep every measured sample unchanged.
//!
//! Neighbours outside the image are mirrored about the edge pixel
//! (index `-1` reads `1`, index `n` reads `n - 2`). This keeps the 2x2 CFA
//! parity, so every average only ever mixes sites of the colour it
//! reconstructs. Means round half up in 32-bit integer arithmetic.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::parexec::{parallel_map, Executor};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DemosaicError {
    #[error("bad image: {0}")]
    BadImage(String),
    #[error("unknown CFA phase {0:?}")]
    UnknownPhase(String),
}

/// Colour of the mosaic's origin 2x2 cell, read row by row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CfaPhase {
    #[default]
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl CfaPhase {
    pub const ALL: [CfaPhase; 4] = [CfaPhase::Rggb, CfaPhase::Bggr, CfaPhase::Grbg, CfaPhase::Gbrg];

    /// (row, col) of the red site inside the 2x2 cell.
    const fn red_offset(self) -> (usize, usize) {
        match self {
            CfaPhase::Rggb => (0, 0),
            CfaPhase::Bggr => (1, 1),
            CfaPhase::Grbg => (0, 1),
            CfaPhase::Gbrg => (1, 0),
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            CfaPhase::Rggb => "RGGB",
            CfaPhase::Bggr => "BGGR",
            CfaPhase::Grbg => "GRBG",
            CfaPhase::Gbrg => "GBRG",
        }
    }
}

impl FromStr for CfaPhase {
    type Err = DemosaicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CfaPhase::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| DemosaicError::UnknownPhase(s.into()))
    }
}

impl fmt::Display for CfaPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four averaging cases of a Bayer site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CfaColor {
    Red,
    GreenInRedRow,
    GreenInBlueRow,
    Blue,
}

pub fn cfa_color(phase: CfaPhase, r: usize, c: usize) -> CfaColor {
    let (rr, rc) = phase.red_offset();
    let red_row = (r & 1) == rr;
    let red_col = (c & 1) == rc;
    match (red_row, red_col) {
        (true, true) => CfaColor::Red,
        (true, false) => CfaColor::GreenInRedRow,
        (false, true) => CfaColor::GreenInBlueRow,
        (false, false) => CfaColor::Blue,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BayerImage {
    rows: usize,
    cols: usize,
    phase: CfaPhase,
    samples: Vec<u16>,
}

impl BayerImage {
    pub fn new(rows: usize, cols: usize, phase: CfaPhase, samples: Vec<u16>) -> Result<Self, DemosaicError> {
        if rows < 2 || cols < 2 {
            return Err(DemosaicError::BadImage(alloc::format!(
                "{rows}x{cols} is smaller than one 2x2 cell"
            )));
        }
        if rows.checked_mul(cols) != Some(samples.len()) {
            return Err(DemosaicError::BadImage(alloc::format!(
                "{} samples for {rows}x{cols}",
                samples.len()
            )));
        }
        Ok(BayerImage { rows, cols, phase, samples })
    }

    /// Reads row-major little-endian `u16` samples.
    pub fn from_le_bytes(rows: usize, cols: usize, phase: CfaPhase, bytes: &[u8]) -> Result<Self, DemosaicError> {
        if !bytes.len().is_multiple_of(2) {
            return Err(DemosaicError::BadImage("odd payload length".into()));
        }
        let samples = bytes
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect();
        Self::new(rows, cols, phase, samples)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn phase(&self) -> CfaPhase {
        self.phase
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    pub fn get(&self, r: usize, c: usize) -> u16 {
        self.samples[r * self.cols + c]
    }

    /// Sample at a possibly out-of-range position, mirrored about the edge.
    #[inline]
    fn at(&self, r: isize, c: isize) -> u32 {
        let r = mirror(r, self.rows);
        let c = mirror(c, self.cols);
        self.samples[r * self.cols + c] as u32
    }
}

#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = if i < 0 {
        -i
    } else if i >= n {
        2 * n - 2 - i
    } else {
        i
    };
    m as usize
}

/// Three row-major planes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub rows: usize,
    pub cols: usize,
    pub red: Vec<u16>,
    pub green: Vec<u16>,
    pub blue: Vec<u16>,
}

impl RgbImage {
    fn from_pixels(rows: usize, cols: usize, pixels: Vec<[u16; 3]>) -> Self {
        let mut red = Vec::with_capacity(pixels.len());
        let mut green = Vec::with_capacity(pixels.len());
        let mut blue = Vec::with_capacity(pixels.len());
        for [r, g, b] in pixels {
            red.push(r);
            green.push(g);
            blue.push(b);
        }
        RgbImage { rows, cols, red, green, blue }
    }

    pub fn planes(&self) -> [&[u16]; 3] {
        [&self.red, &self.green, &self.blue]
    }

    pub fn pixel(&self, r: usize, c: usize) -> [u16; 3] {
        let i = r * self.cols + c;
        [self.red[i], self.green[i], self.blue[i]]
    }

    /// R, G and B planes back to back, little-endian.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.red.len() * 6);
        for plane in self.planes() {
            for v in plane {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_le_bytes(rows: usize, cols: usize, bytes: &[u8]) -> Option<Self> {
        let n = rows.checked_mul(cols)?;
        if bytes.len() != n.checked_mul(6)? {
            return None;
        }
        let plane = |k: usize| -> Vec<u16> {
            bytes[k * 2 * n..(k + 1) * 2 * n]
                .chunks_exact(2)
                .map(|b| u16::from_le_bytes([b[0], b[1]]))
                .collect()
        };
        Some(RgbImage { rows, cols, red: plane(0), green: plane(1), blue: plane(2) })
    }
}

#[inline]
fn mean2(a: u32, b: u32) -> u16 {
    (a + b).div_ceil(2).min(u16::MAX as u32) as u16
}

#[inline]
fn mean4(a: u32, b: u32, c: u32, d: u32) -> u16 {
    ((a + b + c + d + 2) / 4).min(u16::MAX as u32) as u16
}

/// How green is filled in at red and blue sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GreenRule {
    Cross,
    Gradient,
}

#[inline]
fn interpolate(img: &BayerImage, r: usize, c: usize, rule: GreenRule) -> [u16; 3] {
    let (ri, ci) = (r as isize, c as isize);
    let here = img.get(r, c);
    let n = img.at(ri - 1, ci);
    let s = img.at(ri + 1, ci);
    let w = img.at(ri, ci - 1);
    let e = img.at(ri, ci + 1);
    match cfa_color(img.phase, r, c) {
        color @ (CfaColor::Red | CfaColor::Blue) => {
            let diag = mean4(
                img.at(ri - 1, ci - 1),
                img.at(ri - 1, ci + 1),
                img.at(ri + 1, ci - 1),
                img.at(ri + 1, ci + 1),
            );
            let green = match rule {
                GreenRule::Cross => mean4(n, s, w, e),
                GreenRule::Gradient => {
                    let dh = w.abs_diff(e);
                    let dv = n.abs_diff(s);
                    if dh < dv {
                        mean2(w, e)
                    } else if dv < dh {
                        mean2(n, s)
                    } else {
                        mean4(n, s, w, e)
                    }
                }
            };
            if color == CfaColor::Red {
                [here, green, diag]
            } else {
                [diag, green, here]
            }
        }
        CfaColor::GreenInRedRow => [mean2(w, e), here, mean2(n, s)],
        CfaColor::GreenInBlueRow => [mean2(n, s), here, mean2(w, e)],
    }
}

fn run(exec: &dyn Executor, img: &BayerImage, rule: GreenRule) -> RgbImage {
    let cols = img.cols;
    let pixels = parallel_map(exec, img.rows * cols, |i| interpolate(img, i / cols, i % cols, rule));
    RgbImage::from_pixels(img.rows, cols, pixels)
}

/// Four-case bilinear demosaicing.
///
/// Red site: green from the N/S/E/W mean, blue from the diagonal mean.
/// Blue site: the mirror image. Green in a red row: red from W/E, blue from
/// N/S. Green in a blue row: red from N/S, blue from W/E.
pub fn demosaic_bilinear(exec: &dyn Executor, img: &BayerImage) -> RgbImage {
    run(exec, img, GreenRule::Cross)
}

/// Gradient-directed demosaicing: at red and blue sites green comes from the
/// horizontal pair when `|W - E| < |N - S|`, from the vertical pair when the
/// reverse holds, and from all four on a tie. Red and blue follow the
/// bilinear rule.
pub fn demosaic_gradient(exec: &dyn Executor, img: &BayerImage) -> RgbImage {
    run(exec, img, GreenRule::Gradient)
}
