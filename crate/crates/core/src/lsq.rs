//! Least-squares polynomial fitting through the normal equations.
//!
//! For samples `(x_i, y_i)` and order `m` the coefficients of
//! `f(x) = a_0 + a_1 x + ... + a_m x^m` solve `A a = B` with
//!
//! ```text
//! A[j][k] = S_(j+k),   S_p = sum x_i^p
//! B[j]    = T_j,       T_j = sum x_i^j y_i
//! ```
//!
//! Sums run through [`reduce_sum`], so fits are bitwise reproducible for
//! any worker count. Scan lines use `x_i = i`, the 0-based pixel index.
//! The coefficient basis is the raw monomial one; no centering or scaling
//! of `x` is applied, which is why the order is capped at [`MAX_ORDER`].

use alloc::vec;
use alloc::vec::Vec;

use crate::parexec::{parallel_map_grain, reduce_sum, Executor, Sequential};

pub const MAX_ORDER: usize = 8;

/// Relative pivot size below which [`solve_linear`] reports a singular system.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LsqError {
    #[error("{n} points cannot determine an order-{m} polynomial")]
    InsufficientPoints { n: usize, m: usize },
    #[error("singular system at pivot row {0}")]
    Singular(usize),
    #[error("order {0} exceeds the supported maximum of {MAX_ORDER}")]
    OrderTooHigh(usize),
    #[error("non-finite input value at index {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
}

/// `x^p` by repeated multiplication.
#[inline]
fn pow(x: f64, p: usize) -> f64 {
    let mut acc = 1.0;
    for _ in 0..p {
        acc *= x;
    }
    acc
}

/// `S_0 ..= S_max_p`.
pub fn power_sums(exec: &dyn Executor, xs: &[f64], max_p: usize) -> Vec<f64> {
    (0..=max_p)
        .map(|p| reduce_sum(exec, xs.len(), |i| pow(xs[i], p)))
        .collect()
}

/// `T_0 ..= T_m`.
pub fn moment_sums(exec: &dyn Executor, xs: &[f64], ys: &[f64], m: usize) -> Vec<f64> {
    (0..=m)
        .map(|j| reduce_sum(exec, xs.len(), |i| pow(xs[i], j) * ys[i]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalSystem {
    order: usize,
    /// row-major, `(order + 1)^2` entries
    a: Vec<f64>,
    b: Vec<f64>,
}

impl NormalSystem {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.order + 1
    }

    pub fn a(&self, j: usize, k: usize) -> f64 {
        self.a[j * self.dim() + k]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn solve(&self) -> Result<Vec<f64>, LsqError> {
        solve_linear(&self.a, &self.b)
    }
}

pub fn build_normal_system(
    exec: &dyn Executor,
    xs: &[f64],
    ys: &[f64],
    m: usize,
) -> Result<NormalSystem, LsqError> {
    if xs.len() != ys.len() {
        return Err(LsqError::DimensionMismatch("xs and ys differ in length"));
    }
    if xs.len() < m + 1 {
        return Err(LsqError::InsufficientPoints { n: xs.len(), m });
    }
    let s = power_sums(exec, xs, 2 * m);
    let b = moment_sums(exec, xs, ys, m);
    let dim = m + 1;
    let mut a = vec![0.0; dim * dim];
    for j in 0..dim {
        for k in 0..dim {
            a[j * dim + k] = s[j + k];
        }
    }
    Ok(NormalSystem { order: m, a, b })
}

/// Power of two close to `1 / sqrt(|v|)`; 1 for zero or non-finite `v`.
///
/// Scaling by powers of two is exact, so equilibrating with these factors
/// introduces no rounding.
fn balance_factor(v: f64) -> f64 {
    let v = v.abs();
    if v == 0.0 || !v.is_finite() {
        return 1.0;
    }
    let exp = ((v.to_bits() >> 52) & 0x7ff) as i64 - 1023;
    // subnormals land here with exp = -1023, close enough for balancing
    let half = -(exp.div_euclid(2));
    f64::from_bits(((half + 1023).clamp(1, 2046) as u64) << 52)
}

/// Solves `A x = b` for a square row-major `A`.
///
/// Rows and columns are first balanced with power-of-two factors taken from
/// the diagonal, then Gaussian elimination with partial pivoting runs on the
/// balanced matrix. A pivot smaller than [`SINGULAR_TOLERANCE`] times the
/// largest balanced entry is reported as [`LsqError::Singular`].
pub fn solve_linear(a: &[f64], b: &[f64]) -> Result<Vec<f64>, LsqError> {
    let n = b.len();
    if a.len() != n * n {
        return Err(LsqError::DimensionMismatch("matrix is not square or does not match rhs"));
    }
    let d: Vec<f64> = (0..n).map(|i| balance_factor(a[i * n + i])).collect();
    let mut m: Vec<f64> = (0..n * n).map(|idx| a[idx] * d[idx / n] * d[idx % n]).collect();
    let mut rhs: Vec<f64> = (0..n).map(|i| b[i] * d[i]).collect();

    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let threshold = SINGULAR_TOLERANCE * scale;

    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, m[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot.is_nan() || pivot < threshold || pivot == 0.0 {
            return Err(LsqError::Singular(col));
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            rhs.swap(col, pivot_row);
        }
        let p = m[col * n + col];
        for r in col + 1..n {
            let factor = m[r * n + col] / p;
            if factor == 0.0 {
                continue;
            }
            m[r * n + col] = 0.0;
            for k in col + 1..n {
                m[r * n + k] -= factor * m[col * n + k];
            }
            rhs[r] -= factor * rhs[col];
        }
    }

    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for k in r + 1..n {
            acc -= m[r * n + k] * x[k];
        }
        x[r] = acc / m[r * n + r];
    }
    for (xi, di) in x.iter_mut().zip(&d) {
        *xi *= di;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    /// `a_0 ..= a_m`
    pub coeffs: Vec<f64>,
    /// Sum of squared residuals over the fitted points.
    pub sse: f64,
}

impl PolyFit {
    pub fn order(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        evaluate(&self.coeffs, x)
    }
}

/// Horner evaluation of `coeffs[0] + coeffs[1] x + ...`.
pub fn evaluate(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

pub fn sse(exec: &dyn Executor, coeffs: &[f64], xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    reduce_sum(exec, n, |i| {
        let r = ys[i] - evaluate(coeffs, xs[i]);
        r * r
    })
}

pub fn polyfit(exec: &dyn Executor, xs: &[f64], ys: &[f64], m: usize) -> Result<PolyFit, LsqError> {
    if m > MAX_ORDER {
        return Err(LsqError::OrderTooHigh(m));
    }
    if let Some(i) = xs.iter().chain(ys).position(|v| !v.is_finite()) {
        return Err(LsqError::NonFinite(i % xs.len().max(1)));
    }
    let system = build_normal_system(exec, xs, ys, m)?;
    let coeffs = system.solve()?;
    let sse = sse(exec, &coeffs, xs, ys);
    Ok(PolyFit { coeffs, sse })
}

/// Abscissae `0, 1, ..., n-1`.
pub fn pixel_positions(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}

/// Equally long scan lines, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanLineSet {
    lines: usize,
    pixels: usize,
    y: Vec<f64>,
}

impl ScanLineSet {
    pub fn new(lines: usize, pixels: usize, y: Vec<f64>) -> Result<Self, LsqError> {
        if lines == 0 || pixels < 2 {
            return Err(LsqError::DimensionMismatch("need at least one line of two pixels"));
        }
        if lines.checked_mul(pixels) != Some(y.len()) {
            return Err(LsqError::DimensionMismatch("sample count is not lines x pixels"));
        }
        Ok(ScanLineSet { lines, pixels, y })
    }

    /// Little-endian `f32` or `f64` samples, per `elem_size` (4 or 8).
    pub fn from_le_bytes(lines: usize, pixels: usize, elem_size: usize, bytes: &[u8]) -> Result<Self, LsqError> {
        let y: Vec<f64> = match elem_size {
            4 => bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect(),
            8 => bytes
                .chunks_exact(8)
                .map(|b| {
                    let mut w = [0u8; 8];
                    w.copy_from_slice(b);
                    f64::from_le_bytes(w)
                })
                .collect(),
            _ => return Err(LsqError::DimensionMismatch("element size must be 4 or 8")),
        };
        if !bytes.len().is_multiple_of(elem_size) {
            return Err(LsqError::DimensionMismatch("payload is not a whole number of samples"));
        }
        Self::new(lines, pixels, y)
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    pub fn line(&self, i: usize) -> &[f64] {
        &self.y[i * self.pixels..(i + 1) * self.pixels]
    }
}

/// Fits every scan line independently. Lines run in parallel; a failing
/// line does not affect the others.
pub fn batch_fit(exec: &dyn Executor, data: &ScanLineSet, m: usize) -> Vec<Result<PolyFit, LsqError>> {
    let xs = pixel_positions(data.pixels);
    parallel_map_grain(exec, data.lines, 1, |i| polyfit(&Sequential, &xs, data.line(i), m))
}

/// Per line `a_0 ..= a_m` then the SSE, all little-endian `f64`. Failed
/// lines are written as NaN.
pub fn encode_fits(fits: &[Result<PolyFit, LsqError>], m: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(fits.len() * (m + 2) * 8);
    for fit in fits {
        match fit {
            Ok(f) => {
                for c in f.coeffs.iter().chain(core::iter::once(&f.sse)) {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
            Err(_) => {
                for _ in 0..m + 2 {
                    out.extend_from_slice(&f64::NAN.to_le_bytes());
                }
            }
        }
    }
    out
}

/// Inverse of [`encode_fits`]; NaN rows come back as `None`.
pub fn decode_fits(bytes: &[u8], m: usize) -> Option<Vec<Option<PolyFit>>> {
    let row = (m + 2) * 8;
    if !bytes.len().is_multiple_of(row) {
        return None;
    }
    Some(
        bytes
            .chunks_exact(row)
            .map(|chunk| {
                let vals: Vec<f64> = chunk
                    .chunks_exact(8)
                    .map(|b| {
                        let mut w = [0u8; 8];
                        w.copy_from_slice(b);
                        f64::from_le_bytes(w)
                    })
                    .collect();
                if vals.iter().any(|v| v.is_nan()) {
                    None
                } else {
                    Some(PolyFit { coeffs: vals[..=m].to_vec(), sse: vals[m + 1] })
                }
            })
            .collect(),
    )
}
