//! Independent reference implementations used by the test suites.
//!
//! Nothing here calls into the kernels under test. Each oracle is a plain
//! sequential loop written from the rule statement.

#![allow(dead_code)]

/// Colour at (r, c) for a phase given as its 2x2 origin cell, e.g. "RGGB".
pub fn site(phase: &str, r: usize, c: usize) -> char {
    let cell: Vec<char> = phase.chars().collect();
    cell[(r % 2) * 2 + (c % 2)]
}

/// True when row `r` holds red sites.
fn red_row(phase: &str, r: usize) -> bool {
    site(phase, r, 0) == 'R' || site(phase, r, 1) == 'R'
}

fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if i < 0 {
        (-i) as usize
    } else if i >= n {
        (2 * (n - 1) - i) as usize
    } else {
        i as usize
    }
}

/// Round-half-up mean of integer samples.
fn mean(vals: &[u64]) -> u16 {
    let n = vals.len() as u64;
    let s: u64 = vals.iter().sum();
    let m = (2 * s + n) / (2 * n);
    m.min(65535) as u16
}

fn px(s: &[u16], rows: usize, cols: usize, r: i64, c: i64) -> u64 {
    s[reflect(r, rows) * cols + reflect(c, cols)] as u64
}

/// Returns (R, G, B) planes.
pub fn demosaic_oracle(
    rows: usize,
    cols: usize,
    phase: &str,
    s: &[u16],
    gradient: bool,
) -> (Vec<u16>, Vec<u16>, Vec<u16>) {
    let mut red = vec![0u16; rows * cols];
    let mut green = vec![0u16; rows * cols];
    let mut blue = vec![0u16; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let (ri, ci) = (r as i64, c as i64);
            let p = |dr: i64, dc: i64| px(s, rows, cols, ri + dr, ci + dc);
            let idx = r * cols + c;
            let own = s[idx];
            let cross = [p(-1, 0), p(1, 0), p(0, -1), p(0, 1)];
            let diag = [p(-1, -1), p(-1, 1), p(1, -1), p(1, 1)];
            let horiz = [p(0, -1), p(0, 1)];
            let vert = [p(-1, 0), p(1, 0)];
            let green_at_rb = || {
                if !gradient {
                    return mean(&cross);
                }
                let dh = (horiz[0] as i64 - horiz[1] as i64).abs();
                let dv = (vert[0] as i64 - vert[1] as i64).abs();
                if dh < dv {
                    mean(&horiz)
                } else if dv < dh {
                    mean(&vert)
                } else {
                    mean(&cross)
                }
            };
            match site(phase, r, c) {
                'R' => {
                    red[idx] = own;
                    green[idx] = green_at_rb();
                    blue[idx] = mean(&diag);
                }
                'B' => {
                    blue[idx] = own;
                    green[idx] = green_at_rb();
                    red[idx] = mean(&diag);
                }
                _ => {
                    green[idx] = own;
                    if red_row(phase, r) {
                        red[idx] = mean(&horiz);
                        blue[idx] = mean(&vert);
                    } else {
                        red[idx] = mean(&vert);
                        blue[idx] = mean(&horiz);
                    }
                }
            }
        }
    }
    (red, green, blue)
}

/// `A^-1` by Gauss-Jordan elimination on `[A | I]`, then `x = A^-1 b`.
pub fn inverse_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut aug = vec![vec![0.0; 2 * n]; n];
    for i in 0..n {
        for j in 0..n {
            aug[i][j] = a[i * n + j];
        }
        aug[i][n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))?;
        if aug[piv][col] == 0.0 {
            return None;
        }
        aug.swap(col, piv);
        let p = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                let pivot_row = aug[col].clone();
                for (v, p) in aug[r].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    Some(
        (0..n)
            .map(|i| (0..n).map(|j| aug[i][n + j] * b[j]).sum())
            .collect(),
    )
}

/// Header bytes laid out slot by slot, independent of the codec.
pub fn header_bytes(flag: &str, marker: u8, params: &str, output: &str) -> Vec<u8> {
    let mut v = Vec::with_capacity(260);
    let pad = |v: &mut Vec<u8>, s: &str, width: usize| {
        v.extend_from_slice(s.as_bytes());
        v.extend(std::iter::repeat_n(0u8, width - s.len()));
    };
    pad(&mut v, flag, 29);
    v.push(marker);
    pad(&mut v, params, 200);
    pad(&mut v, output, 30);
    assert_eq!(v.len(), 260);
    v
}

/// Polynomial `sum b_j (x / n)^j` expanded into raw monomial coefficients
/// `a_j = b_j / n^j`. Values over `x = 0..n` stay within `sum |b_j|`.
pub fn bounded_poly(b: &[f64], n: usize) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(j, bj)| bj / (n as f64).powi(j as i32))
        .collect()
}

pub fn eval_naive(a: &[f64], x: f64) -> f64 {
    a.iter().enumerate().map(|(j, aj)| aj * x.powi(j as i32)).sum()
}

/// Max per-coefficient relative error; absolute where the truth is zero.
pub fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| if *w == 0.0 { g.abs() } else { ((g - w) / w).abs() })
        .fold(0.0, f64::max)
}

/// `max_i |(A x - b)_i|`.
pub fn residual_inf(a: &[f64], x: &[f64], b: &[f64]) -> f64 {
    let n = b.len();
    (0..n)
        .map(|i| ((0..n).map(|k| a[i * n + k] * x[k]).sum::<f64>() - b[i]).abs())
        .fold(0.0, f64::max)
}
