//! Input and output file formats: binary PGM (P5) and CSV scan lines.

use std::io::{self, Read, Write};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad format: {0}")]
    BadFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

fn bad(msg: impl Into<String>) -> FormatError {
    FormatError::BadFormat(msg.into())
}

/// A single-channel image with up to 16 bits per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub rows: usize,
    pub cols: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Pgm {
    /// Samples as little-endian u16, row-major.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.samples.iter().flat_map(|s| s.to_le_bytes()).collect()
    }
}

/// Skips whitespace and `#` comments, then reads one decimal token.
fn header_token(bytes: &[u8], pos: &mut usize) -> Result<usize, FormatError> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(_) => break,
            None => return Err(bad("PGM header ends early")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("PGM header field is not a number"))
}

/// Parses a binary PGM. Samples are big-endian when maxval exceeds 255.
pub fn parse_pgm(bytes: &[u8]) -> Result<Pgm, FormatError> {
    if !bytes.starts_with(b"P5") {
        return Err(bad("not a binary PGM (missing P5 magic)"));
    }
    let mut pos = 2;
    let cols = header_token(bytes, &mut pos)?;
    let rows = header_token(bytes, &mut pos)?;
    let maxval = header_token(bytes, &mut pos)?;
    if cols == 0 || rows == 0 {
        return Err(bad("PGM has zero width or height"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad(format!("PGM maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("PGM header not followed by whitespace"));
    }
    pos += 1;
    let width = if maxval > 255 { 2 } else { 1 };
    let n = rows.checked_mul(cols).ok_or_else(|| bad("PGM dimensions overflow"))?;
    let raster = &bytes[pos..];
    if raster.len() != n * width {
        return Err(bad(format!(
            "PGM raster holds {} bytes, header implies {}",
            raster.len(),
            n * width
        )));
    }
    let samples = if width == 2 {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        raster.iter().map(|&b| u16::from(b)).collect()
    };
    Ok(Pgm { rows, cols, maxval: maxval as u16, samples })
}

pub fn read_pgm<R: Read>(mut r: R) -> Result<Pgm, FormatError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_pgm(&bytes)
}

/// Writes a 16-bit binary PGM (maxval 65535, big-endian samples).
pub fn write_pgm16<W: Write>(mut w: W, rows: usize, cols: usize, samples: &[u16]) -> Result<(), FormatError> {
    if samples.len() != rows * cols {
        return Err(bad(format!("{} samples for a {rows}x{cols} image", samples.len())));
    }
    write!(w, "P5\n{cols} {rows}\n65535\n")?;
    let raster: Vec<u8> = samples.iter().flat_map(|s| s.to_be_bytes()).collect();
    w.write_all(&raster)?;
    w.flush()?;
    Ok(())
}

/// True when the bytes start with the binary PGM magic.
pub fn looks_like_pgm(bytes: &[u8]) -> bool {
    bytes.starts_with(b"P5") && bytes.get(2).is_some_and(u8::is_ascii_whitespace)
}

/// Scan lines from CSV: one record per line, one field per pixel.
/// Returns `(lines, pixels, values)` with values row-major.
pub fn read_csv_lines<R: Read>(r: R) -> Result<(usize, usize, Vec<f64>), FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r);
    let mut values = Vec::new();
    let mut pixels = None;
    let mut lines = 0;
    for record in reader.records() {
        let record = record.map_err(|e| bad(format!("CSV: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match pixels {
            None => pixels = Some(record.len()),
            Some(p) if p != record.len() => {
                return Err(bad(format!("CSV line {} has {} values, expected {p}", lines + 1, record.len())))
            }
            Some(_) => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| bad(format!("CSV line {}: {field:?} is not a number", lines + 1)))?;
            values.push(v);
        }
        lines += 1;
    }
    match pixels {
        Some(p) if p > 0 => Ok((lines, p, values)),
        _ => Err(bad("CSV holds no data")),
    }
}

/// Decodes `f64` values from little-endian bytes (used for LSQ results).
pub fn f64s_from_le(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm16_round_trip() {
        let samples: Vec<u16> = (0..12).map(|i| i * 5000).collect();
        let mut buf = Vec::new();
        write_pgm16(&mut buf, 3, 4, &samples).unwrap();
        let pgm = parse_pgm(&buf).unwrap();
        assert_eq!((pgm.rows, pgm.cols, pgm.maxval), (3, 4, 65535));
        assert_eq!(pgm.samples, samples);
        assert_eq!(pgm.to_le_bytes()[2..4], 5000u16.to_le_bytes());
    }

    #[test]
    fn pgm8_with_comment() {
        let mut buf = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        buf.extend([7, 200]);
        let pgm = parse_pgm(&buf).unwrap();
        assert_eq!(pgm.samples, vec![7, 200]);
    }

    #[test]
    fn pgm_rejects_short_raster() {
        let mut buf = b"P5 2 2 65535\n".to_vec();
        buf.extend([0; 6]);
        assert!(matches!(parse_pgm(&buf), Err(FormatError::BadFormat(_))));
        assert!(parse_pgm(b"P2 1 1 255\n0").is_err());
    }

    #[test]
    fn csv_lines() {
        let text = "1, 2, 3\n4,5,6\n";
        let (l, p, v) = read_csv_lines(text.as_bytes()).unwrap();
        assert_eq!((l, p), (2, 3));
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(read_csv_lines("1,2\n3\n".as_bytes()).is_err());
        assert!(read_csv_lines("1,x\n".as_bytes()).is_err());
        assert!(read_csv_lines("".as_bytes()).is_err());
    }
}
