//! The fixed-layout task header and the rules for sizing the payload behind it.
//!
//! ```text
//! offset  0..=28   task flag     (29 bytes, NUL padded)
//! offset  29       data marker   ('+' when a payload follows, NUL otherwise)
//! offset  30..=229 parameters    (200 bytes, comma separated key=value, NUL padded)
//! offset  230..=259 output name  (30 bytes, NUL padded)
//! offset  260..    payload
//! ```
//!
//! The header carries no length field. The payload size is a function of the
//! task flag and its parameters, see [`expected_payload_len`]. Multi-byte
//! payload scalars are little-endian.
//!
//! Responses use the same layout. The flag slot then holds a status string
//! (`OK` or `ERR:<CODE>`) and the parameters carry `bytes=<payload length>`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

pub const HEADER_LEN: usize = 260;
pub const FLAG_LEN: usize = 29;
pub const MARKER_OFFSET: usize = 29;
pub const PARAMS_OFFSET: usize = 30;
pub const PARAMS_LEN: usize = 200;
pub const OUTPUT_OFFSET: usize = 230;
pub const OUTPUT_LEN: usize = 30;

/// Upper bound on any payload the server accepts (1 GiB).
pub const MAX_PAYLOAD: usize = 1 << 30;

/// Flags of the built-in tasks.
pub mod flags {
    pub const BAYER_BILINEAR: &str = "BAYER_BILINEAR";
    pub const BAYER_GRADIENT: &str = "BAYER_GRADIENT";
    pub const LSQ_POLYFIT: &str = "LSQ_POLYFIT";
    pub const DEVINFO: &str = "DEVINFO";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    TaskFlag,
    Params,
    OutputName,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::TaskFlag => "task_flag",
            Field::Params => "params",
            Field::OutputName => "output_name",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("field {0} exceeds its slot")]
    FieldTooLong(Field),
    #[error("invalid character in {field} at offset {offset}")]
    InvalidCharacter { field: Field, offset: usize },
    #[error("bad data marker byte 0x{0:02x}")]
    BadMarker(u8),
    #[error("non-NUL byte after padding started in {0}")]
    MalformedPadding(Field),
    #[error("duplicate parameter key {0:?}")]
    DuplicateKey(String),
    #[error("malformed parameter token {0:?}")]
    BadToken(String),
    #[error("missing parameter {0:?}")]
    MissingParam(String),
    #[error("bad value for parameter {0:?}")]
    BadValue(String),
    #[error("payload size exceeds the {MAX_PAYLOAD}-byte limit")]
    Overflow,
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("truncated: got {got} of {want} bytes")]
    Truncated { got: usize, want: usize },
    #[error("marker {marker:?} disagrees with expected payload of {expected} bytes")]
    MarkerMismatch { marker: Marker, expected: usize },
    #[error("payload mismatch: marker/length expect {expected} bytes, got {actual}")]
    PayloadMismatch { expected: usize, actual: usize },
}

/// Byte 29 of the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Marker {
    /// `'+'`: a payload follows the header.
    Data,
    /// NUL: nothing follows.
    Empty,
}

impl Marker {
    pub const fn byte(self) -> u8 {
        match self {
            Marker::Data => b'+',
            Marker::Empty => 0,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        match b {
            b'+' => Ok(Marker::Data),
            0 => Ok(Marker::Empty),
            other => Err(WireError::BadMarker(other)),
        }
    }

    pub fn for_len(len: usize) -> Self {
        if len > 0 {
            Marker::Data
        } else {
            Marker::Empty
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TaskHeader {
    pub task_flag: String,
    pub marker: Marker,
    pub params: String,
    pub output_name: String,
}

impl TaskHeader {
    pub fn new(
        task_flag: impl Into<String>,
        marker: Marker,
        params: &ParamMap,
        output_name: impl Into<String>,
    ) -> Self {
        TaskHeader {
            task_flag: task_flag.into(),
            marker,
            params: params.serialize(),
            output_name: output_name.into(),
        }
    }

    pub fn param_map(&self) -> Result<ParamMap, WireError> {
        parse_params(&self.params)
    }

    /// Checks slot lengths and the character set without encoding.
    pub fn validate(&self) -> Result<(), WireError> {
        check_field(&self.task_flag, FLAG_LEN, Field::TaskFlag)?;
        check_field(&self.params, PARAMS_LEN, Field::Params)?;
        check_field(&self.output_name, OUTPUT_LEN, Field::OutputName)
    }
}

fn check_field(s: &str, slot: usize, field: Field) -> Result<(), WireError> {
    if s.len() > slot {
        return Err(WireError::FieldTooLong(field));
    }
    match s.bytes().position(|b| !is_printable(b)) {
        Some(offset) => Err(WireError::InvalidCharacter { field, offset }),
        None => Ok(()),
    }
}

fn is_printable(b: u8) -> bool {
    (0x20..=0x7e).contains(&b)
}

pub fn encode_header(h: &TaskHeader) -> Result<[u8; HEADER_LEN], WireError> {
    h.validate()?;
    let mut out = [0u8; HEADER_LEN];
    out[..h.task_flag.len()].copy_from_slice(h.task_flag.as_bytes());
    out[MARKER_OFFSET] = h.marker.byte();
    out[PARAMS_OFFSET..PARAMS_OFFSET + h.params.len()].copy_from_slice(h.params.as_bytes());
    out[OUTPUT_OFFSET..OUTPUT_OFFSET + h.output_name.len()]
        .copy_from_slice(h.output_name.as_bytes());
    Ok(out)
}

pub fn decode_header(b: &[u8; HEADER_LEN]) -> Result<TaskHeader, WireError> {
    let task_flag = decode_slot(&b[..FLAG_LEN], Field::TaskFlag)?;
    let marker = Marker::from_byte(b[MARKER_OFFSET])?;
    let params = decode_slot(&b[PARAMS_OFFSET..OUTPUT_OFFSET], Field::Params)?;
    let output_name = decode_output_name(b)?;
    Ok(TaskHeader {
        task_flag,
        marker,
        params,
        output_name,
    })
}

/// Decodes only the output-name slot, so an error reply can still echo it
/// when other parts of the header are damaged.
pub fn decode_output_name(b: &[u8; HEADER_LEN]) -> Result<String, WireError> {
    decode_slot(&b[OUTPUT_OFFSET..], Field::OutputName)
}

fn decode_slot(slot: &[u8], field: Field) -> Result<String, WireError> {
    let end = slot.iter().position(|&b| b == 0).unwrap_or(slot.len());
    if slot[end..].iter().any(|&b| b != 0) {
        return Err(WireError::MalformedPadding(field));
    }
    let content = &slot[..end];
    if let Some(offset) = content.iter().position(|&b| !is_printable(b)) {
        return Err(WireError::InvalidCharacter { field, offset });
    }
    // printable ASCII is valid UTF-8
    Ok(content.iter().map(|&b| b as char).collect())
}

/// Ordered `key=value` pairs from the parameter slot.
///
/// Values never contain a comma. Writers fold `,` to `;` and readers turn
/// `;` back into `,`, so a literal `;` does not survive a round trip.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ParamMap {
    entries: Vec<(String, String)>,
}

impl ParamMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    /// Inserts or replaces a value. Replacing keeps the original position.
    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<(), WireError> {
        if !is_valid_key(key) {
            return Err(WireError::BadToken(key.to_string()));
        }
        let value = value.to_string();
        if let Some(offset) = value.bytes().position(|b| !is_printable(b)) {
            return Err(WireError::InvalidCharacter {
                field: Field::Params,
                offset,
            });
        }
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        Ok(())
    }

    /// Builder-style [`ParamMap::set`] for known-good keys and values.
    ///
    /// Panics on an invalid key or a non-printable value.
    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.set(key, value).expect("invalid parameter");
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (i, (k, v)) in self.entries.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(k);
            out.push('=');
            out.extend(v.chars().map(|c| if c == ',' { ';' } else { c }));
        }
        out
    }

    pub fn require(&self, key: &str) -> Result<&str, WireError> {
        self.get(key)
            .ok_or_else(|| WireError::MissingParam(key.to_string()))
    }

    /// A required strictly positive integer, such as an image dimension.
    pub fn positive(&self, key: &str) -> Result<usize, WireError> {
        match self.require(key)?.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(WireError::BadValue(key.to_string())),
        }
    }
}

fn is_valid_key(k: &str) -> bool {
    let mut bytes = k.bytes();
    match bytes.next() {
        Some(b) if b.is_ascii_lowercase() || b == b'_' => {}
        _ => return false,
    }
    bytes.all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

pub fn parse_params(s: &str) -> Result<ParamMap, WireError> {
    if s.len() > PARAMS_LEN {
        return Err(WireError::FieldTooLong(Field::Params));
    }
    let mut map = ParamMap::new();
    if s.is_empty() {
        return Ok(map);
    }
    for token in s.split(',') {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| WireError::BadToken(token.to_string()))?;
        if !is_valid_key(key) {
            return Err(WireError::BadToken(token.to_string()));
        }
        if map.contains(key) {
            return Err(WireError::DuplicateKey(key.to_string()));
        }
        map.entries
            .push((key.to_string(), value.replace(';', ",")));
    }
    Ok(map)
}

/// Element size of a scan-line `dtype` parameter.
pub fn dtype_size(dtype: &str) -> Option<usize> {
    match dtype {
        "f32" => Some(4),
        "f64" => Some(8),
        _ => None,
    }
}

/// Payload size a request for `flag` must carry, derived from its parameters.
pub fn expected_payload_len(flag: &str, p: &ParamMap) -> Result<usize, WireError> {
    let len = match flag {
        flags::BAYER_BILINEAR | flags::BAYER_GRADIENT => {
            let rows = p.positive("rows")?;
            let cols = p.positive("cols")?;
            if let Some(dtype) = p.get("dtype") {
                if dtype != "u16" {
                    return Err(WireError::BadValue("dtype".into()));
                }
            }
            checked_product(&[rows, cols, 2])?
        }
        flags::LSQ_POLYFIT => {
            let lines = p.positive("lines")?;
            let pixels = p.positive("pixels")?;
            let size = dtype_size(p.require("dtype")?)
                .ok_or_else(|| WireError::BadValue("dtype".into()))?;
            checked_product(&[lines, pixels, size])?
        }
        flags::DEVINFO => 0,
        other => return Err(WireError::UnknownTask(other.to_string())),
    };
    Ok(len)
}

/// Multiplies dimensions, failing once the product passes [`MAX_PAYLOAD`].
pub fn checked_product(factors: &[usize]) -> Result<usize, WireError> {
    factors
        .iter()
        .try_fold(1usize, |acc, &f| acc.checked_mul(f))
        .filter(|&n| n <= MAX_PAYLOAD)
        .ok_or(WireError::Overflow)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub header: TaskHeader,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(header: TaskHeader, payload: Vec<u8>) -> Self {
        Frame { header, payload }
    }

    /// Checks the marker and payload length against the size the header implies.
    pub fn check_payload(&self, expected: usize) -> Result<(), WireError> {
        check_marker(self.header.marker, expected)?;
        if self.payload.len() != expected {
            return Err(WireError::PayloadMismatch {
                expected,
                actual: self.payload.len(),
            });
        }
        Ok(())
    }
}

/// A `'+'` marker needs a non-zero expected size, a NUL marker needs zero.
pub fn check_marker(marker: Marker, expected: usize) -> Result<(), WireError> {
    if marker != Marker::for_len(expected) {
        return Err(WireError::MarkerMismatch { marker, expected });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    UnknownTask,
    MissingParam,
    PayloadMismatch,
    BadHeader,
    TaskFailed,
    TooLarge,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 6] = [
        ErrorCode::UnknownTask,
        ErrorCode::MissingParam,
        ErrorCode::PayloadMismatch,
        ErrorCode::BadHeader,
        ErrorCode::TaskFailed,
        ErrorCode::TooLarge,
    ];

    pub const fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnknownTask => "UNKNOWN_TASK",
            ErrorCode::MissingParam => "MISSING_PARAM",
            ErrorCode::PayloadMismatch => "PAYLOAD_MISMATCH",
            ErrorCode::BadHeader => "BAD_HEADER",
            ErrorCode::TaskFailed => "TASK_FAILED",
            ErrorCode::TooLarge => "TOO_LARGE",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Contents of the flag slot in a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Ok,
    Err(ErrorCode),
}

impl Status {
    pub fn parse(s: &str) -> Option<Status> {
        if s == "OK" {
            return Some(Status::Ok);
        }
        let code = s.strip_prefix("ERR:")?;
        ErrorCode::ALL
            .into_iter()
            .find(|c| c.as_str() == code)
            .map(Status::Err)
    }

    pub fn is_ok(self) -> bool {
        self == Status::Ok
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Ok => f.write_str("OK"),
            Status::Err(code) => write!(f, "ERR:{code}"),
        }
    }
}

impl From<&WireError> for ErrorCode {
    fn from(e: &WireError) -> Self {
        match e {
            WireError::UnknownTask(_) => ErrorCode::UnknownTask,
            WireError::MissingParam(_) => ErrorCode::MissingParam,
            WireError::Overflow => ErrorCode::TooLarge,
            WireError::PayloadMismatch { .. }
            | WireError::MarkerMismatch { .. }
            | WireError::Truncated { .. } => {
                ErrorCode::PayloadMismatch
            }
            WireError::FieldTooLong(_)
            | WireError::InvalidCharacter { .. }
            | WireError::BadMarker(_)
            | WireError::MalformedPadding(_)
            | WireError::DuplicateKey(_)
            | WireError::BadToken(_)
            | WireError::BadValue(_) => ErrorCode::BadHeader,
        }
    }
}
