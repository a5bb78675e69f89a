//! Client side: build a request, send it, receive the result, and write it
//! to the named output file.

use std::fs;
use std::io::{self, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Duration;

use gpc_core::wire::{
    self, dtype_size, flags, ErrorCode, Frame, Marker, ParamMap, Status, TaskHeader, WireError,
};

use crate::formats::{self, FormatError};
use crate::frame::{self, FrameError};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("ConnectFailed: {addr}: {source}")]
    ConnectFailed { addr: String, source: io::Error },
    #[error("Truncated: response ended after {got} of {want} bytes")]
    Truncated { got: usize, want: usize },
    #[error("ServerError: {code}: {msg}")]
    ServerError { code: ErrorCode, msg: String },
    #[error("FieldTooLong: {0}")]
    FieldTooLong(WireError),
    #[error("bad request: {0}")]
    BadRequest(WireError),
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("UnsafeName: {0:?}")]
    UnsafeName(String),
    #[error("SizeMismatch: expected {expected} bytes, file has {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("BadFormat: {0}")]
    BadFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl From<FormatError> for ClientError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::BadFormat(m) => ClientError::BadFormat(m),
            FormatError::Io(e) => ClientError::Io(e),
        }
    }
}

fn request_error(e: WireError) -> ClientError {
    match e {
        WireError::FieldTooLong(_) => ClientError::FieldTooLong(e),
        other => ClientError::BadRequest(other),
    }
}

/// A decoded response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskResult {
    pub status: Status,
    pub params: ParamMap,
    pub payload: Vec<u8>,
    pub output_name: String,
}

impl TaskResult {
    fn from_frame(f: Frame) -> Result<Self, ClientError> {
        let status = Status::parse(&f.header.task_flag)
            .ok_or_else(|| ClientError::BadResponse(format!("status {:?}", f.header.task_flag)))?;
        let params = f.header.param_map().map_err(|e| ClientError::BadResponse(e.to_string()))?;
        Ok(TaskResult { status, params, payload: f.payload, output_name: f.header.output_name })
    }

    /// `Err(ServerError)` unless the status is OK.
    pub fn into_ok(self) -> Result<TaskResult, ClientError> {
        match self.status {
            Status::Ok => Ok(self),
            Status::Err(code) => Err(ClientError::ServerError {
                code,
                msg: self.params.get("msg").unwrap_or_default().to_string(),
            }),
        }
    }
}

/// Connect timeout for [`submit`].
pub const CONNECT_TIMEOUT: Duration = Duration::from_secs(10);

/// One request/response round trip. A response with an `ERR` status is
/// returned as [`ClientError::ServerError`]; use [`exchange`] to inspect it
/// as a [`TaskResult`] instead.
pub fn submit(
    addr: &str,
    flag: &str,
    params: &ParamMap,
    input: Option<&[u8]>,
    output_name: &str,
) -> Result<TaskResult, ClientError> {
    exchange(addr, flag, params, input, output_name)?.into_ok()
}

/// Like [`submit`] but hands back error responses as results.
pub fn exchange(
    addr: &str,
    flag: &str,
    params: &ParamMap,
    input: Option<&[u8]>,
    output_name: &str,
) -> Result<TaskResult, ClientError> {
    let payload = input.unwrap_or_default();
    let header = TaskHeader::new(flag, Marker::for_len(payload.len()), params, output_name);
    let raw = wire::encode_header(&header).map_err(request_error)?;

    let stream = connect(addr)?;
    let mut w = &stream;
    // The server may answer (and stop reading) before the payload is
    // through, e.g. for an oversize request; the response is still readable.
    let sent = w.write_all(&raw).and_then(|()| w.write_all(payload)).and_then(|()| w.flush());
    let _ = stream.shutdown(Shutdown::Write);
    let mut r = &stream;
    match frame::read_response(&mut r) {
        Ok(f) => TaskResult::from_frame(f),
        Err(FrameError::Wire(WireError::Truncated { got, want })) => {
            // a failed send explains a missing response better than the short read
            match sent {
                Err(e) if got == 0 => Err(ClientError::Io(e)),
                _ => Err(ClientError::Truncated { got, want }),
            }
        }
        Err(FrameError::Wire(e)) => Err(ClientError::BadResponse(e.to_string())),
        Err(FrameError::Io(e)) => Err(ClientError::Io(e)),
    }
}

fn connect(addr: &str) -> Result<TcpStream, ClientError> {
    let fail = |source| ClientError::ConnectFailed { addr: addr.to_string(), source };
    let mut last = io::Error::new(io::ErrorKind::NotFound, "address resolved to nothing");
    for a in addr.to_socket_addrs().map_err(fail)? {
        match TcpStream::connect_timeout(&a, CONNECT_TIMEOUT) {
            Ok(s) => return Ok(s),
            Err(e) => last = e,
        }
    }
    Err(fail(last))
}

/// Rejects names that could escape the output directory.
pub fn check_output_name(name: &str) -> Result<(), ClientError> {
    let unsafe_name = name.is_empty()
        || name == "."
        || name.contains("..")
        || name.contains(['/', '\\'])
        || name.contains(':')
        || Path::new(name).is_absolute();
    if unsafe_name {
        return Err(ClientError::UnsafeName(name.to_string()));
    }
    Ok(())
}

/// Writes the payload verbatim to `dir/<output_name>`.
pub fn save_result(r: &TaskResult, dir: &Path) -> Result<PathBuf, ClientError> {
    if let Status::Err(code) = r.status {
        return Err(ClientError::ServerError {
            code,
            msg: r.params.get("msg").unwrap_or_default().to_string(),
        });
    }
    check_output_name(&r.output_name)?;
    let path = dir.join(&r.output_name);
    fs::write(&path, &r.payload)?;
    Ok(path)
}

fn fill(params: &mut ParamMap, key: &str, value: usize) -> Result<(), ClientError> {
    match params.get(key) {
        Some(v) if v != value.to_string() => Err(ClientError::BadFormat(format!(
            "{key}={v} conflicts with the input file ({value})"
        ))),
        Some(_) => Ok(()),
        None => params.set(key, value).map_err(request_error),
    }
}

fn size_check(params: &ParamMap, flag: &str, actual: usize) -> Result<(), ClientError> {
    let expected = wire::expected_payload_len(flag, params).map_err(request_error)?;
    if expected != actual {
        return Err(ClientError::SizeMismatch { expected, actual });
    }
    Ok(())
}

/// Reads a task's input file into a request payload, filling parameters the
/// file determines (image size, scan-line shape) when not given.
///
/// Demosaic tasks accept 16-bit PGM or raw little-endian u16. Polynomial
/// fitting accepts CSV (one scan line per record, sent as f64) or raw
/// little-endian f32/f64 per `dtype` (default f64).
pub fn load_input(path: &Path, flag: &str, params: &mut ParamMap) -> Result<Vec<u8>, ClientError> {
    let bytes = fs::read(path)?;
    match flag {
        flags::BAYER_BILINEAR | flags::BAYER_GRADIENT => {
            if formats::looks_like_pgm(&bytes) {
                let pgm = formats::parse_pgm(&bytes)?;
                fill(params, "rows", pgm.rows)?;
                fill(params, "cols", pgm.cols)?;
                Ok(pgm.to_le_bytes())
            } else {
                size_check(params, flag, bytes.len())?;
                Ok(bytes)
            }
        }
        flags::LSQ_POLYFIT => {
            let is_csv = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("csv") || e.eq_ignore_ascii_case("txt"));
            if is_csv {
                let (lines, pixels, values) = formats::read_csv_lines(bytes.as_slice())?;
                fill(params, "lines", lines)?;
                fill(params, "pixels", pixels)?;
                match params.get("dtype") {
                    Some("f64") => {}
                    Some(other) => {
                        return Err(ClientError::BadFormat(format!(
                            "CSV input is sent as f64, not {other}"
                        )))
                    }
                    None => params.set("dtype", "f64").map_err(request_error)?,
                }
                Ok(values.iter().flat_map(|v| v.to_le_bytes()).collect())
            } else {
                if !params.contains("dtype") {
                    params.set("dtype", "f64").map_err(request_error)?;
                }
                let elem = params.get("dtype").and_then(dtype_size);
                if let (Some(elem), Some(lines), None) =
                    (elem, params.get("lines").and_then(|v| v.parse::<usize>().ok()), params.get("pixels"))
                {
                    // pixels follows from the file size when only lines is given
                    if lines > 0 && bytes.len() % (lines * elem) == 0 {
                        fill(params, "pixels", bytes.len() / (lines * elem))?;
                    }
                }
                size_check(params, flag, bytes.len())?;
                Ok(bytes)
            }
        }
        flags::DEVINFO => Ok(Vec::new()),
        other => Err(ClientError::BadRequest(WireError::UnknownTask(other.to_string()))),
    }
}
