//! Reading and writing frames on byte streams.
//!
//! A frame is the 260-byte header followed by exactly as many payload bytes
//! as the header implies. Short reads surface as [`WireError::Truncated`],
//! never as a silently shortened frame.

use std::io::{self, Read, Write};

use gpc_core::wire::{self, decode_header, encode_header, Frame, TaskHeader, WireError, HEADER_LEN};

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl FrameError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, FrameError::Io(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut))
    }
}

/// Fills `buf` until it is full or the stream ends; returns the count read.
fn read_full<R: Read + ?Sized>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// Raw header bytes, undecoded.
pub fn read_header_bytes<R: Read + ?Sized>(r: &mut R) -> Result<[u8; HEADER_LEN], FrameError> {
    let mut buf = [0u8; HEADER_LEN];
    let got = read_full(r, &mut buf)?;
    if got < HEADER_LEN {
        return Err(WireError::Truncated { got, want: HEADER_LEN }.into());
    }
    Ok(buf)
}

pub fn read_header<R: Read + ?Sized>(r: &mut R) -> Result<TaskHeader, FrameError> {
    Ok(decode_header(&read_header_bytes(r)?)?)
}

pub fn read_payload<R: Read + ?Sized>(r: &mut R, len: usize) -> Result<Vec<u8>, FrameError> {
    let mut buf = vec![0u8; len];
    let got = read_full(r, &mut buf)?;
    if got < len {
        return Err(WireError::Truncated { got, want: len }.into());
    }
    Ok(buf)
}

/// Reads one frame. `payload_len` gives the payload size for a decoded
/// header; the marker must agree with it.
pub fn read_frame<R, F>(r: &mut R, payload_len: F) -> Result<Frame, FrameError>
where
    R: Read + ?Sized,
    F: FnOnce(&TaskHeader) -> Result<usize, WireError>,
{
    let header = read_header(r)?;
    let len = payload_len(&header)?;
    wire::check_marker(header.marker, len)?;
    let payload = read_payload(r, len)?;
    Ok(Frame::new(header, payload))
}

/// Reads a request frame for one of the built-in tasks.
pub fn read_request<R: Read + ?Sized>(r: &mut R) -> Result<Frame, FrameError> {
    read_frame(r, |h| wire::expected_payload_len(&h.task_flag, &h.param_map()?))
}

/// Payload size announced by a response's `bytes` parameter (0 if absent).
pub fn response_payload_len(h: &TaskHeader) -> Result<usize, WireError> {
    let params = h.param_map()?;
    match params.get("bytes") {
        None => Ok(0),
        Some(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n <= wire::MAX_PAYLOAD)
            .ok_or_else(|| WireError::BadValue("bytes".into())),
    }
}

pub fn read_response<R: Read + ?Sized>(r: &mut R) -> Result<Frame, FrameError> {
    read_frame(r, response_payload_len)
}

/// Writes header then payload. The marker must match the payload.
pub fn write_frame<W: Write + ?Sized>(w: &mut W, f: &Frame) -> Result<(), FrameError> {
    wire::check_marker(f.header.marker, f.payload.len())?;
    let header = encode_header(&f.header)?;
    w.write_all(&header)?;
    w.write_all(&f.payload)?;
    w.flush()?;
    Ok(())
}
