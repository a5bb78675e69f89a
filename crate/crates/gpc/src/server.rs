//! TCP compute server.
//!
//! Each connection carries exactly one request frame and receives exactly
//! one response frame, after which the server closes it. Connections are
//! handled on their own threads; the number of tasks executing at once is
//! bounded by [`ServerConfig::max_tasks`].

use std::io::{self, Read};
use std::net::{IpAddr, Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use gpc_core::registry::Response;
use gpc_core::wire::{self, decode_header, ErrorCode, Frame, WireError, MAX_PAYLOAD};
use gpc_core::Registry;

use crate::frame::{self, FrameError};
use crate::pool::ThreadPool;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub bind: IpAddr,
    pub port: u16,
    /// Worker threads each task's kernel may use.
    pub workers: usize,
    /// Longest a connection may sit idle while a frame is being read.
    pub timeout: Duration,
    /// Tasks allowed to execute simultaneously.
    pub max_tasks: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        let cores = crate::host_cores();
        ServerConfig {
            bind: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            port: crate::DEFAULT_PORT,
            workers: cores,
            timeout: Duration::from_secs(30),
            max_tasks: 2 * cores,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    BindFailed { addr: SocketAddr, source: io::Error },
}

/// Counting semaphore bounding concurrent task execution.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Gate { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Connections currently being served, so shutdown can wait for them.
#[derive(Debug, Default)]
struct InFlight {
    count: Mutex<usize>,
    cv: Condvar,
}

impl InFlight {
    fn enter(self: &Arc<Self>) -> InFlightGuard {
        *self.count.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        InFlightGuard(Arc::clone(self))
    }

    fn wait_idle(&self) {
        let mut n = self.count.lock().unwrap_or_else(|e| e.into_inner());
        while *n > 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
    }
}

struct InFlightGuard(Arc<InFlight>);

impl Drop for InFlightGuard {
    fn drop(&mut self) {
        *self.0.count.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.0.cv.notify_all();
    }
}

/// State shared by every connection handler.
struct Shared {
    registry: Registry,
    pool: ThreadPool,
    gate: Gate,
    timeout: Duration,
}

/// What happened on one connection, for the log line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionSummary {
    pub flag: String,
    /// Response status, or `dropped: <reason>` when no response was sent.
    pub status: String,
    pub bytes_in: usize,
    pub bytes_out: usize,
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
    stop: Arc<AtomicBool>,
    in_flight: Arc<InFlight>,
    config: ServerConfig,
}

/// Stops a running server from another thread.
#[derive(Debug, Clone)]
pub struct ServerHandle {
    stop: Arc<AtomicBool>,
    addr: SocketAddr,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Asks the accept loop to exit; in-flight connections finish first.
    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let mut wake = self.addr;
        if wake.ip().is_unspecified() {
            wake.set_ip(match wake {
                SocketAddr::V4(_) => IpAddr::V4(Ipv4Addr::LOCALHOST),
                SocketAddr::V6(_) => IpAddr::V6(std::net::Ipv6Addr::LOCALHOST),
            });
        }
        let _ = TcpStream::connect_timeout(&wake, Duration::from_secs(1));
    }
}

impl Server {
    pub fn bind(config: ServerConfig, registry: Registry) -> Result<Server, ServerError> {
        let addr = SocketAddr::new(config.bind, config.port);
        let listener = TcpListener::bind(addr).map_err(|source| ServerError::BindFailed { addr, source })?;
        let shared = Arc::new(Shared {
            registry,
            pool: ThreadPool::new(config.workers),
            gate: Gate::new(config.max_tasks),
            timeout: config.timeout,
        });
        Ok(Server {
            listener,
            shared,
            stop: Arc::new(AtomicBool::new(false)),
            in_flight: Arc::default(),
            config,
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn handle(&self) -> ServerHandle {
        ServerHandle { stop: Arc::clone(&self.stop), addr: self.local_addr() }
    }

    /// Accepts connections until [`ServerHandle::shutdown`], then waits for
    /// in-flight connections to finish.
    pub fn run(self) {
        for conn in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let shared = Arc::clone(&self.shared);
            let guard = self.in_flight.enter();
            let spawned = thread::Builder::new().name("gpc-conn".into()).spawn(move || {
                let _guard = guard;
                serve_logged(stream, &shared);
            });
            if let Err(e) = spawned {
                log::error!("cannot spawn connection thread: {e}");
            }
        }
        self.in_flight.wait_idle();
        log::info!("server stopped");
    }

    /// Runs the server on a background thread.
    pub fn spawn(self) -> (ServerHandle, thread::JoinHandle<()>) {
        let handle = self.handle();
        let join = thread::spawn(move || self.run());
        (handle, join)
    }
}

fn serve_logged(stream: TcpStream, shared: &Shared) {
    let peer = stream.peer_addr().map_or_else(|_| "?".to_string(), |a| a.to_string());
    let started = Instant::now();
    let s = handle_connection(stream, shared);
    log::info!(
        "peer={peer} flag={} status={} in={} out={} ms={}",
        if s.flag.is_empty() { "-" } else { &s.flag },
        s.status,
        s.bytes_in,
        s.bytes_out,
        started.elapsed().as_millis()
    );
}

/// Counts bytes read through it.
struct Counting<'a> {
    inner: &'a TcpStream,
    n: usize,
}

impl Read for Counting<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.n += n;
        Ok(n)
    }
}

fn dropped(flag: &str, why: impl std::fmt::Display, bytes_in: usize) -> ConnectionSummary {
    ConnectionSummary { flag: flag.to_string(), status: format!("dropped: {why}"), bytes_in, bytes_out: 0 }
}

/// How long to wait for either end-of-request or stray bytes after a
/// complete frame. Clients that half-close answer at once; clients that
/// keep their write side open pay this delay.
const TRAILING_WINDOW: Duration = Duration::from_millis(100);

/// True if the peer sent bytes beyond the frame.
fn has_trailing_bytes(stream: &TcpStream, timeout: Duration) -> bool {
    if stream.set_read_timeout(Some(TRAILING_WINDOW)).is_err() {
        return false;
    }
    let mut probe = [0u8; 1];
    let extra = matches!(stream.peek(&mut probe), Ok(n) if n > 0);
    let _ = stream.set_read_timeout(Some(timeout));
    extra
}

fn handle_connection(stream: TcpStream, shared: &Shared) -> ConnectionSummary {
    if let Err(e) = stream
        .set_read_timeout(Some(shared.timeout))
        .and_then(|()| stream.set_write_timeout(Some(shared.timeout)))
    {
        return dropped("", e, 0);
    }
    let mut reader = Counting { inner: &stream, n: 0 };

    let raw = match frame::read_header_bytes(&mut reader) {
        Ok(raw) => raw,
        Err(e) if e.is_timeout() => return dropped("", "timed out reading header", reader.n),
        Err(e) => return dropped("", e, reader.n),
    };
    let header = match decode_header(&raw) {
        Ok(h) => h,
        Err(e) => {
            let echo = wire::decode_output_name(&raw).unwrap_or_default();
            let resp = Response::err(ErrorCode::from(&e), &e.to_string());
            return respond(&stream, resp, &echo, "", reader.n);
        }
    };
    let flag = header.task_flag.clone();
    let registry = &shared.registry;
    let prepared = match registry.prepare(&header) {
        Ok(p) => p,
        Err(resp) => return respond(&stream, resp, &header.output_name, &flag, reader.n),
    };

    let payload = match frame::read_payload(&mut reader, prepared.payload_len) {
        Ok(p) => p,
        Err(e) if e.is_timeout() => return dropped(&flag, "timed out reading payload", reader.n),
        Err(FrameError::Wire(WireError::Truncated { got, want })) => {
            let e = WireError::PayloadMismatch { expected: want, actual: got };
            let resp = Response::err(ErrorCode::PayloadMismatch, &e.to_string());
            return respond(&stream, resp, &header.output_name, &flag, reader.n);
        }
        Err(e) => return dropped(&flag, e, reader.n),
    };
    if has_trailing_bytes(&stream, shared.timeout) {
        let msg = format!("more than the expected {} payload bytes", prepared.payload_len);
        let resp = Response::err(ErrorCode::PayloadMismatch, &msg);
        return respond(&stream, resp, &header.output_name, &flag, reader.n);
    }

    let resp = {
        let _permit = shared.gate.acquire();
        panic::catch_unwind(AssertUnwindSafe(|| registry.execute(&shared.pool, &prepared, &payload)))
            .unwrap_or_else(|_| Response::err(ErrorCode::TaskFailed, "task panicked"))
    };
    drop(payload);
    respond(&stream, resp, &header.output_name, &flag, reader.n)
}

fn respond(
    stream: &TcpStream,
    resp: Response,
    output_name: &str,
    flag: &str,
    bytes_in: usize,
) -> ConnectionSummary {
    let status = resp.status.to_string();
    let frame: Frame = resp.into_frame(output_name);
    let bytes_out = wire::HEADER_LEN + frame.payload.len();
    let mut writer = stream;
    if let Err(e) = frame::write_frame(&mut writer, &frame) {
        return dropped(flag, format!("{status} not delivered: {e}"), bytes_in);
    }
    linger_close(stream);
    ConnectionSummary { flag: flag.to_string(), status, bytes_in, bytes_out }
}

/// Closes our side, then discards whatever the peer still sends so the
/// close does not turn into a reset that could destroy the response.
fn linger_close(stream: &TcpStream) {
    let _ = stream.shutdown(Shutdown::Write);
    let _ = stream.set_read_timeout(Some(Duration::from_millis(500)));
    let mut sink = [0u8; 64 * 1024];
    let mut total = 0usize;
    let mut reader = stream;
    while total <= MAX_PAYLOAD {
        match reader.read(&mut sink) {
            Ok(0) | Err(_) => break,
            Ok(n) => total += n,
        }
    }
}
