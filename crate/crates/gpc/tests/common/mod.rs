//! Loopback server fixtures shared by the integration suites.

#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{IpAddr, Ipv4Addr, Shutdown, TcpStream};
use std::thread::JoinHandle;
use std::time::Duration;

use gpc::server::{Server, ServerConfig, ServerHandle};
use gpc_core::devinfo::DeviceInfo;
use gpc_core::registry::builtin_registry;
use gpc_core::Registry;

/// A server on an ephemeral loopback port, stopped on drop.
pub struct Running {
    pub handle: ServerHandle,
    join: Option<JoinHandle<()>>,
}

impl Running {
    pub fn addr(&self) -> String {
        self.handle.local_addr().to_string()
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        self.handle.shutdown();
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

pub fn config(workers: usize, timeout: Duration) -> ServerConfig {
    ServerConfig {
        bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
        port: 0,
        workers,
        timeout,
        max_tasks: 4,
    }
}

pub fn start_with(config: ServerConfig, registry: Registry) -> Running {
    let server = Server::bind(config, registry).expect("bind loopback");
    let (handle, join) = server.spawn();
    Running { handle, join: Some(join) }
}

/// A Tesla C1060 card, as a stub device.
pub fn tesla_stub() -> DeviceInfo {
    DeviceInfo {
        name: "Tesla C1060".into(),
        compute_capability: "1.3".into(),
        warp_size: 32,
        total_constant_memory: 65536,
        total_global_memory: 4 << 30,
        shared_memory_per_block: 16384,
        clock_rate_khz: 1_296_000,
        multi_processor_count: 30,
        registers_per_block: 16384,
        max_threads_per_block: 512,
        max_grid_size: [65535, 65535, 1],
        max_threads_dim: [512, 512, 64],
    }
}

pub fn start() -> Running {
    start_with(
        config(2, Duration::from_secs(10)),
        builtin_registry(vec![tesla_stub()]),
    )
}

/// Sends raw bytes, half-closes, returns everything the server sends back.
pub fn raw_exchange(addr: &str, bytes: &[u8]) -> Vec<u8> {
    let mut s = TcpStream::connect(addr).expect("connect");
    s.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    // the server may reply early and stop reading; that is not a failure here
    let _ = s.write_all(bytes);
    let _ = s.shutdown(Shutdown::Write);
    let mut out = Vec::new();
    let _ = s.read_to_end(&mut out);
    out
}

/// Decodes a full response buffer: header, then exactly `bytes=` payload bytes.
pub fn parse_response(buf: &[u8]) -> gpc_core::wire::Frame {
    let f = gpc::frame::read_response(&mut &buf[..]).expect("well-formed response");
    let consumed = 260 + f.payload.len();
    assert_eq!(consumed, buf.len(), "trailing bytes after response");
    f
}
