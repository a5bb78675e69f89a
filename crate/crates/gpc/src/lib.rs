//! Server, client and file formats for the remote compute service.
//!
//! Everything that touches threads, sockets or the filesystem lives here;
//! the kernels and the wire codec come from [`gpc_core`].

pub mod bench;
pub mod client;
pub mod formats;
pub mod frame;
pub mod pool;
pub mod probe;
pub mod server;

pub use client::{load_input, save_result, submit, ClientError, TaskResult};
pub use pool::ThreadPool;
pub use server::{Server, ServerConfig, ServerHandle};

/// TCP port the server listens on unless told otherwise.
pub const DEFAULT_PORT: u16 = 7711;

/// Logical cores on this host, at least 1.
pub fn host_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
