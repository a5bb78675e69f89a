//! Kernels and wire codec for a remote compute service.
//!
//! This crate is `no_std` (it needs `alloc`) and performs no IO. The
//! companion `gpc` crate supplies the thread pool, sockets, file formats
//! and the command line.
//!
//! The pieces:
//!
//! * [`wire`]: the fixed 260-byte task header, parameter lists and payload sizing.
//! * [`parexec`]: a chunked execution contract whose results do not depend on
//!   the number of workers.
//! * [`demosaic`]: bilinear and gradient-directed Bayer demosaicing of 16-bit mosaics.
//! * [`lsq`]: least-squares polynomial fitting through the normal equations.
//! * [`devinfo`]: device attribute records and their XML form.
//! * [`registry`]: the task table the server dispatches through.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod demosaic;
pub mod devinfo;
pub mod lsq;
pub mod parexec;
pub mod registry;
pub mod wire;

pub use parexec::{Executor, Sequential, CHUNK};
pub use registry::Registry;
pub use wire::{Frame, Marker, ParamMap, TaskHeader};
