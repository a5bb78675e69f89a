//! Task table and dispatch.
//!
//! A task is a [`TaskDescriptor`]: its flag, the parameter keys it requires,
//! a rule giving the payload size from the parameters, and a handler. The
//! server only ever talks to tasks through this contract, so adding a task
//! means writing a handler and registering it; transport code is untouched.
//!
//! A handler receives the parsed parameters and the payload and returns
//! result parameters and result bytes. It must not assume anything about
//! the connection it was called from.
//!
//! ```
//! use gpc_core::registry::{Registry, TaskDescriptor, TaskOutput};
//! use gpc_core::{Executor, ParamMap};
//!
//! let mut registry = Registry::new();
//! registry
//!     .register(TaskDescriptor::new(
//!         "ECHO",
//!         &["len"],
//!         |p: &ParamMap| p.positive("len"),
//!         |_: &dyn Executor, _: &ParamMap, payload: &[u8]| Ok(TaskOutput::bytes(payload.to_vec())),
//!     ))
//!     .unwrap();
//! assert!(registry.lookup("ECHO").is_ok());
//! ```

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::demosaic::{demosaic_bilinear, demosaic_gradient, BayerImage, CfaPhase, RgbImage};
use crate::devinfo::{to_xml, DeviceInfo};
use crate::lsq::{batch_fit, encode_fits, ScanLineSet, MAX_ORDER};
use crate::parexec::Executor;
use crate::wire::{
    self, dtype_size, flags, ErrorCode, Frame, Marker, ParamMap, Status, TaskHeader, WireError,
    FLAG_LEN, PARAMS_LEN,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("task {0:?} is already registered")]
    DuplicateFlag(String),
    #[error("task flag {0:?} does not fit the header slot")]
    BadFlag(String),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
}

/// A handler failure, carried back to the client as `ERR:<code>`.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {msg}")]
pub struct TaskError {
    pub code: ErrorCode,
    pub msg: String,
}

impl TaskError {
    pub fn failed(msg: impl ToString) -> Self {
        TaskError { code: ErrorCode::TaskFailed, msg: msg.to_string() }
    }

    pub fn with_code(code: ErrorCode, msg: impl ToString) -> Self {
        TaskError { code, msg: msg.to_string() }
    }
}

impl From<WireError> for TaskError {
    fn from(e: WireError) -> Self {
        TaskError { code: ErrorCode::from(&e), msg: e.to_string() }
    }
}

/// Result parameters and bytes of a successful task. `bytes=<len>` is added
/// by the dispatcher.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskOutput {
    pub params: ParamMap,
    pub payload: Vec<u8>,
}

impl TaskOutput {
    pub fn bytes(payload: Vec<u8>) -> Self {
        TaskOutput { params: ParamMap::new(), payload }
    }
}

pub trait TaskHandler: Send + Sync {
    fn run(&self, exec: &dyn Executor, params: &ParamMap, payload: &[u8]) -> Result<TaskOutput, TaskError>;
}

impl<F> TaskHandler for F
where
    F: Fn(&dyn Executor, &ParamMap, &[u8]) -> Result<TaskOutput, TaskError> + Send + Sync,
{
    fn run(&self, exec: &dyn Executor, params: &ParamMap, payload: &[u8]) -> Result<TaskOutput, TaskError> {
        self(exec, params, payload)
    }
}

pub type PayloadRule = Arc<dyn Fn(&ParamMap) -> Result<usize, WireError> + Send + Sync>;

#[derive(Clone)]
pub struct TaskDescriptor {
    flag: String,
    required_params: Vec<String>,
    payload_rule: PayloadRule,
    handler: Arc<dyn TaskHandler>,
}

impl core::fmt::Debug for TaskDescriptor {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("TaskDescriptor")
            .field("flag", &self.flag)
            .field("required_params", &self.required_params)
            .finish_non_exhaustive()
    }
}

impl TaskDescriptor {
    pub fn new(
        flag: &str,
        required_params: &[&str],
        payload_rule: impl Fn(&ParamMap) -> Result<usize, WireError> + Send + Sync + 'static,
        handler: impl TaskHandler + 'static,
    ) -> Self {
        TaskDescriptor {
            flag: flag.to_string(),
            required_params: required_params.iter().map(|s| s.to_string()).collect(),
            payload_rule: Arc::new(payload_rule),
            handler: Arc::new(handler),
        }
    }

    pub fn flag(&self) -> &str {
        &self.flag
    }

    pub fn required_params(&self) -> &[String] {
        &self.required_params
    }

    pub fn payload_len(&self, params: &ParamMap) -> Result<usize, WireError> {
        (self.payload_rule)(params)
    }

    pub fn handler(&self) -> &dyn TaskHandler {
        &*self.handler
    }

    /// Same flag, same handler object.
    pub fn same_as(&self, other: &TaskDescriptor) -> bool {
        self.flag == other.flag && Arc::ptr_eq(&self.handler, &other.handler)
    }
}

/// Outcome of a dispatched request, before it is framed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: Status,
    pub params: ParamMap,
    pub payload: Vec<u8>,
}

impl Response {
    pub fn ok(output: TaskOutput) -> Self {
        let mut params = ParamMap::new().with("bytes", output.payload.len());
        for (k, v) in output.params.iter() {
            if k != "bytes" {
                // keys and values were already validated when the handler set them
                let _ = params.set(k, v);
            }
        }
        Response { status: Status::Ok, params, payload: output.payload }
    }

    /// Error reply. The message is made printable and cut to fit the slot.
    pub fn err(code: ErrorCode, msg: &str) -> Self {
        let budget = PARAMS_LEN - "msg=".len();
        let clean: String = msg
            .chars()
            .map(|c| if (' '..='~').contains(&c) { c } else { '?' })
            .take(budget)
            .collect();
        Response {
            status: Status::Err(code),
            params: ParamMap::new().with("msg", clean),
            payload: Vec::new(),
        }
    }

    pub fn from_task_error(e: &TaskError) -> Self {
        Self::err(e.code, &e.msg)
    }

    /// Header echoing the request's output name.
    ///
    /// Result parameters that would overflow the slot are dropped from the
    /// end, `bytes` always survives.
    pub fn header(&self, output_name: &str) -> TaskHeader {
        let mut params = self.params.clone();
        while params.serialize().len() > PARAMS_LEN && params.len() > 1 {
            let keep: Vec<(String, String)> = params
                .iter()
                .take(params.len() - 1)
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect();
            params = ParamMap::new();
            for (k, v) in keep {
                let _ = params.set(&k, v);
            }
        }
        TaskHeader::new(
            self.status.to_string(),
            Marker::for_len(self.payload.len()),
            &params,
            output_name,
        )
    }

    pub fn into_frame(self, output_name: &str) -> Frame {
        let header = self.header(output_name);
        Frame::new(header, self.payload)
    }
}

/// A request whose header has been checked, waiting for its payload.
#[derive(Debug, Clone)]
pub struct Prepared<'r> {
    pub descriptor: &'r TaskDescriptor,
    pub params: ParamMap,
    pub payload_len: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    tasks: BTreeMap<String, TaskDescriptor>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, d: TaskDescriptor) -> Result<(), RegistryError> {
        let printable = d.flag.bytes().all(|b| (0x20..=0x7e).contains(&b));
        if d.flag.is_empty() || d.flag.len() > FLAG_LEN || !printable {
            return Err(RegistryError::BadFlag(d.flag));
        }
        if self.tasks.contains_key(&d.flag) {
            return Err(RegistryError::DuplicateFlag(d.flag));
        }
        self.tasks.insert(d.flag.clone(), d);
        Ok(())
    }

    /// Exact, case-sensitive match.
    pub fn lookup(&self, flag: &str) -> Result<&TaskDescriptor, RegistryError> {
        self.tasks
            .get(flag)
            .ok_or_else(|| RegistryError::UnknownTask(flag.to_string()))
    }

    pub fn flags(&self) -> impl Iterator<Item = &str> {
        self.tasks.keys().map(|s| s.as_str())
    }

    /// Header-only checks: known flag, parseable parameters, required keys
    /// present, payload size within limits and consistent with the marker.
    pub fn prepare(&self, header: &TaskHeader) -> Result<Prepared<'_>, Response> {
        let descriptor = self
            .lookup(&header.task_flag)
            .map_err(|e| Response::err(ErrorCode::UnknownTask, &e.to_string()))?;
        let params = header
            .param_map()
            .map_err(|e| Response::err(ErrorCode::BadHeader, &e.to_string()))?;
        if let Some(missing) = descriptor.required_params.iter().find(|k| !params.contains(k)) {
            let e = WireError::MissingParam(missing.clone());
            return Err(Response::err(ErrorCode::MissingParam, &e.to_string()));
        }
        let payload_len = descriptor
            .payload_len(&params)
            .map_err(|e| Response::err(ErrorCode::from(&e), &e.to_string()))?;
        wire::check_marker(header.marker, payload_len)
            .map_err(|e| Response::err(ErrorCode::PayloadMismatch, &e.to_string()))?;
        Ok(Prepared { descriptor, params, payload_len })
    }

    /// Runs a prepared request whose payload has been read in full.
    pub fn execute(&self, exec: &dyn Executor, prepared: &Prepared<'_>, payload: &[u8]) -> Response {
        if payload.len() != prepared.payload_len {
            let e = WireError::PayloadMismatch { expected: prepared.payload_len, actual: payload.len() };
            return Response::err(ErrorCode::PayloadMismatch, &e.to_string());
        }
        match prepared.descriptor.handler.run(exec, &prepared.params, payload) {
            Ok(out) => Response::ok(out),
            Err(e) => Response::from_task_error(&e),
        }
    }

    /// [`Registry::prepare`] then [`Registry::execute`] on a complete frame.
    pub fn dispatch(&self, exec: &dyn Executor, frame: &Frame) -> Response {
        match self.prepare(&frame.header) {
            Ok(prepared) => self.execute(exec, &prepared, &frame.payload),
            Err(response) => response,
        }
    }
}

fn bayer_handler(
    kernel: fn(&dyn Executor, &BayerImage) -> RgbImage,
) -> impl Fn(&dyn Executor, &ParamMap, &[u8]) -> Result<TaskOutput, TaskError> + Send + Sync {
    move |exec, params, payload| {
        let rows = params.positive("rows")?;
        let cols = params.positive("cols")?;
        let phase = match params.get("phase") {
            Some(p) => p
                .parse::<CfaPhase>()
                .map_err(|e| TaskError::with_code(ErrorCode::BadHeader, e))?,
            None => CfaPhase::default(),
        };
        let img = BayerImage::from_le_bytes(rows, cols, phase, payload).map_err(TaskError::failed)?;
        let out = kernel(exec, &img);
        let params = ParamMap::new()
            .with("rows", rows)
            .with("cols", cols)
            .with("planes", 3)
            .with("phase", phase);
        Ok(TaskOutput { params, payload: out.to_le_bytes() })
    }
}

fn lsq_handler(exec: &dyn Executor, params: &ParamMap, payload: &[u8]) -> Result<TaskOutput, TaskError> {
    let lines = params.positive("lines")?;
    let pixels = params.positive("pixels")?;
    let order: usize = params
        .require("order")?
        .parse()
        .map_err(|_| TaskError::from(WireError::BadValue("order".into())))?;
    let elem = dtype_size(params.require("dtype")?)
        .ok_or_else(|| TaskError::from(WireError::BadValue("dtype".into())))?;
    if order > MAX_ORDER {
        return Err(TaskError::failed(format!("order {order} exceeds {MAX_ORDER}")));
    }
    if pixels < order + 1 {
        return Err(TaskError::failed(format!(
            "{pixels} pixels per line cannot determine order {order}"
        )));
    }
    let data = ScanLineSet::from_le_bytes(lines, pixels, elem, payload).map_err(TaskError::failed)?;
    let fits = batch_fit(exec, &data, order);
    let failed: Vec<String> = fits
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_err())
        .map(|(i, _)| i.to_string())
        .collect();
    let mut out = ParamMap::new().with("lines", lines).with("order", order);
    if !failed.is_empty() {
        // rendered as i;j;k on the wire
        out.set("failed", failed.join(","))?;
    }
    Ok(TaskOutput { params: out, payload: encode_fits(&fits, order) })
}

/// Registry holding the four built-in tasks. `devices` is served verbatim
/// by `DEVINFO`.
pub fn builtin_registry(devices: Vec<DeviceInfo>) -> Registry {
    let mut r = Registry::new();
    let bayer_rule = |flag: &'static str| move |p: &ParamMap| wire::expected_payload_len(flag, p);
    let descriptors = [
        TaskDescriptor::new(
            flags::BAYER_BILINEAR,
            &["rows", "cols"],
            bayer_rule(flags::BAYER_BILINEAR),
            bayer_handler(demosaic_bilinear),
        ),
        TaskDescriptor::new(
            flags::BAYER_GRADIENT,
            &["rows", "cols"],
            bayer_rule(flags::BAYER_GRADIENT),
            bayer_handler(demosaic_gradient),
        ),
        TaskDescriptor::new(
            flags::LSQ_POLYFIT,
            &["lines", "pixels", "order", "dtype"],
            |p: &ParamMap| wire::expected_payload_len(flags::LSQ_POLYFIT, p),
            lsq_handler,
        ),
        TaskDescriptor::new(
            flags::DEVINFO,
            &[],
            |p: &ParamMap| wire::expected_payload_len(flags::DEVINFO, p),
            move |_: &dyn Executor, _: &ParamMap, _: &[u8]| {
                Ok(TaskOutput {
                    params: ParamMap::new().with("devices", devices.len()),
                    payload: to_xml(&devices),
                })
            },
        ),
    ];
    for d in descriptors {
        r.register(d).expect("built-in flags are distinct");
    }
    r
}
