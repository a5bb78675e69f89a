//! Default device prober: reports the host CPU as a single compute device.
//!
//! GPU-only attributes (warp size, constant memory, per-block limits) have
//! no CPU analogue and are reported as 0 or `n/a`.

use std::fs;

use gpc_core::devinfo::{DeviceInfo, DeviceProber, NOT_AVAILABLE};

#[derive(Debug, Clone, Copy, Default)]
pub struct HostProber;

fn cpuinfo_field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|line| {
        let (k, v) = line.split_once(':')?;
        (k.trim() == key).then(|| v.trim())
    })
}

/// Parses `/proc/cpuinfo` text into (model name, clock in kHz).
pub fn parse_cpuinfo(text: &str) -> (Option<String>, Option<u64>) {
    let name = cpuinfo_field(text, "model name")
        .or_else(|| cpuinfo_field(text, "Model"))
        .or_else(|| cpuinfo_field(text, "Hardware"))
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    let khz = cpuinfo_field(text, "cpu MHz")
        .and_then(|v| v.parse::<f64>().ok())
        .filter(|mhz| mhz.is_finite() && *mhz > 0.0)
        .map(|mhz| (mhz * 1000.0).round() as u64);
    (name, khz)
}

/// Parses `MemTotal` from `/proc/meminfo` text, in bytes.
pub fn parse_meminfo(text: &str) -> Option<u64> {
    let v = cpuinfo_field(text, "MemTotal")?;
    let kib: u64 = v.split_whitespace().next()?.parse().ok()?;
    kib.checked_mul(1024)
}

impl DeviceProber for HostProber {
    fn probe(&self) -> Vec<DeviceInfo> {
        let cpuinfo = fs::read_to_string("/proc/cpuinfo").unwrap_or_default();
        let (name, khz) = parse_cpuinfo(&cpuinfo);
        let memory = fs::read_to_string("/proc/meminfo")
            .ok()
            .and_then(|t| parse_meminfo(&t))
            .unwrap_or(0);
        vec![DeviceInfo {
            name: name.unwrap_or_else(|| NOT_AVAILABLE.into()),
            clock_rate_khz: khz.unwrap_or(0),
            multi_processor_count: crate::host_cores() as u64,
            total_global_memory: memory,
            ..DeviceInfo::default()
        }]
    }
}
