//! Compute-device attribute records and their canonical XML form.
//!
//! ```xml
//! <?xml version="1.0"?><gpgpu_server><device index="0"><name>...</name>...</device></gpgpu_server>
//! ```
//!
//! Serialization is byte-deterministic: fixed element order, no whitespace
//! between elements, no timestamps. An empty device list serializes to
//! `<?xml version="1.0"?><gpgpu_server/>`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

/// Placeholder for string attributes a device cannot report.
pub const NOT_AVAILABLE: &str = "n/a";

/// Element names, in serialization order.
pub const ATTRIBUTE_TAGS: [&str; 12] = [
    "name",
    "compute_capability",
    "warp_size",
    "total_constant_memory",
    "total_global_memory",
    "shared_memory_per_block",
    "clock_rate_khz",
    "multi_processor_count",
    "registers_per_block",
    "max_threads_per_block",
    "max_grid_size",
    "max_threads_dim",
];

/// One compute device. Attributes a device lacks are 0 or [`NOT_AVAILABLE`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeviceInfo {
    pub name: String,
    pub compute_capability: String,
    pub warp_size: u64,
    pub total_constant_memory: u64,
    pub total_global_memory: u64,
    pub shared_memory_per_block: u64,
    pub clock_rate_khz: u64,
    pub multi_processor_count: u64,
    pub registers_per_block: u64,
    pub max_threads_per_block: u64,
    pub max_grid_size: [u64; 3],
    pub max_threads_dim: [u64; 3],
}

impl Default for DeviceInfo {
    fn default() -> Self {
        DeviceInfo {
            name: NOT_AVAILABLE.into(),
            compute_capability: NOT_AVAILABLE.into(),
            warp_size: 0,
            total_constant_memory: 0,
            total_global_memory: 0,
            shared_memory_per_block: 0,
            clock_rate_khz: 0,
            multi_processor_count: 0,
            registers_per_block: 0,
            max_threads_per_block: 0,
            max_grid_size: [0; 3],
            max_threads_dim: [0; 3],
        }
    }
}

/// Source of device records.
pub trait DeviceProber {
    fn probe(&self) -> Vec<DeviceInfo>;
}

/// Reports a fixed list.
#[derive(Debug, Clone, Default)]
pub struct StaticProber(pub Vec<DeviceInfo>);

impl DeviceProber for StaticProber {
    fn probe(&self) -> Vec<DeviceInfo> {
        self.0.clone()
    }
}

pub fn probe_devices(prober: &dyn DeviceProber) -> Vec<DeviceInfo> {
    prober.probe()
}

fn escape(out: &mut String, s: &str) {
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && !matches!(c, '\t' | '\n' | '\r') => {
                // not representable in XML 1.0
                out.push('?');
            }
            c => out.push(c),
        }
    }
}

fn element(out: &mut String, tag: &str, value: &str) {
    let _ = write!(out, "<{tag}>");
    escape(out, value);
    let _ = write!(out, "</{tag}>");
}

fn triple(v: &[u64; 3]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{} {} {}", v[0], v[1], v[2]);
    s
}

impl DeviceInfo {
    /// Attribute values as text, in [`ATTRIBUTE_TAGS`] order.
    pub fn attributes(&self) -> [(&'static str, String); 12] {
        let num = |v: u64| {
            let mut s = String::new();
            let _ = write!(s, "{v}");
            s
        };
        [
            (ATTRIBUTE_TAGS[0], self.name.clone()),
            (ATTRIBUTE_TAGS[1], self.compute_capability.clone()),
            (ATTRIBUTE_TAGS[2], num(self.warp_size)),
            (ATTRIBUTE_TAGS[3], num(self.total_constant_memory)),
            (ATTRIBUTE_TAGS[4], num(self.total_global_memory)),
            (ATTRIBUTE_TAGS[5], num(self.shared_memory_per_block)),
            (ATTRIBUTE_TAGS[6], num(self.clock_rate_khz)),
            (ATTRIBUTE_TAGS[7], num(self.multi_processor_count)),
            (ATTRIBUTE_TAGS[8], num(self.registers_per_block)),
            (ATTRIBUTE_TAGS[9], num(self.max_threads_per_block)),
            (ATTRIBUTE_TAGS[10], triple(&self.max_grid_size)),
            (ATTRIBUTE_TAGS[11], triple(&self.max_threads_dim)),
        ]
    }
}

pub fn to_xml(devices: &[DeviceInfo]) -> Vec<u8> {
    let mut out = String::from("<?xml version=\"1.0\"?>");
    if devices.is_empty() {
        out.push_str("<gpgpu_server/>");
        return out.into_bytes();
    }
    out.push_str("<gpgpu_server>");
    for (i, d) in devices.iter().enumerate() {
        let _ = write!(out, "<device index=\"{i}\">");
        for (tag, value) in d.attributes() {
            element(&mut out, tag, &value);
        }
        out.push_str("</device>");
    }
    out.push_str("</gpgpu_server>");
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn empty_document() {
        assert_eq!(to_xml(&[]), b"<?xml version=\"1.0\"?><gpgpu_server/>".to_vec());
        assert!(probe_devices(&StaticProber::default()).is_empty());
    }

    #[test]
    fn every_tag_once() {
        let xml = String::from_utf8(to_xml(&[DeviceInfo::default()])).unwrap();
        for tag in ATTRIBUTE_TAGS {
            let open = alloc::format!("<{tag}>");
            assert_eq!(xml.matches(&open).count(), 1, "{tag}");
        }
        assert!(xml.contains("<name>n/a</name>"));
        assert!(xml.contains("<max_grid_size>0 0 0</max_grid_size>"));
    }

    #[test]
    fn names_are_escaped() {
        let d = DeviceInfo { name: "A&B <x>".into(), ..Default::default() };
        let xml = String::from_utf8(to_xml(&[d])).unwrap();
        assert!(xml.contains("<name>A&amp;B &lt;x&gt;</name>"));
    }

    #[test]
    fn deterministic_bytes() {
        let d = vec![DeviceInfo { warp_size: 32, ..Default::default() }; 3];
        assert_eq!(to_xml(&d), to_xml(&d.clone()));
        let xml = String::from_utf8(to_xml(&d)).unwrap();
        assert!(xml.contains("<device index=\"2\">"));
    }
}
