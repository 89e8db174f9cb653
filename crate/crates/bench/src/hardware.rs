//! Hardware provenance.
//!
//! Runtime numbers travel with the exact part that produced them. A brand
//! family ("Intel Core i5") spans parts whose throughput differs by more than
//! an order of magnitude, so the validator refuses CPU strings that stop at
//! the family and demands the full model designation.

use std::fs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HardwareError {
    #[error("cpu model is empty; set cpu_model_exact to the full part name")]
    EmptyCpuModel,
    #[error(
        "cpu model {0:?} names only a brand family; give the exact part, e.g. \
         \"Intel Core i5-12600KF\" instead of \"Intel Core i5\". Parts within \
         one family differ in speed by more than an order of magnitude, so a \
         family name makes the recorded runtimes unusable"
    )]
    FamilyOnlyCpu(String),
    #[error("core_count must be at least 1")]
    NoCores,
    #[error(
        "unknown hardware field {0:?}; settable fields: cpu_model_exact, \
         core_count, base_frequency_ghz, ram_bytes, os_name_version"
    )]
    UnknownField(String),
    #[error("bad value {value:?} for {field}: {why}")]
    BadValue { field: &'static str, value: String, why: String },
    #[error("override {0:?} is not of the form field=value")]
    BadAssignment(String),
}

/// Where the recorded runtimes came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareDescriptor {
    /// Full part designation, e.g. "Intel Xeon W-2195".
    pub cpu_model_exact: String,
    pub core_count: usize,
    pub base_frequency_ghz: f64,
    pub ram_bytes: u64,
    pub os_name_version: String,
    /// RFC 3339 instant the probe ran.
    pub captured_at: String,
}

/// Family names that are not a part. Matched against the normalized CPU
/// string; anything carrying a model designator fails the exact match and
/// passes.
const FAMILY_ONLY: &[&str] = &[
    "intel",
    "intel core",
    "intel core i3",
    "intel core i5",
    "intel core i7",
    "intel core i9",
    "intel core ultra",
    "intel xeon",
    "intel celeron",
    "intel pentium",
    "intel atom",
    "amd",
    "amd ryzen",
    "amd ryzen 3",
    "amd ryzen 5",
    "amd ryzen 7",
    "amd ryzen 9",
    "amd epyc",
    "amd athlon",
    "amd fx",
    "arm",
    "arm cortex",
];

/// Lowercase, collapse whitespace, drop trademark noise and filler words so
/// "Intel(R) Core(TM) i5 CPU" and "intel core i5" compare equal.
fn normalize_cpu(s: &str) -> String {
    let lowered = s.to_lowercase().replace("(r)", " ").replace("(tm)", " ");
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "cpu" | "processor"))
        .collect::<Vec<_>>()
        .join(" ")
}

impl HardwareDescriptor {
    pub fn validate(&self) -> Result<(), HardwareError> {
        let norm = normalize_cpu(&self.cpu_model_exact);
        if norm.is_empty() {
            return Err(HardwareError::EmptyCpuModel);
        }
        if FAMILY_ONLY.contains(&norm.as_str()) {
            return Err(HardwareError::FamilyOnlyCpu(self.cpu_model_exact.clone()));
        }
        if self.core_count == 0 {
            return Err(HardwareError::NoCores);
        }
        Ok(())
    }
}

/// Manual field values that win over the OS probe.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareOverrides {
    pub cpu_model_exact: Option<String>,
    pub core_count: Option<usize>,
    pub base_frequency_ghz: Option<f64>,
    pub ram_bytes: Option<u64>,
    pub os_name_version: Option<String>,
}

impl HardwareOverrides {
    pub fn set(&mut self, field: &str, value: &str) -> Result<(), HardwareError> {
        match field {
            "cpu_model_exact" => self.cpu_model_exact = Some(value.to_string()),
            "core_count" => {
                self.core_count =
                    Some(value.parse().map_err(|e| HardwareError::BadValue {
                        field: "core_count",
                        value: value.to_string(),
                        why: format!("{e}"),
                    })?)
            }
            "base_frequency_ghz" => {
                self.base_frequency_ghz =
                    Some(value.parse().map_err(|e| HardwareError::BadValue {
                        field: "base_frequency_ghz",
                        value: value.to_string(),
                        why: format!("{e}"),
                    })?)
            }
            "ram_bytes" => {
                self.ram_bytes = Some(value.parse().map_err(|e| HardwareError::BadValue {
                    field: "ram_bytes",
                    value: value.to_string(),
                    why: format!("{e}"),
                })?)
            }
            "os_name_version" => self.os_name_version = Some(value.to_string()),
            other => return Err(HardwareError::UnknownField(other.to_string())),
        }
        Ok(())
    }

    /// Parse a CLI-style `field=value` assignment.
    pub fn apply_assignment(&mut self, s: &str) -> Result<(), HardwareError> {
        let (field, value) =
            s.split_once('=').ok_or_else(|| HardwareError::BadAssignment(s.to_string()))?;
        self.set(field.trim(), value.trim())
    }
}

/// Probe the host, merge in overrides, validate. Every populated field comes
/// from the override when given, the probe otherwise.
pub fn capture_hardware(o: &HardwareOverrides) -> Result<HardwareDescriptor, HardwareError> {
    let cpu_model_exact =
        o.cpu_model_exact.clone().or_else(probe_cpu_model).unwrap_or_default();
    let base_frequency_ghz = o
        .base_frequency_ghz
        .or_else(|| frequency_from_model(&cpu_model_exact))
        .or_else(probe_frequency_ghz)
        .unwrap_or(0.0);
    let d = HardwareDescriptor {
        core_count: o.core_count.or_else(probe_core_count).unwrap_or(1),
        base_frequency_ghz,
        ram_bytes: o.ram_bytes.or_else(probe_ram_bytes).unwrap_or(0),
        os_name_version: o
            .os_name_version
            .clone()
            .or_else(probe_os)
            .unwrap_or_else(|| "unknown".to_string()),
        captured_at: chrono::Utc::now().to_rfc3339(),
        cpu_model_exact,
    };
    d.validate()?;
    Ok(d)
}

fn cpuinfo_field(name: &str) -> Option<String> {
    let text = fs::read_to_string("/proc/cpuinfo").ok()?;
    for line in text.lines() {
        if let Some((k, v)) = line.split_once(':') {
            if k.trim() == name {
                return Some(v.trim().to_string());
            }
        }
    }
    None
}

fn probe_cpu_model() -> Option<String> {
    cpuinfo_field("model name")
}

/// Many x86 parts carry their base clock in the model string ("@ 2.30GHz").
fn frequency_from_model(model: &str) -> Option<f64> {
    let (_, tail) = model.split_once('@')?;
    let num: String =
        tail.chars().skip_while(|c| c.is_whitespace()).take_while(|c| c.is_ascii_digit() || *c == '.').collect();
    let v: f64 = num.parse().ok()?;
    if tail.to_lowercase().contains("ghz") {
        Some(v)
    } else if tail.to_lowercase().contains("mhz") {
        Some(v / 1000.0)
    } else {
        None
    }
}

fn probe_frequency_ghz() -> Option<f64> {
    let mhz: f64 = cpuinfo_field("cpu MHz")?.parse().ok()?;
    Some(mhz / 1000.0)
}

fn probe_core_count() -> Option<usize> {
    std::thread::available_parallelism().map(usize::from).ok()
}

fn probe_ram_bytes() -> Option<u64> {
    let text = fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemTotal:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn probe_os() -> Option<String> {
    let name = fs::read_to_string("/etc/os-release")
        .ok()
        .and_then(|text| {
            text.lines().find_map(|l| {
                l.strip_prefix("PRETTY_NAME=").map(|v| v.trim_matches('"').to_string())
            })
        })
        .unwrap_or_else(|| "linux".to_string());
    let kernel = fs::read_to_string("/proc/sys/kernel/osrelease")
        .map(|s| s.trim().to_string())
        .unwrap_or_default();
    if kernel.is_empty() {
        Some(name)
    } else {
        Some(format!("{name} (kernel {kernel})"))
    }
}
