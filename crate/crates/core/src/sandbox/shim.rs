//! Structured result records produced by the resource-limiting runtime shim.
//!
//! In shim mode the sandbox launches the shim instead of the interpreter. The
//! shim applies CPU and address-space limits, runs the user script, and
//! prints exactly one JSON [`ShimReport`] as the last line of its stdout.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LimitHit {
    #[default]
    None,
    Cpu,
    Memory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimReport {
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
    pub limit_hit: LimitHit,
    pub user_ms: u64,
}

impl ShimReport {
    /// Parses the final line of the shim's stdout.
    pub fn from_shim_stdout(stdout: &str) -> Result<Self, String> {
        let line = stdout.trim_end_matches(['\n', '\r']).rsplit('\n').next().unwrap_or("");
        if line.trim().is_empty() {
            return Err("shim produced no report line".into());
        }
        let report: ShimReport = serde_json::from_str(line).map_err(|e| format!("malformed shim report: {e}"))?;
        if report.limit_hit == LimitHit::Cpu && report.exit_code == 0 {
            return Err("shim report claims a CPU limit hit with exit code 0".into());
        }
        Ok(report)
    }
}

/// Command template and limits for shim mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShimConfig {
    /// Argument vector; `{script_path}`, `{script_name}`, `{workdir}`,
    /// `{cpu_seconds}` and `{mem_bytes}` are substituted.
    pub command: Vec<String>,
    pub cpu_seconds: u64,
    pub mem_bytes: u64,
}

impl ShimConfig {
    /// `python3 <shim> <script> <cpu_seconds> <mem_bytes>`.
    pub fn python(shim_path: impl Into<String>, cpu_seconds: u64, mem_bytes: u64) -> Self {
        Self {
            command: vec![
                "python3".into(),
                shim_path.into(),
                "{script_path}".into(),
                "{cpu_seconds}".into(),
                "{mem_bytes}".into(),
            ],
            cpu_seconds,
            mem_bytes,
        }
    }
}
