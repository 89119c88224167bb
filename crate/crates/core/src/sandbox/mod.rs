//! Isolated execution of untrusted scripts.
//!
//! Each request runs in its own process group inside a fresh temporary
//! directory with a scrubbed environment. The whole group is killed at the
//! wall-clock deadline and again after the interpreter exits, so background
//! descendants never outlive the call.

mod process;
mod shim;

use std::collections::BTreeMap;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use process::process_group_alive;
pub use shim::{LimitHit, ShimConfig, ShimReport};

/// Per-script wall-clock timeout used by the rollout engine.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_STDOUT_LIMIT: usize = 65536;
const SCRIPT_NAME: &str = "script.py";

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("invalid execution request: {0}")]
    InvalidRequest(String),
    #[error("cannot create working directory: {0}")]
    Workdir(#[source] std::io::Error),
    #[error("cannot spawn `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("runtime shim protocol violation: {0}")]
    ShimProtocol(String),
    #[error("sandbox i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRequest {
    pub code: String,
    pub timeout: Duration,
    pub stdout_limit: usize,
}

impl ExecutionRequest {
    pub fn new(code: impl Into<String>, timeout: Duration) -> Self {
        Self {
            code: code.into(),
            timeout,
            stdout_limit: DEFAULT_STDOUT_LIMIT,
        }
    }

    fn validate(&self) -> Result<(), SandboxError> {
        if self.code.is_empty() {
            return Err(SandboxError::InvalidRequest("code must be non-empty".into()));
        }
        if self.timeout.is_zero() {
            return Err(SandboxError::InvalidRequest("timeout must be positive".into()));
        }
        if self.stdout_limit == 0 {
            return Err(SandboxError::InvalidRequest("stdout_limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
    pub timed_out: bool,
    pub wall_ms: u64,
    /// Stdout exceeded the limit; `stdout` holds exactly the first
    /// `stdout_limit` bytes.
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_hit: Option<LimitHit>,
}

impl ExecutionResult {
    pub fn succeeded(&self) -> bool {
        !self.timed_out && self.exit_code == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ExecMode {
    /// Run the interpreter directly on the script file.
    Direct { command: Vec<String> },
    /// Run the resource-limiting shim, which reports a [`ShimReport`].
    Shim(ShimConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxConfig {
    pub mode: ExecMode,
    /// Environment variables copied from the parent; everything else is
    /// cleared.
    pub env_allowlist: Vec<String>,
    pub stderr_limit: usize,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            mode: ExecMode::Direct {
                command: vec!["python3".into(), "{script_name}".into()],
            },
            env_allowlist: vec!["PATH".into(), "HOME".into(), "LANG".into()],
            stderr_limit: DEFAULT_STDOUT_LIMIT,
        }
    }
}

impl SandboxConfig {
    /// Direct mode with a custom interpreter, e.g. `"/usr/bin/python3.11 {script_name}"`.
    pub fn with_interpreter(template: &str) -> Self {
        Self {
            mode: ExecMode::Direct {
                command: template.split_whitespace().map(String::from).collect(),
            },
            ..Self::default()
        }
    }
}

/// Anything that can run a code block on behalf of a rollout.
pub trait CodeExecutor: Send + Sync {
    fn run_code(&self, code: &str, timeout: Duration) -> Result<ExecutionResult, SandboxError>;
}

#[derive(Debug, Clone, Default)]
pub struct Sandbox {
    config: SandboxConfig,
}

impl Sandbox {
    pub fn new(config: SandboxConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    fn command_line(&self, workdir: &Path) -> Result<Vec<String>, SandboxError> {
        let script_path = workdir.join(SCRIPT_NAME);
        let mut vars = BTreeMap::new();
        vars.insert("{script_path}", script_path.display().to_string());
        vars.insert("{script_name}", SCRIPT_NAME.to_string());
        vars.insert("{workdir}", workdir.display().to_string());
        let template = match &self.config.mode {
            ExecMode::Direct { command } => command,
            ExecMode::Shim(shim) => {
                vars.insert("{cpu_seconds}", shim.cpu_seconds.to_string());
                vars.insert("{mem_bytes}", shim.mem_bytes.to_string());
                &shim.command
            }
        };
        if template.is_empty() {
            return Err(SandboxError::InvalidRequest("empty interpreter command".into()));
        }
        Ok(template
            .iter()
            .map(|arg| vars.iter().fold(arg.clone(), |acc, (k, v)| acc.replace(k, v)))
            .collect())
    }

    /// Runs one script to completion or timeout. Script misbehaviour is
    /// reported inside the result; only infrastructure failures are errors.
    pub fn execute(&self, req: &ExecutionRequest) -> Result<ExecutionResult, SandboxError> {
        req.validate()?;
        let workdir = tempfile::Builder::new()
            .prefix("rci-exec-")
            .tempdir()
            .map_err(SandboxError::Workdir)?;
        std::fs::write(workdir.path().join(SCRIPT_NAME), req.code.as_bytes())?;

        let argv = self.command_line(workdir.path())?;
        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..])
            .current_dir(workdir.path())
            .env_clear()
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        for key in &self.config.env_allowlist {
            if let Some(val) = std::env::var_os(key) {
                cmd.env(key, val);
            }
        }

        let shim_mode = matches!(self.config.mode, ExecMode::Shim(_));
        // The shim embeds user output in its report line, so its own stdout
        // needs headroom beyond the user-facing limit.
        let capture_limit = if shim_mode {
            req.stdout_limit.saturating_mul(8).saturating_add(65536)
        } else {
            req.stdout_limit
        };

        let mut child = cmd.spawn().map_err(|source| SandboxError::Spawn {
            command: argv.join(" "),
            source,
        })?;
        let start = Instant::now();
        let pgid = child.id() as i32;
        let stdout_rx = process::spawn_reader(child.stdout.take().expect("piped stdout"), capture_limit);
        let stderr_rx = process::spawn_reader(child.stderr.take().expect("piped stderr"), self.config.stderr_limit);

        let deadline = start + req.timeout;
        let mut timed_out = false;
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            let now = Instant::now();
            if now >= deadline {
                process::kill_group(pgid);
                timed_out = true;
                break child.wait()?;
            }
            std::thread::sleep((deadline - now).min(Duration::from_millis(2)));
        };
        // Descendants may still hold the group; take them down too.
        process::reap_group(pgid, Duration::from_secs(2));
        let wall_ms = start.elapsed().as_millis() as u64;

        let grace = Duration::from_millis(500);
        let out = stdout_rx.recv_timeout(grace).unwrap_or_default();
        let err = stderr_rx.recv_timeout(grace).unwrap_or_default();
        let exit_code = status.code().or_else(|| status.signal().map(|s| -s)).unwrap_or(-1);

        let mut result = ExecutionResult {
            stdout: String::from_utf8_lossy(&out.bytes).into_owned(),
            stderr: String::from_utf8_lossy(&err.bytes).into_owned(),
            exit_code,
            timed_out,
            wall_ms,
            truncated: out.truncated,
            limit_hit: None,
        };
        if shim_mode && !timed_out {
            result = apply_shim_report(result, req.stdout_limit)?;
        }
        if let Err(e) = workdir.close() {
            tracing::warn!(error = %e, "failed to remove sandbox workdir");
        }
        Ok(result)
    }

    /// Runs `requests` with at most `max_parallel` children alive at once.
    /// Results keep request order; a failing request never aborts siblings.
    pub fn execute_pool(
        &self,
        requests: &[ExecutionRequest],
        max_parallel: usize,
    ) -> Result<Vec<Result<ExecutionResult, SandboxError>>, SandboxError> {
        if max_parallel == 0 {
            return Err(SandboxError::InvalidRequest("max_parallel must be >= 1".into()));
        }
        Ok(crate::par::map_ordered(requests, max_parallel, |req| self.execute(req)))
    }
}

fn apply_shim_report(raw: ExecutionResult, stdout_limit: usize) -> Result<ExecutionResult, SandboxError> {
    if raw.truncated {
        return Err(SandboxError::ShimProtocol("shim output exceeded capture limit".into()));
    }
    let report = ShimReport::from_shim_stdout(&raw.stdout).map_err(SandboxError::ShimProtocol)?;
    let (stdout, truncated) = truncate_bytes(report.stdout, stdout_limit);
    Ok(ExecutionResult {
        stdout,
        stderr: report.stderr,
        exit_code: report.exit_code,
        timed_out: false,
        wall_ms: raw.wall_ms,
        truncated,
        limit_hit: Some(report.limit_hit),
    })
}

fn truncate_bytes(s: String, limit: usize) -> (String, bool) {
    if s.len() <= limit {
        return (s, false);
    }
    let bytes = &s.as_bytes()[..limit];
    (String::from_utf8_lossy(bytes).into_owned(), true)
}

impl CodeExecutor for Sandbox {
    fn run_code(&self, code: &str, timeout: Duration) -> Result<ExecutionResult, SandboxError> {
        self.execute(&ExecutionRequest::new(code, timeout))
    }
}

impl<F> CodeExecutor for F
where
    F: Fn(&str, Duration) -> Result<ExecutionResult, SandboxError> + Send + Sync,
{
    fn run_code(&self, code: &str, timeout: Duration) -> Result<ExecutionResult, SandboxError> {
        self(code, timeout)
    }
}

impl<T: CodeExecutor + ?Sized> CodeExecutor for std::sync::Arc<T> {
    fn run_code(&self, code: &str, timeout: Duration) -> Result<ExecutionResult, SandboxError> {
        (**self).run_code(code, timeout)
    }
}
