//! Isolated subprocess execution of corpus programs.
//!
//! Every run gets a fresh temporary working directory (removed afterwards),
//! its own process group, an address-space limit and a wall-clock deadline.
//! On timeout or output overflow the whole process group is killed.

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Once};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

const CALL_SHIM: &str = include_str!("../assets/call_shim.py");
const POLL_INTERVAL: Duration = Duration::from_millis(5);

#[derive(Debug, thiserror::Error)]
pub enum ExecutorError {
    #[error("interpreter `{0}` not found or not executable")]
    InterpreterMissing(PathBuf),
    #[error("sandbox setup failed: {0}")]
    SandboxSetupFailure(String),
}

/// How a program receives its input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Invocation {
    Stdin(String),
    Call { function_name: String, args: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub wall_timeout: Duration,
    pub memory_cap: u64,
    pub output_cap: usize,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            wall_timeout: Duration::from_secs(5),
            memory_cap: 256 * 1024 * 1024,
            output_cap: 1024 * 1024,
        }
    }
}

impl ResourceLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.wall_timeout.is_zero() || self.memory_cap == 0 || self.output_cap == 0 {
            return Err("resource limits must all be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    RuntimeError,
    Timeout,
    OutputOverflow,
}

impl ExecStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::RuntimeError => "runtime_error",
            Self::Timeout => "timeout",
            Self::OutputOverflow => "output_overflow",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionResult {
    pub status: ExecStatus,
    /// Truncated at `ResourceLimits::output_cap`.
    pub stdout: String,
    pub stderr: String,
    pub duration: Duration,
}

/// Runs programs with a configured interpreter, invoked as `<interpreter> <script-file>`.
#[derive(Debug, Clone)]
pub struct Sandbox {
    interpreter: PathBuf,
    scratch_root: Option<PathBuf>,
}

impl Sandbox {
    /// Resolves `interpreter` (a path or a name on `PATH`).
    pub fn new(interpreter: impl AsRef<Path>) -> Result<Self, ExecutorError> {
        let interpreter = resolve_executable(interpreter.as_ref())
            .ok_or_else(|| ExecutorError::InterpreterMissing(interpreter.as_ref().to_path_buf()))?;
        Ok(Self {
            interpreter,
            scratch_root: None,
        })
    }

    /// Parent directory for per-run temp dirs (defaults to the system temp dir).
    pub fn with_scratch_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.scratch_root = Some(root.into());
        self
    }

    pub fn interpreter(&self) -> &Path {
        &self.interpreter
    }

    pub fn execute(
        &self,
        code: &str,
        invocation: &Invocation,
        limits: &ResourceLimits,
    ) -> Result<ExecutionResult, ExecutorError> {
        let setup = |e: std::io::Error| ExecutorError::SandboxSetupFailure(e.to_string());
        let workdir = match &self.scratch_root {
            Some(root) => tempfile::Builder::new()
                .prefix("semiforge-")
                .tempdir_in(root),
            None => tempfile::Builder::new().prefix("semiforge-").tempdir(),
        }
        .map_err(setup)?;

        let (script, stdin_text) = match invocation {
            Invocation::Stdin(text) => (code.to_string(), text.as_str()),
            Invocation::Call {
                function_name,
                args,
            } => (render_call_shim(code, function_name, args), ""),
        };
        let script_path = workdir.path().join("main.py");
        std::fs::write(&script_path, script).map_err(setup)?;

        let mut cmd = Command::new(&self.interpreter);
        cmd.arg(&script_path)
            .current_dir(workdir.path())
            .env_clear()
            .env("PATH", "/usr/local/bin:/usr/bin:/bin")
            .env("HOME", workdir.path())
            .env("TMPDIR", workdir.path())
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONIOENCODING", "utf-8")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let memory_cap = limits.memory_cap;
        // SAFETY: only async-signal-safe libc calls between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                if libc::setpgid(0, 0) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                let rl = libc::rlimit {
                    rlim_cur: memory_cap as libc::rlim_t,
                    rlim_max: memory_cap as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &rl) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                // Network namespace needs CAP_SYS_ADMIN; without it the run proceeds with network.
                libc::unshare(libc::CLONE_NEWNET);
                Ok(())
            });
        }
        warn_network_once();

        let start = Instant::now();
        let mut child = cmd.spawn().map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
                ExecutorError::InterpreterMissing(self.interpreter.clone())
            }
            _ => setup(e),
        })?;
        let pgid = child.id() as libc::pid_t;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let input = stdin_text.as_bytes().to_vec();
        let writer = thread::spawn(move || {
            // EPIPE here just means the program exited without reading everything.
            let _ = stdin.write_all(&input);
        });

        let overflow = Arc::new(AtomicBool::new(false));
        let out_reader = spawn_capped_reader(
            child.stdout.take().expect("piped stdout"),
            limits.output_cap,
            Some(overflow.clone()),
        );
        let err_reader = spawn_capped_reader(
            child.stderr.take().expect("piped stderr"),
            limits.output_cap,
            None,
        );

        let deadline = start + limits.wall_timeout;
        let mut status = loop {
            match child.try_wait().map_err(setup)? {
                Some(exit) => {
                    break if exit.success() {
                        ExecStatus::Ok
                    } else {
                        ExecStatus::RuntimeError
                    }
                }
                None if overflow.load(Ordering::Relaxed) => break ExecStatus::OutputOverflow,
                None if Instant::now() >= deadline => break ExecStatus::Timeout,
                None => thread::sleep(POLL_INTERVAL),
            }
        };
        let duration = start.elapsed();
        // Reap leftovers in the group (background children, or the main process on timeout).
        unsafe {
            libc::killpg(pgid, libc::SIGKILL);
        }
        let _ = child.wait();
        let _ = writer.join();
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();
        if status == ExecStatus::Ok && overflow.load(Ordering::Relaxed) {
            status = ExecStatus::OutputOverflow;
        }
        workdir.close().map_err(setup)?;

        Ok(ExecutionResult {
            status,
            stdout: String::from_utf8_lossy(&stdout).into_owned(),
            stderr: String::from_utf8_lossy(&stderr).into_owned(),
            duration,
        })
    }
}

fn warn_network_once() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        log::debug!("sandbox network isolation is best-effort (requires CAP_SYS_ADMIN)");
    });
}

fn spawn_capped_reader<R: Read + Send + 'static>(
    mut source: R,
    cap: usize,
    overflow: Option<Arc<AtomicBool>>,
) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match source.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                    if n > room {
                        if let Some(flag) = &overflow {
                            flag.store(true, Ordering::Relaxed);
                        }
                    }
                }
            }
        }
        kept
    })
}

fn resolve_executable(name: &Path) -> Option<PathBuf> {
    if name.components().count() > 1 {
        return is_executable(name).then(|| name.to_path_buf());
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(name))
        .find(|candidate| is_executable(candidate))
}

fn is_executable(path: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    std::fs::metadata(path)
        .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}

/// Fills the call shim. `args` is embedded as a quoted string literal and
/// evaluated with `ast.literal_eval` inside the shim.
pub fn render_call_shim(user_code: &str, function_name: &str, args: &str) -> String {
    let quoted_args = serde_json::to_string(args).expect("string serializes");
    let quoted_name = serde_json::to_string(function_name).expect("string serializes");
    CALL_SHIM
        .replace("{{function_name}}", &quoted_name)
        .replace("{{args_literal}}", &quoted_args)
        .replace("{{user_code}}", user_code)
}

/// Strips trailing whitespace per line and trailing blank lines; `\r\n` → `\n`.
pub fn normalize_output(text: &str) -> String {
    let unified = text.replace("\r\n", "\n").replace('\r', "\n");
    let lines: Vec<&str> = unified.lines().map(str::trim_end).collect();
    let end = lines
        .iter()
        .rposition(|l| !l.is_empty())
        .map_or(0, |i| i + 1);
    lines[..end].join("\n")
}

pub fn outputs_match(actual: &str, expected: &str) -> bool {
    normalize_output(actual) == normalize_output(expected)
}
