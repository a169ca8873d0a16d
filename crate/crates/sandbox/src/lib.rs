//! Sandboxed execution of untrusted contest programs.
//!
//! A guest runs as an unprivileged identity (uid/gid 1536 by default) inside
//! fresh network and mount namespaces, with the filesystem read-only except
//! for its workdir, under `setrlimit` caps, and with every system call
//! checked against a per-language whitelist through `ptrace`. The first
//! disallowed call kills the guest.
//!
//! ```no_run
//! use judgekit_sandbox::{execute, ExecutionLimits, IsolationPolicy, SandboxRoot};
//!
//! let root = SandboxRoot::from_env()?;
//! let policy = IsolationPolicy::builtin("python3").unwrap();
//! let dir = root.workdir(&policy, "run-")?;
//! let cmd = ["python3".to_string(), "-c".into(), "print(input())".into()];
//! let out = execute(&cmd, b"hello\n", &ExecutionLimits::default(), &policy, dir.path())?;
//! assert_eq!(out.stdout, b"hello\n");
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

mod error;
mod limits;
#[cfg(target_os = "linux")]
mod linux;
mod outcome;
mod policy;
mod syscall_table;
mod whitelist;
mod workdir;

use std::path::Path;

pub use error::SandboxError;
pub use limits::{ExecutionLimits, MIB};
pub use outcome::{
    classify_termination, signal_name, ExecutionOutcome, RawStatus, ResourceUsage, TerminationKind, WaitStatus,
};
pub use policy::{IsolationPolicy, SandboxMode, DEFAULT_GUEST_GID, DEFAULT_GUEST_UID};
pub use whitelist::{syscall_name, syscall_number, Constraint, SyscallWhitelist};
pub use workdir::{prepare_for_guest, SandboxRoot, Workdir, STDERR_FILE, STDIN_FILE, STDOUT_FILE};

/// Environment every guest starts with; `HOME` and `TMPDIR` point at the workdir.
pub fn guest_env(workdir: &Path) -> Vec<(String, String)> {
    let dir = workdir.display().to_string();
    vec![
        ("PATH".into(), "/usr/local/bin:/usr/bin:/bin".into()),
        ("HOME".into(), dir.clone()),
        ("TMPDIR".into(), dir),
        ("LANG".into(), "C.UTF-8".into()),
        ("PYTHONDONTWRITEBYTECODE".into(), "1".into()),
        ("PYTHONHASHSEED".into(), "0".into()),
    ]
}

/// Runs `command` inside `workdir` under `limits` and `policy`.
///
/// Setup failures of any isolation layer come back as
/// [`TerminationKind::IsolationSetupFailure`] and the guest never runs.
pub fn execute(
    command: &[String],
    stdin: &[u8],
    limits: &ExecutionLimits,
    policy: &IsolationPolicy,
    workdir: &Path,
) -> Result<ExecutionOutcome, SandboxError> {
    execute_with_env(command, stdin, limits, policy, workdir, &guest_env(workdir))
}

pub fn execute_with_env(
    command: &[String],
    stdin: &[u8],
    limits: &ExecutionLimits,
    policy: &IsolationPolicy,
    workdir: &Path,
    env: &[(String, String)],
) -> Result<ExecutionOutcome, SandboxError> {
    if command.is_empty() {
        return Err(SandboxError::EmptyCommand);
    }
    limits.validate()?;
    policy.validate()?;
    check_workdir(workdir, policy)?;
    run(command, stdin, limits, policy, workdir, env)
}

fn check_workdir(workdir: &Path, policy: &IsolationPolicy) -> Result<(), SandboxError> {
    let invalid = |reason: &str| SandboxError::InvalidWorkdir { path: workdir.to_path_buf(), reason: reason.into() };
    if !workdir.is_absolute() {
        return Err(invalid("must be an absolute path"));
    }
    let meta = std::fs::metadata(workdir).map_err(|e| invalid(&e.to_string()))?;
    if !meta.is_dir() {
        return Err(invalid("not a directory"));
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::MetadataExt;
        if policy.mode == SandboxMode::Enforced && meta.uid() != policy.drop_to_uid {
            return Err(invalid("not owned by the guest identity"));
        }
    }
    Ok(())
}

#[cfg(target_os = "linux")]
fn run(
    command: &[String],
    stdin: &[u8],
    limits: &ExecutionLimits,
    policy: &IsolationPolicy,
    workdir: &Path,
    env: &[(String, String)],
) -> Result<ExecutionOutcome, SandboxError> {
    if policy.mode == SandboxMode::Enforced && !cfg!(target_arch = "x86_64") {
        return Ok(ExecutionOutcome::setup_failure("syscall filtering is only available on x86_64"));
    }
    linux::run(command, stdin, limits, policy, workdir, env)
}

#[cfg(not(target_os = "linux"))]
fn run(
    _command: &[String],
    _stdin: &[u8],
    _limits: &ExecutionLimits,
    _policy: &IsolationPolicy,
    _workdir: &Path,
    _env: &[(String, String)],
) -> Result<ExecutionOutcome, SandboxError> {
    Ok(ExecutionOutcome::setup_failure("process isolation requires Linux"))
}
