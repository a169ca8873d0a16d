mod setup;
mod trace;
mod watchdog;

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom};
use std::os::unix::fs::OpenOptionsExt;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::Instant;

use log::warn;

use crate::error::SandboxError;
use crate::limits::ExecutionLimits;
use crate::outcome::{classify_termination, ExecutionOutcome, RawStatus, ResourceUsage, WaitStatus};
use crate::policy::{IsolationPolicy, SandboxMode};
use crate::workdir::{STDERR_FILE, STDIN_FILE, STDOUT_FILE};

use trace::{TraceConfig, Tracer};
use watchdog::Watchdog;

pub(crate) fn run(
    command: &[String],
    stdin: &[u8],
    limits: &ExecutionLimits,
    policy: &IsolationPolicy,
    workdir: &Path,
    env: &[(String, String)],
) -> Result<ExecutionOutcome, SandboxError> {
    fs::write(workdir.join(STDIN_FILE), stdin)?;
    let stdin_file = File::open(workdir.join(STDIN_FILE))?;
    let stdout_file = capture_file(&workdir.join(STDOUT_FILE))?;
    let stderr_file = capture_file(&workdir.join(STDERR_FILE))?;

    let (child_setup, guard) = match setup::prepare(policy, limits, workdir) {
        Ok(v) => v,
        Err(e) => return Ok(ExecutionOutcome::setup_failure(format!("preparing isolation: {e}"))),
    };
    let child_setup = Arc::new(child_setup);

    let mut cmd = Command::new(&command[0]);
    cmd.args(&command[1..])
        .env_clear()
        .envs(env.iter().map(|(k, v)| (k.as_str(), v.as_str())))
        .current_dir(workdir)
        .stdin(Stdio::from(stdin_file))
        .stdout(Stdio::from(stdout_file.try_clone()?))
        .stderr(Stdio::from(stderr_file.try_clone()?));
    let in_child = Arc::clone(&child_setup);
    // SAFETY: `apply` only performs async-signal-safe syscalls on data
    // prepared before the fork.
    unsafe {
        cmd.pre_exec(move || in_child.apply());
    }

    let started = Instant::now();
    let child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => {
            if let Some(step) = guard.failed_step() {
                let step = step.describe();
                warn!("isolation setup failed at {step}: {e}");
                return Ok(ExecutionOutcome::setup_failure(format!("{step}: {e}")));
            }
            return Err(SandboxError::Launch { program: command[0].clone(), source: e });
        }
    };
    drop(guard);
    let pid = child.id() as i32;
    let watchdog = Watchdog::start(pid, started, *limits);
    let tracer = Tracer::new(
        pid,
        TraceConfig {
            whitelist: &policy.syscall_whitelist,
            enforce: policy.mode == SandboxMode::Enforced,
            audit: policy.audit,
            limits: *limits,
        },
    );
    let report = tracer.run();
    let wall_time_ms = started.elapsed().as_millis() as u64;
    drop(watchdog);
    let report = report.map_err(|e| SandboxError::Trace(e.to_string()))?;

    // read through our own handles: the guest may unlink or replace the names
    let (stdout, stdout_len) = read_capped(stdout_file, limits.output_cap_bytes)?;
    let (stderr, stderr_len) = read_capped(stderr_file, limits.output_cap_bytes)?;
    let usage = ResourceUsage {
        cpu_time_ms: report.cpu_time_ms,
        wall_time_ms,
        peak_memory_bytes: report.peak_vm_bytes.max(report.refused_vm_bytes),
        peak_rss_bytes: report.peak_rss_bytes,
        bytes_written_stdout: stdout_len.max(report.stdout_written),
        bytes_written_stderr: stderr_len.max(report.stderr_written),
        output_truncated: report.output_killed
            || stdout_len > limits.output_cap_bytes
            || stderr_len > limits.output_cap_bytes,
    };
    let raw = RawStatus {
        wait: report.wait.unwrap_or(WaitStatus::Signaled(libc::SIGKILL)),
        illegal_syscall: report.illegal_syscall,
    };
    Ok(ExecutionOutcome {
        termination: classify_termination(&raw, &usage, limits),
        stdout,
        stderr,
        usage,
        audit: report.audit.into_iter().collect(),
    })
}

fn capture_file(path: &Path) -> io::Result<File> {
    OpenOptions::new().read(true).write(true).create(true).truncate(true).mode(0o644).open(path)
}

fn read_capped(mut file: File, cap: u64) -> io::Result<(Vec<u8>, u64)> {
    file.seek(SeekFrom::Start(0))?;
    let len = file.metadata()?.len();
    let mut buf = Vec::with_capacity(len.min(cap) as usize);
    file.take(cap).read_to_end(&mut buf)?;
    Ok((buf, len))
}
