use serde::{Deserialize, Serialize};

use crate::limits::ExecutionLimits;

/// Resource accounting for one run.
///
/// `peak_memory_bytes` is the peak address-space demand, including a request
/// the kernel refused because of the memory cap. It can therefore exceed the
/// cap even though the cap is never actually crossed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceUsage {
    pub cpu_time_ms: u64,
    pub wall_time_ms: u64,
    pub peak_memory_bytes: u64,
    pub peak_rss_bytes: u64,
    pub bytes_written_stdout: u64,
    pub bytes_written_stderr: u64,
    pub output_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum TerminationKind {
    Exited(i32),
    Signaled(i32),
    CpuTimeViolation,
    WallTimeViolation,
    MemoryViolation,
    OutputViolation,
    IllegalSyscall(String),
    IsolationSetupFailure(String),
}

impl TerminationKind {
    pub fn is_clean_exit(&self) -> bool {
        matches!(self, Self::Exited(0))
    }
}

impl std::fmt::Display for TerminationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Exited(code) => write!(f, "exited with code {code}"),
            Self::Signaled(sig) => write!(f, "killed by signal {sig} ({})", signal_name(*sig)),
            Self::CpuTimeViolation => f.write_str("cpu time limit exceeded"),
            Self::WallTimeViolation => f.write_str("wall time limit exceeded"),
            Self::MemoryViolation => f.write_str("memory limit exceeded"),
            Self::OutputViolation => f.write_str("output limit exceeded"),
            Self::IllegalSyscall(name) => write!(f, "illegal system call `{name}`"),
            Self::IsolationSetupFailure(why) => write!(f, "isolation setup failed: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub termination: TerminationKind,
    #[serde(with = "lossy_bytes")]
    pub stdout: Vec<u8>,
    #[serde(with = "lossy_bytes")]
    pub stderr: Vec<u8>,
    pub usage: ResourceUsage,
    /// Syscalls observed when the policy runs in audit mode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub audit: Vec<String>,
}

impl ExecutionOutcome {
    pub(crate) fn setup_failure(reason: impl Into<String>) -> Self {
        Self {
            termination: TerminationKind::IsolationSetupFailure(reason.into()),
            stdout: Vec::new(),
            stderr: Vec::new(),
            usage: ResourceUsage::default(),
            audit: Vec::new(),
        }
    }

    pub fn stdout_lossy(&self) -> String {
        String::from_utf8_lossy(&self.stdout).into_owned()
    }

    pub fn stderr_lossy(&self) -> String {
        String::from_utf8_lossy(&self.stderr).into_owned()
    }
}

/// How the guest's main process ended, as reported by wait.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaitStatus {
    Exited(i32),
    Signaled(i32),
}

impl WaitStatus {
    pub fn from_raw(status: i32) -> Self {
        if libc::WIFSIGNALED(status) {
            Self::Signaled(libc::WTERMSIG(status))
        } else {
            Self::Exited(libc::WEXITSTATUS(status))
        }
    }
}

/// Raw end-of-run facts collected by the tracer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawStatus {
    pub wait: WaitStatus,
    /// First disallowed syscall, if the tracer killed the guest for one.
    pub illegal_syscall: Option<String>,
}

impl RawStatus {
    pub fn exited(code: i32) -> Self {
        Self { wait: WaitStatus::Exited(code), illegal_syscall: None }
    }

    pub fn signaled(sig: i32) -> Self {
        Self { wait: WaitStatus::Signaled(sig), illegal_syscall: None }
    }
}

/// Maps the raw status of a finished guest onto a single termination kind.
///
/// Resource causes win over the symptom they produce: memory, then cpu time,
/// then wall time, then output, then an illegal syscall, then a plain signal,
/// then the exit code.
pub fn classify_termination(raw: &RawStatus, usage: &ResourceUsage, limits: &ExecutionLimits) -> TerminationKind {
    if limits.enforces_memory() && usage.peak_memory_bytes > limits.memory_bytes {
        return TerminationKind::MemoryViolation;
    }
    if limits.enforces_cpu() && usage.cpu_time_ms >= limits.cpu_time_ms {
        return TerminationKind::CpuTimeViolation;
    }
    if usage.wall_time_ms >= limits.wall_time_ms {
        return TerminationKind::WallTimeViolation;
    }
    if usage.output_truncated
        || usage.bytes_written_stdout > limits.output_cap_bytes
        || usage.bytes_written_stderr > limits.output_cap_bytes
    {
        return TerminationKind::OutputViolation;
    }
    if let Some(name) = &raw.illegal_syscall {
        return TerminationKind::IllegalSyscall(name.clone());
    }
    match raw.wait {
        WaitStatus::Signaled(sig) => TerminationKind::Signaled(sig),
        WaitStatus::Exited(code) => TerminationKind::Exited(code),
    }
}

pub fn signal_name(sig: i32) -> &'static str {
    match sig {
        libc::SIGHUP => "SIGHUP",
        libc::SIGINT => "SIGINT",
        libc::SIGQUIT => "SIGQUIT",
        libc::SIGILL => "SIGILL",
        libc::SIGTRAP => "SIGTRAP",
        libc::SIGABRT => "SIGABRT",
        libc::SIGBUS => "SIGBUS",
        libc::SIGFPE => "SIGFPE",
        libc::SIGKILL => "SIGKILL",
        libc::SIGSEGV => "SIGSEGV",
        libc::SIGPIPE => "SIGPIPE",
        libc::SIGALRM => "SIGALRM",
        libc::SIGTERM => "SIGTERM",
        libc::SIGXCPU => "SIGXCPU",
        libc::SIGXFSZ => "SIGXFSZ",
        libc::SIGSYS => "SIGSYS",
        _ => "signal",
    }
}

mod lossy_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&String::from_utf8_lossy(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        Ok(String::deserialize(d)?.into_bytes())
    }
}
