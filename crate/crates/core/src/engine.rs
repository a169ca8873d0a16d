use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use judgekit_sandbox::{
    execute, ExecutionLimits, ExecutionOutcome, IsolationPolicy, SandboxError, SandboxMode, SandboxRoot,
    SyscallWhitelist, Workdir, MIB,
};

use crate::error::ToolchainError;
use crate::toolchain::{CompiledArtifact, GuestLanguageProfile, ProfileRegistry};

pub const ENV_SANDBOX_ROOT: &str = "JUDGEKIT_SANDBOX_ROOT";
pub const ENV_PROFILE_DIR: &str = "JUDGEKIT_PROFILE_DIR";
pub const ENV_UNSAFE_DEV: &str = "JUDGEKIT_UNSAFE_DEV";

/// Checker runs get 10 s and 512 MiB regardless of the problem's limits.
pub fn default_checker_limits() -> ExecutionLimits {
    ExecutionLimits { cpu_time_ms: 10_000, wall_time_ms: 20_000, memory_bytes: 512 * MIB, ..ExecutionLimits::default() }
}

/// Shared execution context: profiles, the sandbox root and run settings.
/// Safe to share between threads.
#[derive(Debug)]
pub struct Engine {
    registry: ProfileRegistry,
    root: SandboxRoot,
    mode: SandboxMode,
    checker_limits: ExecutionLimits,
    workdir_log: Option<Mutex<Vec<PathBuf>>>,
}

impl Engine {
    pub fn new(registry: ProfileRegistry, root: SandboxRoot) -> Self {
        Self {
            registry,
            root,
            mode: SandboxMode::Enforced,
            checker_limits: default_checker_limits(),
            workdir_log: None,
        }
    }

    /// Configured from `JUDGEKIT_SANDBOX_ROOT`, `JUDGEKIT_PROFILE_DIR` and
    /// `JUDGEKIT_UNSAFE_DEV=1`.
    pub fn from_env() -> Result<Self, ToolchainError> {
        let registry = match std::env::var_os(ENV_PROFILE_DIR) {
            Some(dir) => ProfileRegistry::with_dir(Path::new(&dir))?,
            None => ProfileRegistry::builtin(),
        };
        let mut engine = Self::new(registry, SandboxRoot::from_env()?);
        if std::env::var(ENV_UNSAFE_DEV).is_ok_and(|v| v == "1") {
            log::warn!("UNSAFE development mode: guests run without isolation");
            engine.mode = SandboxMode::UnsafeDev;
        }
        Ok(engine)
    }

    pub fn with_mode(mut self, mode: SandboxMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_checker_limits(mut self, limits: ExecutionLimits) -> Self {
        self.checker_limits = limits;
        self
    }

    /// Remember every workdir handed out, for isolation audits.
    pub fn recording_workdirs(mut self) -> Self {
        self.workdir_log = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn workdirs_used(&self) -> Vec<PathBuf> {
        self.workdir_log.as_ref().map(|l| l.lock().unwrap().clone()).unwrap_or_default()
    }

    pub fn registry(&self) -> &ProfileRegistry {
        &self.registry
    }

    pub fn root(&self) -> &SandboxRoot {
        &self.root
    }

    pub fn mode(&self) -> SandboxMode {
        self.mode
    }

    pub fn checker_limits(&self) -> &ExecutionLimits {
        &self.checker_limits
    }

    pub fn resolve(&self, language: &str) -> Result<Arc<GuestLanguageProfile>, ToolchainError> {
        self.registry.resolve(language)
    }

    pub(crate) fn is_root(&self) -> bool {
        // SAFETY: geteuid has no preconditions.
        unsafe { libc::geteuid() == 0 }
    }

    fn finish_policy(&self, mut policy: IsolationPolicy) -> IsolationPolicy {
        policy.mode = self.mode;
        policy.mask_sibling_workdirs = true;
        policy
    }

    pub fn policy_for(&self, profile: &GuestLanguageProfile) -> IsolationPolicy {
        self.finish_policy(profile.policy.clone())
    }

    pub(crate) fn compile_policy(&self) -> IsolationPolicy {
        let wl = SyscallWhitelist::builtin("compile").expect("builtin compile whitelist");
        self.finish_policy(IsolationPolicy::new(wl))
    }

    pub(crate) fn workdir(&self, policy: &IsolationPolicy, prefix: &str) -> std::io::Result<Workdir> {
        let dir = self.root.workdir(policy, prefix)?;
        if let Some(log) = &self.workdir_log {
            log.lock().unwrap().push(dir.path().to_path_buf());
        }
        Ok(dir)
    }

    pub(crate) fn execute(
        &self,
        command: &[String],
        stdin: &[u8],
        limits: &ExecutionLimits,
        policy: &IsolationPolicy,
        workdir: &Path,
    ) -> Result<ExecutionOutcome, SandboxError> {
        execute(command, stdin, limits, policy, workdir)
    }

    /// Runs an artifact in a fresh workdir; `args` are appended to the run template.
    pub fn run_artifact(
        &self,
        artifact: &CompiledArtifact,
        stdin: &[u8],
        limits: &ExecutionLimits,
        args: &[String],
    ) -> Result<ExecutionOutcome, SandboxError> {
        let policy = self.policy_for(&artifact.profile);
        let dir = self.workdir(&policy, "run-")?;
        let mut command = artifact.install(dir.path())?;
        command.extend(args.iter().cloned());
        self.execute(&command, stdin, limits, &policy, dir.path())
    }
}
