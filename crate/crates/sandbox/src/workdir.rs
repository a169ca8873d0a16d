use std::fs;
use std::io;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use crate::policy::{IsolationPolicy, SandboxMode};

/// Names of the capture files inside a workdir.
pub const STDIN_FILE: &str = "stdin.txt";
pub const STDOUT_FILE: &str = "stdout.txt";
pub const STDERR_FILE: &str = "stderr.txt";

/// Directory under which per-run workdirs are allocated.
#[derive(Debug, Clone)]
pub struct SandboxRoot {
    path: PathBuf,
}

impl SandboxRoot {
    pub fn new(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        fs::create_dir_all(&path)?;
        if is_root() {
            // traversable by the guest identity, not listable
            fs::set_permissions(&path, fs::Permissions::from_mode(0o711))?;
        }
        Ok(Self { path: fs::canonicalize(path)? })
    }

    /// `$JUDGEKIT_SANDBOX_ROOT`, or `judgekit-sandbox` under the system temp dir.
    pub fn from_env() -> io::Result<Self> {
        match std::env::var_os("JUDGEKIT_SANDBOX_ROOT") {
            Some(p) => Self::new(PathBuf::from(p)),
            None => Self::new(std::env::temp_dir().join("judgekit-sandbox")),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Fresh, empty workdir owned by the policy's guest identity.
    pub fn workdir(&self, policy: &IsolationPolicy, prefix: &str) -> io::Result<Workdir> {
        let dir = tempfile::Builder::new().prefix(prefix).tempdir_in(&self.path)?;
        prepare_for_guest(dir.path(), policy)?;
        Ok(Workdir { dir })
    }
}

/// A per-run directory, removed on drop.
#[derive(Debug)]
pub struct Workdir {
    dir: TempDir,
}

impl Workdir {
    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    /// Keeps the directory on disk and returns its path.
    pub fn keep(self) -> PathBuf {
        self.dir.keep()
    }
}

/// Hands an existing directory to the guest identity.
pub fn prepare_for_guest(path: &Path, policy: &IsolationPolicy) -> io::Result<()> {
    fs::set_permissions(path, fs::Permissions::from_mode(0o700))?;
    if policy.mode == SandboxMode::Enforced && is_root() {
        std::os::unix::fs::chown(path, Some(policy.drop_to_uid), Some(policy.drop_to_gid))?;
    }
    Ok(())
}

pub(crate) fn is_root() -> bool {
    // SAFETY: geteuid has no preconditions.
    unsafe { libc::geteuid() == 0 }
}
