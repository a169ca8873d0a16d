use std::sync::Arc;

use crate::error::SandboxError;
use crate::whitelist::SyscallWhitelist;

pub const DEFAULT_GUEST_UID: u32 = 1536;
pub const DEFAULT_GUEST_GID: u32 = 1536;

/// How strictly isolation is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SandboxMode {
    /// Every isolation layer is mandatory; any setup failure aborts the run.
    #[default]
    Enforced,
    /// UNSAFE development mode: rlimits and accounting only. No namespaces,
    /// no identity switch, no syscall filter. Never use with untrusted code.
    UnsafeDev,
}

/// Isolation settings for a guest.
#[derive(Debug, Clone)]
pub struct IsolationPolicy {
    pub syscall_whitelist: Arc<SyscallWhitelist>,
    pub drop_to_uid: u32,
    pub drop_to_gid: u32,
    pub network_isolated: bool,
    pub readonly_root: bool,
    /// Hide sibling workdirs by covering the workdir's parent with an empty
    /// read-only tmpfs. Only safe when the parent is a dedicated sandbox root.
    pub mask_sibling_workdirs: bool,
    /// Record every syscall instead of enforcing the whitelist. Used to build
    /// whitelists from a conformance corpus.
    pub audit: bool,
    pub mode: SandboxMode,
}

impl IsolationPolicy {
    pub fn new(whitelist: SyscallWhitelist) -> Self {
        Self {
            syscall_whitelist: Arc::new(whitelist),
            drop_to_uid: DEFAULT_GUEST_UID,
            drop_to_gid: DEFAULT_GUEST_GID,
            network_isolated: true,
            readonly_root: true,
            mask_sibling_workdirs: false,
            audit: false,
            mode: SandboxMode::Enforced,
        }
    }

    /// Policy using one of the whitelists shipped with the crate.
    pub fn builtin(profile: &str) -> Option<Self> {
        SyscallWhitelist::builtin(profile).map(Self::new)
    }

    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.syscall_whitelist.is_empty() {
            return Err(SandboxError::InvalidPolicy("syscall whitelist is empty".into()));
        }
        if self.mode == SandboxMode::Enforced && (self.drop_to_uid == 0 || self.drop_to_gid == 0) {
            return Err(SandboxError::InvalidPolicy("guests never run as root (uid/gid 0)".into()));
        }
        Ok(())
    }
}
