use serde::{Deserialize, Serialize};

use crate::error::SandboxError;

pub const MIB: u64 = 1 << 20;

/// Resource caps applied to one guest run.
///
/// `memory_bytes` bounds the address space and data segment. When
/// `unlimited` is set the cpu and memory caps are not applied, but the wall
/// clock and output caps still are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutionLimits {
    pub cpu_time_ms: u64,
    pub wall_time_ms: u64,
    pub memory_bytes: u64,
    pub file_size_bytes: u64,
    pub stack_bytes: u64,
    pub output_cap_bytes: u64,
    pub unlimited: bool,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        Self {
            cpu_time_ms: 2_000,
            wall_time_ms: 6_000,
            memory_bytes: 256 * MIB,
            file_size_bytes: 64 * MIB,
            stack_bytes: 256 * MIB,
            output_cap_bytes: 64 * MIB,
            unlimited: false,
        }
    }
}

impl ExecutionLimits {
    /// Limits for a problem's time/memory constraints. Wall clock gets a
    /// generous multiple of the cpu budget so that scheduling noise on a busy
    /// host does not turn into spurious wall-time kills.
    pub fn for_problem(time_limit_ms: u64, memory_limit_bytes: u64) -> Self {
        Self {
            cpu_time_ms: time_limit_ms,
            wall_time_ms: time_limit_ms.saturating_mul(3).max(time_limit_ms + 1_000),
            memory_bytes: memory_limit_bytes,
            ..Self::default()
        }
    }

    /// "No restrictions" mode used for generator runs: cpu and memory caps off,
    /// 300 s wall clock and 256 MiB output kept as host protection.
    pub fn unlimited() -> Self {
        Self {
            cpu_time_ms: 300_000,
            wall_time_ms: 300_000,
            memory_bytes: u64::MAX,
            file_size_bytes: 256 * MIB,
            stack_bytes: 256 * MIB,
            output_cap_bytes: 256 * MIB,
            unlimited: true,
        }
    }

    pub fn with_cpu_ms(mut self, ms: u64) -> Self {
        self.cpu_time_ms = ms;
        self
    }

    pub fn with_wall_ms(mut self, ms: u64) -> Self {
        self.wall_time_ms = ms;
        self
    }

    pub fn with_memory(mut self, bytes: u64) -> Self {
        self.memory_bytes = bytes;
        self
    }

    pub fn with_output_cap(mut self, bytes: u64) -> Self {
        self.output_cap_bytes = bytes;
        self
    }

    pub fn validate(&self) -> Result<(), SandboxError> {
        let fields = [
            ("cpu_time_ms", self.cpu_time_ms),
            ("wall_time_ms", self.wall_time_ms),
            ("memory_bytes", self.memory_bytes),
            ("file_size_bytes", self.file_size_bytes),
            ("stack_bytes", self.stack_bytes),
            ("output_cap_bytes", self.output_cap_bytes),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(SandboxError::InvalidLimits(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub(crate) fn enforces_cpu(&self) -> bool {
        !self.unlimited
    }

    pub(crate) fn enforces_memory(&self) -> bool {
        !self.unlimited && self.memory_bytes != u64::MAX
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_constants() {
        let l = ExecutionLimits::default();
        assert_eq!(l.file_size_bytes, 64 * 1024 * 1024);
        assert_eq!(l.stack_bytes, 256 * 1024 * 1024);
        assert!(l.validate().is_ok());
    }

    #[test]
    fn unlimited_keeps_backstops() {
        let l = ExecutionLimits::unlimited();
        assert!(l.unlimited);
        assert_eq!(l.wall_time_ms, 300_000);
        assert_eq!(l.output_cap_bytes, 256 * MIB);
        assert!(!l.enforces_cpu());
        assert!(!l.enforces_memory());
    }

    #[test]
    fn zero_field_rejected() {
        let l = ExecutionLimits::default().with_cpu_ms(0);
        assert!(l.validate().is_err());
    }
}
