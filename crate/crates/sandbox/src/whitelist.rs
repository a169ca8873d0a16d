//! Per-language system call whitelists.
//!
//! A whitelist file lists one syscall name per line. A name may be followed
//! by a single constraint keyword that narrows the allowed arguments:
//!
//! ```text
//! # comment
//! read
//! kill self        # only when signalling the caller's own process
//! prlimit64 query  # reading limits only, never setting them
//! clone thread     # new threads only, never new processes
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::SandboxError;
use crate::syscall_table;

const CLONE_THREAD: u64 = 0x0001_0000;

/// Additional argument check attached to a whitelisted syscall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Constraint {
    None,
    /// First argument must name the calling process (signals to self).
    SelfTarget,
    /// `prlimit64` with a null new-limit pointer.
    Query,
    /// `clone`/`clone3` creating a thread in the same process.
    Thread,
}

impl Constraint {
    fn parse(word: &str) -> Option<Self> {
        match word {
            "self" => Some(Self::SelfTarget),
            "query" => Some(Self::Query),
            "thread" => Some(Self::Thread),
            _ => None,
        }
    }

    fn keyword(self) -> Option<&'static str> {
        match self {
            Self::None => None,
            Self::SelfTarget => Some("self"),
            Self::Query => Some("query"),
            Self::Thread => Some("thread"),
        }
    }
}

/// What the tracer knows about the call being checked.
pub struct CallSite<'a> {
    pub nr: u64,
    pub args: [u64; 6],
    pub tid: i32,
    /// Thread group of the caller; computed lazily since most calls never need it.
    pub tgid: &'a dyn Fn() -> i32,
    /// Reads a word of tracee memory.
    pub peek: &'a dyn Fn(u64) -> Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyscallWhitelist {
    name: String,
    allowed: BTreeMap<u64, Constraint>,
}

impl SyscallWhitelist {
    pub fn parse(name: &str, text: &str) -> Result<Self, SandboxError> {
        let mut allowed = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| SandboxError::Whitelist {
                name: name.to_string(),
                line: idx + 1,
                reason,
            };
            let mut words = line.split_whitespace();
            let call = words.next().unwrap_or_default();
            let constraint = match words.next() {
                None => Constraint::None,
                Some(w) => Constraint::parse(w).ok_or_else(|| err(format!("unknown constraint `{w}`")))?,
            };
            if let Some(extra) = words.next() {
                return Err(err(format!("unexpected token `{extra}`")));
            }
            let nr = syscall_number(call).ok_or_else(|| err(format!("unknown syscall `{call}`")))?;
            allowed.insert(nr, constraint);
        }
        if allowed.is_empty() {
            return Err(SandboxError::Whitelist {
                name: name.to_string(),
                line: 0,
                reason: "whitelist is empty".into(),
            });
        }
        Ok(Self { name: name.to_string(), allowed })
    }

    pub fn load(path: &Path) -> Result<Self, SandboxError> {
        let text = fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Self::parse(&name, &text)
    }

    /// Whitelist shipped with the crate for a profile (`cpp`, `python3`, `compile`).
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "cpp" | "c" => include_str!("../whitelists/cpp.txt"),
            "python3" | "python2" | "python" => include_str!("../whitelists/python.txt"),
            "compile" => include_str!("../whitelists/compile.txt"),
            _ => return None,
        };
        Some(Self::parse(name, text).expect("builtin whitelist is valid"))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.allowed.keys().map(|&nr| syscall_name(nr)).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        syscall_number(name).is_some_and(|nr| self.allowed.contains_key(&nr))
    }

    pub fn permits(&self, call: &CallSite<'_>) -> bool {
        let Some(constraint) = self.allowed.get(&call.nr) else {
            return false;
        };
        match constraint {
            Constraint::None => true,
            Constraint::SelfTarget => self_targeted(call),
            Constraint::Query => {
                let pid = call.args[0] as i32;
                call.args[2] == 0 && (pid == 0 || pid == (call.tgid)())
            }
            Constraint::Thread => {
                let flags = if syscall_name(call.nr) == "clone3" {
                    match (call.peek)(call.args[0]) {
                        Some(flags) => flags,
                        None => return false,
                    }
                } else {
                    call.args[0]
                };
                flags & CLONE_THREAD != 0
            }
        }
    }

    /// Renders back into the file format, sorted by syscall number.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (&nr, c) in &self.allowed {
            out.push_str(&syscall_name(nr));
            if let Some(k) = c.keyword() {
                out.push(' ');
                out.push_str(k);
            }
            out.push('\n');
        }
        out
    }
}

fn self_targeted(call: &CallSite<'_>) -> bool {
    let first = call.args[0] as i32;
    match syscall_name(call.nr).as_str() {
        "tkill" => first == call.tid || first == (call.tgid)(),
        _ => first == (call.tgid)(),
    }
}

fn table() -> &'static (BTreeMap<&'static str, u64>, BTreeMap<u64, &'static str>) {
    static TABLE: OnceLock<(BTreeMap<&'static str, u64>, BTreeMap<u64, &'static str>)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let by_name = syscall_table::X86_64.iter().copied().collect();
        let by_nr = syscall_table::X86_64.iter().map(|&(n, nr)| (nr, n)).collect();
        (by_name, by_nr)
    })
}

pub fn syscall_number(name: &str) -> Option<u64> {
    table().0.get(name).copied()
}

/// Name for a syscall number; unknown numbers render as `syscall_<nr>`.
pub fn syscall_name(nr: u64) -> String {
    match table().1.get(&nr) {
        Some(name) => (*name).to_string(),
        None => format!("syscall_{nr}"),
    }
}
