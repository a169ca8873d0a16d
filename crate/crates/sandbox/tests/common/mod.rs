#![allow(dead_code)]

pub mod corpus;

use std::path::Path;
use std::sync::OnceLock;

use judgekit_sandbox::{execute, ExecutionLimits, ExecutionOutcome, IsolationPolicy, SandboxRoot};

pub fn root() -> &'static SandboxRoot {
    static ROOT: OnceLock<SandboxRoot> = OnceLock::new();
    ROOT.get_or_init(|| SandboxRoot::new(std::env::temp_dir().join("judgekit-sandbox-tests")).unwrap())
}

/// Full isolation needs root on x86_64 Linux; elsewhere these tests are skipped.
pub fn isolation_available() -> bool {
    let ok = cfg!(all(target_os = "linux", target_arch = "x86_64")) && nix_is_root();
    if !ok {
        eprintln!("skipping: isolation requires root on x86_64 Linux");
    }
    ok
}

fn nix_is_root() -> bool {
    std::fs::read_to_string("/proc/self/status")
        .ok()
        .and_then(|s| s.lines().find(|l| l.starts_with("Uid:")).map(|l| l.split_whitespace().nth(2) == Some("0")))
        .unwrap_or(false)
}

pub fn run_py(code: &str, stdin: &[u8], limits: &ExecutionLimits) -> ExecutionOutcome {
    let policy = IsolationPolicy::builtin("python3").unwrap();
    let dir = root().workdir(&policy, "py-").unwrap();
    let script = dir.path().join("main.py");
    std::fs::write(&script, code).unwrap();
    run_in(dir.path(), &["/usr/bin/python3", script.to_str().unwrap()], stdin, limits, &policy)
}

pub fn run_in(
    dir: &Path,
    cmd: &[&str],
    stdin: &[u8],
    limits: &ExecutionLimits,
    policy: &IsolationPolicy,
) -> ExecutionOutcome {
    let cmd: Vec<String> = cmd.iter().map(|s| s.to_string()).collect();
    execute(&cmd, stdin, limits, policy, dir).unwrap()
}
