//! Guest corpus under `tests/guests`: each file starts with comment headers
//! naming the expected termination and any limit overrides.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use judgekit_sandbox::{
    execute, ExecutionLimits, ExecutionOutcome, IsolationPolicy, SandboxRoot, TerminationKind, MIB,
};

pub fn guests_dir() -> PathBuf {
    // resolves from any crate in the workspace
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../sandbox/tests/guests")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expect {
    Exited(i32),
    Signaled(String),
    Cpu,
    Wall,
    Memory,
    Output,
    /// Any of the listed syscall names.
    Illegal(Vec<String>),
}

impl Expect {
    fn parse(s: &str) -> Expect {
        let mut it = s.split_whitespace();
        match (it.next(), it.next()) {
            (Some("exited"), Some(c)) => Expect::Exited(c.parse().expect("exit code")),
            (Some("signaled"), Some(sig)) => Expect::Signaled(sig.to_string()),
            (Some("cpu"), None) => Expect::Cpu,
            (Some("wall"), None) => Expect::Wall,
            (Some("memory"), None) => Expect::Memory,
            (Some("output"), None) => Expect::Output,
            (Some("illegal"), Some(names)) => Expect::Illegal(names.split('|').map(String::from).collect()),
            _ => panic!("bad expectation `{s}`"),
        }
    }

    pub fn matches(&self, t: &TerminationKind) -> bool {
        match (self, t) {
            (Expect::Exited(a), TerminationKind::Exited(b)) => a == b,
            (Expect::Signaled(name), TerminationKind::Signaled(sig)) => {
                judgekit_sandbox::signal_name(*sig) == name
            }
            (Expect::Cpu, TerminationKind::CpuTimeViolation) => true,
            (Expect::Wall, TerminationKind::WallTimeViolation) => true,
            (Expect::Memory, TerminationKind::MemoryViolation) => true,
            (Expect::Output, TerminationKind::OutputViolation) => true,
            (Expect::Illegal(names), TerminationKind::IllegalSyscall(n)) => names.iter().any(|x| x == n),
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Guest {
    pub name: String,
    pub path: PathBuf,
    pub lang: &'static str,
    pub expect: Option<Expect>,
    pub expect_stdout: Option<String>,
    pub echo: bool,
    pub forbid: Vec<PathBuf>,
    pub limits: ExecutionLimits,
}

impl Guest {
    pub fn load(path: &Path) -> Guest {
        let text = fs::read_to_string(path).unwrap();
        let lang = match path.extension().and_then(|e| e.to_str()) {
            Some("c") => "c",
            Some("cpp") => "cpp",
            Some("py") => "python3",
            other => panic!("unknown guest extension {other:?}"),
        };
        let mut g = Guest {
            name: path.file_name().unwrap().to_string_lossy().into_owned(),
            path: path.to_path_buf(),
            lang,
            expect: None,
            expect_stdout: None,
            echo: false,
            forbid: Vec::new(),
            limits: ExecutionLimits::default(),
        };
        for line in text.lines() {
            let Some(h) = line.strip_prefix("// ").or_else(|| line.strip_prefix("# ")) else { break };
            if let Some(v) = h.strip_prefix("expect: ") {
                g.expect = Some(Expect::parse(v));
            } else if let Some(v) = h.strip_prefix("stdout: ") {
                g.expect_stdout = Some(format!("{v}\n"));
            } else if h == "echo" {
                g.echo = true;
            } else if let Some(v) = h.strip_prefix("forbid: ") {
                g.forbid.push(PathBuf::from(v));
            } else if let Some(v) = h.strip_prefix("limits: ") {
                for kv in v.split_whitespace() {
                    let (k, n) = kv.split_once('=').unwrap();
                    let n: u64 = n.parse().unwrap();
                    match k {
                        "cpu_ms" => g.limits.cpu_time_ms = n,
                        "wall_ms" => g.limits.wall_time_ms = n,
                        "memory_mib" => g.limits.memory_bytes = n * MIB,
                        "stack_mib" => g.limits.stack_bytes = n * MIB,
                        "output_mib" => g.limits.output_cap_bytes = n * MIB,
                        _ => panic!("unknown limit {k}"),
                    }
                }
            }
        }
        g
    }

    pub fn all(sub: &str) -> Vec<Guest> {
        let mut paths: Vec<PathBuf> = fs::read_dir(guests_dir().join(sub))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        paths.sort();
        paths.iter().map(|p| Guest::load(p)).collect()
    }
}

/// Host-side build of native guests into a world-readable cache directory.
pub fn build_native(guest: &Guest) -> PathBuf {
    let dir = std::env::temp_dir().join("judgekit-guest-bin");
    fs::create_dir_all(&dir).unwrap();
    let bin = dir.join(&guest.name);
    let fresh = match (fs::metadata(&bin), fs::metadata(&guest.path)) {
        (Ok(b), Ok(s)) => b.modified().unwrap() >= s.modified().unwrap(),
        _ => false,
    };
    if !fresh {
        let cc = if guest.lang == "cpp" { "g++" } else { "gcc" };
        let tmp = dir.join(format!("{}.{}.tmp", guest.name, std::process::id()));
        let out = Command::new(cc).arg("-O1").arg("-o").arg(&tmp).arg(&guest.path).output().unwrap();
        assert!(out.status.success(), "{cc} {}: {}", guest.name, String::from_utf8_lossy(&out.stderr));
        fs::rename(&tmp, &bin).unwrap();
    }
    bin
}

pub fn run_guest(root: &SandboxRoot, guest: &Guest, stdin: &[u8]) -> ExecutionOutcome {
    let policy = IsolationPolicy::builtin(guest.lang).unwrap();
    let dir = root.workdir(&policy, "guest-").unwrap();
    let command: Vec<String> = if guest.lang == "python3" {
        let script = dir.path().join("main.py");
        fs::copy(&guest.path, &script).unwrap();
        vec!["/usr/bin/python3".into(), script.to_string_lossy().into_owned()]
    } else {
        vec![build_native(guest).to_string_lossy().into_owned()]
    };
    execute(&command, stdin, &guest.limits, &policy, dir.path()).unwrap()
}

/// Checks one hostile guest; returns a description of any mismatch.
pub fn check_hostile(root: &SandboxRoot, guest: &Guest) -> Result<ExecutionOutcome, String> {
    for f in &guest.forbid {
        let _ = fs::remove_file(f);
    }
    let out = run_guest(root, guest, b"");
    let expect = guest.expect.as_ref().expect("hostile guest declares an expectation");
    if !expect.matches(&out.termination) {
        return Err(format!("expected {expect:?}, got {:?} (stderr: {})", out.termination, out.stderr_lossy()));
    }
    for f in &guest.forbid {
        if f.exists() {
            return Err(format!("guest created {}", f.display()));
        }
    }
    Ok(out)
}

pub const ECHO_INPUT: &[u8] = b"hello\n1 2 3\n\nlast line\n";

pub fn check_conformance(root: &SandboxRoot, guest: &Guest) -> Result<ExecutionOutcome, String> {
    let out = run_guest(root, guest, if guest.echo { ECHO_INPUT } else { b"" });
    if out.termination != TerminationKind::Exited(0) {
        return Err(format!("{:?} (stderr: {})", out.termination, out.stderr_lossy()));
    }
    let want: &[u8] = match (&guest.expect_stdout, guest.echo) {
        (Some(s), _) => s.as_bytes(),
        (None, true) => ECHO_INPUT,
        (None, false) => return Ok(out),
    };
    if out.stdout != want {
        return Err(format!("stdout {:?}", out.stdout_lossy()));
    }
    Ok(out)
}
