//! Isolation steps that run in the forked child before `execve`.
//!
//! Everything here executes between `fork` and `exec` in a possibly
//! multi-threaded parent, so the closure only issues raw syscalls on data
//! prepared beforehand. No allocation, no locks.

use std::ffi::CString;
use std::fs;
use std::io;
use std::os::fd::{AsRawFd, OwnedFd};
use std::os::unix::ffi::OsStrExt;
use std::path::Path;
use std::ptr;

use libc::{c_int, c_ulong};

use crate::limits::ExecutionLimits;
use crate::policy::{IsolationPolicy, SandboxMode};

/// Identifies the isolation step that failed in the child.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub(crate) enum Step {
    ProcessGroup = 1,
    DeathSignal,
    NetworkNamespace,
    MountNamespace,
    PrivatePropagation,
    ReadonlyRemount,
    MaskSiblings,
    BindWorkdir,
    WritableWorkdir,
    SealMask,
    EnterWorkdir,
    ResourceLimits,
    DropGroups,
    DropGid,
    DropUid,
    VerifyIdentity,
    NoNewPrivs,
    Trace,
}

impl Step {
    pub(crate) fn from_code(code: u8) -> Option<Self> {
        use Step::*;
        const ALL: [Step; 18] = [
            ProcessGroup,
            DeathSignal,
            NetworkNamespace,
            MountNamespace,
            PrivatePropagation,
            ReadonlyRemount,
            MaskSiblings,
            BindWorkdir,
            WritableWorkdir,
            SealMask,
            EnterWorkdir,
            ResourceLimits,
            DropGroups,
            DropGid,
            DropUid,
            VerifyIdentity,
            NoNewPrivs,
            Trace,
        ];
        ALL.into_iter().find(|s| *s as u8 == code)
    }

    pub(crate) fn describe(self) -> &'static str {
        match self {
            Step::ProcessGroup => "process group",
            Step::DeathSignal => "parent-death signal",
            Step::NetworkNamespace => "network namespace (unshare CLONE_NEWNET)",
            Step::MountNamespace => "mount namespace (unshare CLONE_NEWNS)",
            Step::PrivatePropagation => "private mount propagation",
            Step::ReadonlyRemount => "read-only remount of the filesystem tree",
            Step::MaskSiblings => "masking sibling workdirs",
            Step::BindWorkdir => "binding the workdir",
            Step::WritableWorkdir => "remounting the workdir writable",
            Step::SealMask => "sealing the workdir mask",
            Step::EnterWorkdir => "entering the workdir",
            Step::ResourceLimits => "setrlimit",
            Step::DropGroups => "dropping supplementary groups",
            Step::DropGid => "setgid",
            Step::DropUid => "setuid",
            Step::VerifyIdentity => "verifying dropped identity",
            Step::NoNewPrivs => "no_new_privs",
            Step::Trace => "ptrace(TRACEME)",
        }
    }
}

struct Remount {
    path: CString,
    flags: c_ulong,
    required: bool,
}

struct Mask {
    parent: CString,
    workdir_name_path: CString,
}

/// Everything the child needs, prepared in the parent.
pub(crate) struct ChildSetup {
    enforced: bool,
    network: bool,
    mount_ns: bool,
    remounts: Vec<Remount>,
    mask: Option<Mask>,
    workdir: CString,
    rlimits: Vec<(c_int, libc::rlimit)>,
    uid: libc::uid_t,
    gid: libc::gid_t,
    report_fd: c_int,
}

/// Parent-side resources that must outlive the spawn.
pub(crate) struct SetupGuard {
    report_read: OwnedFd,
    _report_write: OwnedFd,
}

impl SetupGuard {
    /// After a failed spawn: the step the child reported, if it got that far.
    pub(crate) fn failed_step(self) -> Option<Step> {
        let SetupGuard { report_read, _report_write } = self;
        drop(_report_write);
        let mut code = [0u8; 1];
        let n = std::io::Read::read(&mut std::fs::File::from(report_read), &mut code).unwrap_or(0);
        if n == 1 {
            Step::from_code(code[0])
        } else {
            None
        }
    }
}

pub(crate) fn prepare(
    policy: &IsolationPolicy,
    limits: &ExecutionLimits,
    workdir: &Path,
) -> io::Result<(ChildSetup, SetupGuard)> {
    let enforced = policy.mode == SandboxMode::Enforced;
    let (report_read, report_write) = pipe_cloexec()?;
    let workdir_c = cstring(workdir.as_os_str().as_bytes())?;

    let mut remounts = Vec::new();
    let mut mask = None;
    if enforced && policy.readonly_root {
        remounts = mount_table()?;
        if policy.mask_sibling_workdirs {
            let parent = workdir
                .parent()
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "workdir has no parent"))?;
            mask = Some(Mask {
                parent: cstring(parent.as_os_str().as_bytes())?,
                workdir_name_path: workdir_c.clone(),
            });
        }
    }

    let setup = ChildSetup {
        enforced,
        network: enforced && policy.network_isolated,
        mount_ns: enforced && policy.readonly_root,
        remounts,
        mask,
        workdir: workdir_c,
        rlimits: rlimits_for(limits),
        uid: policy.drop_to_uid,
        gid: policy.drop_to_gid,
        report_fd: report_write.as_raw_fd(),
    };
    Ok((
        setup,
        SetupGuard { report_read, _report_write: report_write },
    ))
}

impl ChildSetup {
    /// Runs in the child after fork. Async-signal-safe only.
    pub(crate) fn apply(&self) -> io::Result<()> {
        // SAFETY (whole function): raw syscalls on pointers to NUL-terminated
        // strings and plain structs owned by `self`, which outlives the calls.
        unsafe {
            self.check(Step::ProcessGroup, libc::setpgid(0, 0))?;
            self.check(Step::DeathSignal, libc::prctl(libc::PR_SET_PDEATHSIG, libc::SIGKILL as c_ulong))?;
            if self.network {
                self.check(Step::NetworkNamespace, libc::unshare(libc::CLONE_NEWNET))?;
            }
            if self.mount_ns {
                self.check(Step::MountNamespace, libc::unshare(libc::CLONE_NEWNS))?;
                self.check(
                    Step::PrivatePropagation,
                    libc::mount(ptr::null(), c"/".as_ptr(), ptr::null(), libc::MS_REC | libc::MS_PRIVATE, ptr::null()),
                )?;
                for m in &self.remounts {
                    let rc = libc::mount(
                        ptr::null(),
                        m.path.as_ptr(),
                        ptr::null(),
                        libc::MS_REMOUNT | libc::MS_BIND | libc::MS_RDONLY | m.flags,
                        ptr::null(),
                    );
                    if m.required {
                        self.check(Step::ReadonlyRemount, rc)?;
                    }
                }
                let bind_flags = libc::MS_NOSUID | libc::MS_NODEV;
                if let Some(mask) = &self.mask {
                    // the handle must come from this namespace to be bind-mountable
                    let fd = libc::open(self.workdir.as_ptr(), libc::O_PATH | libc::O_DIRECTORY | libc::O_CLOEXEC);
                    self.check(Step::MaskSiblings, fd)?;
                    let mut handle_path = [0u8; 32];
                    fd_path(fd, &mut handle_path);
                    self.check(
                        Step::MaskSiblings,
                        libc::mount(
                            c"tmpfs".as_ptr(),
                            mask.parent.as_ptr(),
                            c"tmpfs".as_ptr(),
                            libc::MS_NOSUID | libc::MS_NODEV | libc::MS_NOEXEC,
                            c"size=16k,mode=0755".as_ptr().cast(),
                        ),
                    )?;
                    self.check(Step::MaskSiblings, libc::mkdir(mask.workdir_name_path.as_ptr(), 0o700))?;
                    self.check(
                        Step::BindWorkdir,
                        libc::mount(
                            handle_path.as_ptr().cast(),
                            mask.workdir_name_path.as_ptr(),
                            ptr::null(),
                            libc::MS_BIND,
                            ptr::null(),
                        ),
                    )?;
                } else {
                    self.check(
                        Step::BindWorkdir,
                        libc::mount(self.workdir.as_ptr(), self.workdir.as_ptr(), ptr::null(), libc::MS_BIND, ptr::null()),
                    )?;
                }
                self.check(
                    Step::WritableWorkdir,
                    libc::mount(
                        ptr::null(),
                        self.workdir.as_ptr(),
                        ptr::null(),
                        libc::MS_REMOUNT | libc::MS_BIND | bind_flags,
                        ptr::null(),
                    ),
                )?;
                if let Some(mask) = &self.mask {
                    self.check(
                        Step::SealMask,
                        libc::mount(
                            ptr::null(),
                            mask.parent.as_ptr(),
                            ptr::null(),
                            libc::MS_REMOUNT | libc::MS_RDONLY | libc::MS_NOSUID | libc::MS_NODEV | libc::MS_NOEXEC,
                            ptr::null(),
                        ),
                    )?;
                }
                self.check(Step::EnterWorkdir, libc::chdir(self.workdir.as_ptr()))?;
            }
            for (resource, lim) in &self.rlimits {
                self.check(Step::ResourceLimits, libc::setrlimit(*resource as _, lim))?;
            }
            if self.enforced {
                self.check(Step::DropGroups, libc::setgroups(0, ptr::null()))?;
                self.check(Step::DropGid, libc::setresgid(self.gid, self.gid, self.gid))?;
                self.check(Step::DropUid, libc::setresuid(self.uid, self.uid, self.uid))?;
                if libc::getuid() != self.uid
                    || libc::geteuid() != self.uid
                    || libc::getgid() != self.gid
                    || libc::getegid() != self.gid
                {
                    return Err(self.fail(Step::VerifyIdentity, libc::EPERM));
                }
                self.check(Step::NoNewPrivs, libc::prctl(libc::PR_SET_NO_NEW_PRIVS, 1 as c_ulong, 0, 0, 0))?;
            }
            self.check(
                Step::Trace,
                libc::ptrace(libc::PTRACE_TRACEME, 0, ptr::null_mut::<libc::c_void>(), ptr::null_mut::<libc::c_void>())
                    as c_int,
            )?;
        }
        Ok(())
    }

    fn check(&self, step: Step, rc: c_int) -> io::Result<()> {
        if rc < 0 {
            let errno = io::Error::last_os_error().raw_os_error().unwrap_or(libc::EPERM);
            return Err(self.fail(step, errno));
        }
        Ok(())
    }

    fn fail(&self, step: Step, errno: c_int) -> io::Error {
        let code = [step as u8];
        // SAFETY: writing one byte from a stack buffer to a pipe we own.
        unsafe {
            libc::write(self.report_fd, code.as_ptr().cast(), 1);
        }
        io::Error::from_raw_os_error(errno)
    }
}

fn rlimits_for(limits: &ExecutionLimits) -> Vec<(c_int, libc::rlimit)> {
    let lim = |v: u64| libc::rlimit { rlim_cur: v as libc::rlim_t, rlim_max: v as libc::rlim_t };
    let mut out = vec![
        (libc::RLIMIT_FSIZE as c_int, lim(limits.file_size_bytes.max(limits.output_cap_bytes))),
        (libc::RLIMIT_STACK as c_int, lim(limits.stack_bytes)),
        (libc::RLIMIT_CORE as c_int, lim(0)),
    ];
    if limits.enforces_cpu() {
        // backstop only; the watchdog enforces the millisecond limit
        let secs = limits.cpu_time_ms.div_ceil(1000) + 1;
        out.push((
            libc::RLIMIT_CPU as c_int,
            libc::rlimit { rlim_cur: secs as libc::rlim_t, rlim_max: (secs + 1) as libc::rlim_t },
        ));
    }
    if limits.enforces_memory() {
        out.push((libc::RLIMIT_AS as c_int, lim(limits.memory_bytes)));
        out.push((libc::RLIMIT_DATA as c_int, lim(limits.memory_bytes)));
    }
    out
}

/// Mount points of the current namespace with the per-mount flags that must
/// survive a bind remount.
fn mount_table() -> io::Result<Vec<Remount>> {
    let text = fs::read_to_string("/proc/self/mountinfo")?;
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for line in text.lines() {
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() < 6 {
            continue;
        }
        let path = unescape_mount_path(fields[4]);
        if !seen.insert(path.clone()) {
            continue;
        }
        let mut flags = 0;
        for opt in fields[5].split(',') {
            flags |= match opt {
                "nosuid" => libc::MS_NOSUID,
                "nodev" => libc::MS_NODEV,
                "noexec" => libc::MS_NOEXEC,
                "noatime" => libc::MS_NOATIME,
                "nodiratime" => libc::MS_NODIRATIME,
                "relatime" => libc::MS_RELATIME,
                _ => 0,
            };
        }
        let required = !(path.starts_with(b"/proc") || path.starts_with(b"/sys"));
        out.push(Remount { path: cstring(&path)?, flags, required });
    }
    Ok(out)
}

fn unescape_mount_path(raw: &str) -> Vec<u8> {
    let bytes = raw.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\\' && i + 3 < bytes.len() && bytes[i + 1..i + 4].iter().all(|b| (b'0'..=b'7').contains(b)) {
            let v = (bytes[i + 1] - b'0') * 64 + (bytes[i + 2] - b'0') * 8 + (bytes[i + 3] - b'0');
            out.push(v);
            i += 4;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    out
}

fn cstring(bytes: &[u8]) -> io::Result<CString> {
    CString::new(bytes).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "path contains NUL"))
}

/// Writes `/proc/self/fd/<fd>\0` into `buf` without allocating.
fn fd_path(fd: c_int, buf: &mut [u8; 32]) {
    const PREFIX: &[u8] = b"/proc/self/fd/";
    buf[..PREFIX.len()].copy_from_slice(PREFIX);
    let mut digits = [0u8; 10];
    let mut n = fd.max(0) as u32;
    let mut len = 0;
    loop {
        digits[len] = b'0' + (n % 10) as u8;
        len += 1;
        n /= 10;
        if n == 0 {
            break;
        }
    }
    for i in 0..len {
        buf[PREFIX.len() + i] = digits[len - 1 - i];
    }
    buf[PREFIX.len() + len] = 0;
}

fn pipe_cloexec() -> io::Result<(OwnedFd, OwnedFd)> {
    let mut fds = [0 as c_int; 2];
    // SAFETY: fds is a valid two-element buffer.
    if unsafe { libc::pipe2(fds.as_mut_ptr(), libc::O_CLOEXEC) } < 0 {
        return Err(io::Error::last_os_error());
    }
    // SAFETY: both descriptors were just created and are exclusively ours.
    unsafe {
        Ok((
            <OwnedFd as std::os::fd::FromRawFd>::from_raw_fd(fds[0]),
            <OwnedFd as std::os::fd::FromRawFd>::from_raw_fd(fds[1]),
        ))
    }
}
