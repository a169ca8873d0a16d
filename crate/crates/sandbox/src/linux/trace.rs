//! ptrace supervision of a guest process tree.
//!
//! The thread that spawned the guest is its tracer and must consume every
//! trace event of the tree until it is gone. Waits are scoped to the guest's
//! process group and to children of this thread, so concurrent executions on
//! other threads never steal each other's events.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io;
use std::mem;

use log::debug;

use crate::limits::ExecutionLimits;
use crate::outcome::WaitStatus;
use crate::whitelist::{syscall_name, CallSite, SyscallWhitelist};

const AUDIT_ARCH_X86_64: u32 = 0xC000_003E;
const X32_SYSCALL_BIT: u64 = 0x4000_0000;
const OP_ENTRY: u8 = 1;
const OP_EXIT: u8 = 2;
const WALL: i32 = libc::__WALL | libc::__WNOTHREAD;

#[repr(C)]
#[derive(Default)]
struct SyscallInfo {
    op: u8,
    _pad: [u8; 3],
    arch: u32,
    _ip: u64,
    _sp: u64,
    // entry: nr, args[6]; exit: rval, is_error
    data: [u64; 8],
}

#[derive(Default)]
struct Tracee {
    pending: Option<(u64, [u64; 6])>,
}

pub(crate) struct TraceConfig<'a> {
    pub whitelist: &'a SyscallWhitelist,
    pub enforce: bool,
    pub audit: bool,
    pub limits: ExecutionLimits,
}

#[derive(Debug, Default)]
pub(crate) struct TraceReport {
    pub wait: Option<WaitStatus>,
    pub illegal_syscall: Option<String>,
    pub cpu_time_ms: u64,
    pub peak_rss_bytes: u64,
    pub peak_vm_bytes: u64,
    /// Address-space size a refused allocation asked for.
    pub refused_vm_bytes: u64,
    pub stdout_written: u64,
    pub stderr_written: u64,
    pub output_killed: bool,
    pub audit: BTreeSet<String>,
}

pub(crate) struct Tracer<'a> {
    cfg: TraceConfig<'a>,
    main: i32,
    tracees: HashMap<i32, Tracee>,
    killed: bool,
    page_size: u64,
    report: TraceReport,
}

impl<'a> Tracer<'a> {
    pub(crate) fn new(main: i32, cfg: TraceConfig<'a>) -> Self {
        // SAFETY: sysconf has no preconditions.
        let page_size = unsafe { libc::sysconf(libc::_SC_PAGESIZE) }.max(4096) as u64;
        Self { cfg, main, tracees: HashMap::new(), killed: false, page_size, report: TraceReport::default() }
    }

    /// Runs until every process in the guest tree has exited.
    pub(crate) fn run(mut self) -> io::Result<TraceReport> {
        let main = self.main;
        // The guest stops with SIGTRAP right after its execve.
        let (status, _) = wait(main, 0)?;
        if libc::WIFEXITED(status) || libc::WIFSIGNALED(status) {
            self.report.wait = Some(WaitStatus::from_raw(status));
            return Ok(self.report);
        }
        let opts = libc::PTRACE_O_TRACESYSGOOD
            | libc::PTRACE_O_EXITKILL
            | libc::PTRACE_O_TRACEFORK
            | libc::PTRACE_O_TRACEVFORK
            | libc::PTRACE_O_TRACECLONE
            | libc::PTRACE_O_TRACEEXEC
            | libc::PTRACE_O_TRACEEXIT;
        ptrace(libc::PTRACE_SETOPTIONS, main, 0, opts as u64)?;
        self.tracees.insert(main, Tracee::default());
        self.resume(main, 0);

        loop {
            let (status, pid, rusage) = match wait_group(main) {
                Ok(v) => v,
                Err(e) if e.raw_os_error() == Some(libc::ECHILD) => break,
                Err(e) if e.raw_os_error() == Some(libc::EINTR) => continue,
                Err(e) => {
                    self.kill_tree();
                    return Err(e);
                }
            };
            if libc::WIFEXITED(status) || libc::WIFSIGNALED(status) {
                self.tracees.remove(&pid);
                if pid == main {
                    self.report.wait = Some(WaitStatus::from_raw(status));
                    self.report.cpu_time_ms = timeval_ms(rusage.ru_utime) + timeval_ms(rusage.ru_stime);
                    self.report.peak_rss_bytes = self.report.peak_rss_bytes.max(rusage.ru_maxrss as u64 * 1024);
                    // descendants do not outlive the guest
                    self.kill_tree();
                }
                if self.tracees.is_empty() && self.report.wait.is_some() {
                    break;
                }
                continue;
            }
            if !libc::WIFSTOPPED(status) {
                continue;
            }
            let sig = libc::WSTOPSIG(status);
            let event = (status >> 16) & 0xff;
            if sig == (libc::SIGTRAP | 0x80) {
                self.tracees.entry(pid).or_default();
                self.on_syscall_stop(pid);
            } else if sig == libc::SIGTRAP && event != 0 {
                self.on_event(pid, event);
            } else if let std::collections::hash_map::Entry::Vacant(e) = self.tracees.entry(pid) {
                // initial stop of an auto-attached child
                e.insert(Tracee::default());
                self.resume(pid, 0);
            } else {
                let deliver = match sig {
                    libc::SIGSTOP | libc::SIGTSTP | libc::SIGTTIN | libc::SIGTTOU => 0,
                    s => s,
                };
                self.resume(pid, deliver);
            }
        }
        Ok(self.report)
    }

    fn on_event(&mut self, pid: i32, event: i32) {
        match event {
            libc::PTRACE_EVENT_FORK | libc::PTRACE_EVENT_VFORK | libc::PTRACE_EVENT_CLONE => {
                let mut child: libc::c_ulong = 0;
                // SAFETY: GETEVENTMSG writes one unsigned long into `child`.
                let rc = unsafe { libc::ptrace(libc::PTRACE_GETEVENTMSG, pid, 0, &mut child as *mut libc::c_ulong) };
                if rc == 0 {
                    self.tracees.entry(child as i32).or_default();
                }
            }
            libc::PTRACE_EVENT_EXIT => {
                if let Some((vm_peak, rss_peak)) = read_peaks(pid) {
                    self.report.peak_vm_bytes = self.report.peak_vm_bytes.max(vm_peak);
                    self.report.peak_rss_bytes = self.report.peak_rss_bytes.max(rss_peak);
                }
            }
            _ => {}
        }
        self.resume(pid, 0);
    }

    fn on_syscall_stop(&mut self, pid: i32) {
        let mut info = SyscallInfo::default();
        // SAFETY: the kernel writes at most size_of::<SyscallInfo>() bytes into `info`.
        let rc = unsafe {
            libc::ptrace(
                libc::PTRACE_GET_SYSCALL_INFO as libc::c_uint,
                pid,
                mem::size_of::<SyscallInfo>(),
                &mut info as *mut SyscallInfo,
            )
        };
        if rc < 0 {
            // tracee vanished (killed while stopped)
            return;
        }
        match info.op {
            OP_ENTRY => self.on_entry(pid, &info),
            OP_EXIT => self.on_exit(pid, &info),
            _ => self.resume(pid, 0),
        }
    }

    fn on_entry(&mut self, pid: i32, info: &SyscallInfo) {
        let nr = info.data[0];
        let mut args = [0u64; 6];
        args.copy_from_slice(&info.data[1..7]);

        if self.cfg.audit {
            self.report.audit.insert(syscall_name(nr));
        }
        if self.cfg.enforce && !self.cfg.audit {
            let foreign = info.arch != AUDIT_ARCH_X86_64 || nr & X32_SYSCALL_BIT != 0;
            let allowed = !foreign && {
                let tgid = || thread_group(pid);
                let peek = |addr: u64| peek_word(pid, addr);
                self.cfg.whitelist.permits(&CallSite { nr, args, tid: pid, tgid: &tgid, peek: &peek })
            };
            if !allowed {
                let name = if foreign { format!("arch{:#x}:{}", info.arch, nr) } else { syscall_name(nr) };
                debug!("guest {pid} called disallowed syscall {name}");
                if self.report.illegal_syscall.is_none() {
                    self.report.illegal_syscall = Some(name);
                }
                self.kill_tree();
                return;
            }
        }
        if let Some(t) = self.tracees.get_mut(&pid) {
            t.pending = Some((nr, args));
        }
        self.resume(pid, 0);
    }

    fn on_exit(&mut self, pid: i32, info: &SyscallInfo) {
        let rval = info.data[0] as i64;
        let is_error = info.data[1] & 0xff != 0;
        let pending = self.tracees.get_mut(&pid).and_then(|t| t.pending.take());
        if let Some((nr, args)) = pending {
            match syscall_name(nr).as_str() {
                "mmap" if is_error && rval == -(libc::ENOMEM as i64) => self.refused_allocation(pid, args[1]),
                "mremap" if is_error && rval == -(libc::ENOMEM as i64) => {
                    self.refused_allocation(pid, args[2].saturating_sub(args[1]))
                }
                "brk" if args[0] != 0 && (rval as u64) < args[0] => {
                    self.refused_allocation(pid, args[0] - rval as u64)
                }
                "write" | "writev" | "pwrite64" | "pwritev" | "pwritev2" if !is_error && rval > 0 => {
                    match args[0] {
                        1 => self.report.stdout_written += rval as u64,
                        2 => self.report.stderr_written += rval as u64,
                        _ => {}
                    }
                    let cap = self.cfg.limits.output_cap_bytes;
                    if self.report.stdout_written > cap || self.report.stderr_written > cap {
                        self.report.output_killed = true;
                        self.kill_tree();
                        return;
                    }
                }
                _ => {}
            }
        }
        self.resume(pid, 0);
    }

    fn refused_allocation(&mut self, pid: i32, requested: u64) {
        if !self.cfg.limits.enforces_memory() {
            return;
        }
        let current = read_vm_size(pid, self.page_size).unwrap_or(0);
        let demanded = current.saturating_add(requested);
        self.report.refused_vm_bytes = self.report.refused_vm_bytes.max(demanded);
        debug!("guest {pid} refused allocation of {requested} bytes (vm {current})");
        self.kill_tree();
    }

    fn resume(&self, pid: i32, sig: i32) {
        // ESRCH just means the tracee is already gone.
        if self.killed {
            let _ = ptrace(libc::PTRACE_CONT, pid, 0, libc::SIGKILL as u64);
        } else {
            let _ = ptrace(libc::PTRACE_SYSCALL, pid, 0, sig as u64);
        }
    }

    fn kill_tree(&mut self) {
        self.killed = true;
        if self.tracees.is_empty() {
            return;
        }
        // SAFETY: the group id is our guest's; members are live, unreaped tracees.
        unsafe {
            libc::kill(-self.main, libc::SIGKILL);
            for &pid in self.tracees.keys() {
                libc::kill(pid, libc::SIGKILL);
            }
        }
        // a tracee parked in a ptrace stop is not reliably woken by SIGKILL
        for &pid in self.tracees.keys() {
            let _ = ptrace(libc::PTRACE_CONT, pid, 0, libc::SIGKILL as u64);
        }
    }
}

fn ptrace(req: libc::c_uint, pid: i32, addr: u64, data: u64) -> io::Result<()> {
    // SAFETY: requests used here take integer addr/data arguments.
    let rc = unsafe { libc::ptrace(req, pid, addr as *mut libc::c_void, data as *mut libc::c_void) };
    if rc < 0 {
        Err(io::Error::last_os_error())
    } else {
        Ok(())
    }
}

fn wait(pid: i32, flags: i32) -> io::Result<(i32, libc::rusage)> {
    let mut status = 0;
    // SAFETY: zeroed rusage is a valid value.
    let mut ru: libc::rusage = unsafe { mem::zeroed() };
    loop {
        // SAFETY: out-pointers are valid for the call.
        let rc = unsafe { libc::wait4(pid, &mut status, WALL | flags, &mut ru) };
        if rc >= 0 {
            return Ok((status, ru));
        }
        let err = io::Error::last_os_error();
        if err.raw_os_error() != Some(libc::EINTR) {
            return Err(err);
        }
    }
}

fn wait_group(pgid: i32) -> io::Result<(i32, i32, libc::rusage)> {
    let mut status = 0;
    // SAFETY: zeroed rusage is a valid value.
    let mut ru: libc::rusage = unsafe { mem::zeroed() };
    // SAFETY: out-pointers are valid for the call.
    let rc = unsafe { libc::wait4(-pgid, &mut status, WALL, &mut ru) };
    if rc < 0 {
        return Err(io::Error::last_os_error());
    }
    Ok((status, rc, ru))
}

fn peek_word(pid: i32, addr: u64) -> Option<u64> {
    // SAFETY: PEEKDATA reads tracee memory; errors are reported through errno.
    unsafe {
        *libc::__errno_location() = 0;
        let v = libc::ptrace(libc::PTRACE_PEEKDATA, pid, addr as *mut libc::c_void, std::ptr::null_mut::<libc::c_void>());
        if v == -1 && *libc::__errno_location() != 0 {
            None
        } else {
            Some(v as u64)
        }
    }
}

fn thread_group(tid: i32) -> i32 {
    fs::read_to_string(format!("/proc/{tid}/status"))
        .ok()
        .and_then(|s| s.lines().find_map(|l| l.strip_prefix("Tgid:").map(|v| v.trim().parse().ok())).flatten())
        .unwrap_or(tid)
}

fn read_vm_size(pid: i32, page_size: u64) -> Option<u64> {
    let statm = fs::read_to_string(format!("/proc/{pid}/statm")).ok()?;
    let pages: u64 = statm.split_whitespace().next()?.parse().ok()?;
    Some(pages * page_size)
}

/// (VmPeak, VmHWM) in bytes.
fn read_peaks(pid: i32) -> Option<(u64, u64)> {
    let status = fs::read_to_string(format!("/proc/{pid}/status")).ok()?;
    let field = |key: &str| {
        status.lines().find_map(|l| {
            l.strip_prefix(key)
                .and_then(|v| v.trim().trim_end_matches("kB").trim().parse::<u64>().ok())
                .map(|kb| kb * 1024)
        })
    };
    Some((field("VmPeak:")?, field("VmHWM:").unwrap_or(0)))
}

fn timeval_ms(tv: libc::timeval) -> u64 {
    tv.tv_sec as u64 * 1000 + tv.tv_usec as u64 / 1000
}
