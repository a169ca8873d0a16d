use std::fs;
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::limits::ExecutionLimits;

const POLL: Duration = Duration::from_millis(5);

/// Kills the guest when its cpu or wall budget runs out.
///
/// The kill goes through a pidfd so a recycled pid can never be hit. The
/// watchdog only kills; classification later works from measured usage.
pub(crate) struct Watchdog {
    stop: Option<Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

impl Watchdog {
    pub(crate) fn start(pid: i32, started: Instant, limits: ExecutionLimits) -> Self {
        // SAFETY: pidfd_open takes a pid and flags; the pid is our unreaped child.
        let pidfd = unsafe { libc::syscall(libc::SYS_pidfd_open, pid, 0) } as i32;
        let (tx, rx) = mpsc::channel::<()>();
        let handle = thread::Builder::new()
            .name(format!("watchdog-{pid}"))
            .spawn(move || {
                let ticks_per_sec = clock_ticks();
                loop {
                    match rx.recv_timeout(POLL) {
                        Err(RecvTimeoutError::Timeout) => {}
                        _ => break,
                    }
                    let wall_over = started.elapsed().as_millis() as u64 >= limits.wall_time_ms;
                    let cpu_over = limits.enforces_cpu()
                        && cpu_ms(pid, ticks_per_sec).is_some_and(|ms| ms >= limits.cpu_time_ms);
                    if wall_over || cpu_over {
                        kill(pidfd, pid);
                        break;
                    }
                }
                if pidfd >= 0 {
                    // SAFETY: closing the descriptor we opened above.
                    unsafe { libc::close(pidfd) };
                }
            })
            .expect("spawn watchdog thread");
        Self { stop: Some(tx), handle: Some(handle) }
    }
}

impl Drop for Watchdog {
    fn drop(&mut self) {
        drop(self.stop.take());
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn kill(pidfd: i32, pid: i32) {
    // SAFETY: plain signal delivery syscalls.
    unsafe {
        if pidfd >= 0 {
            libc::syscall(libc::SYS_pidfd_send_signal, pidfd, libc::SIGKILL, std::ptr::null::<libc::c_void>(), 0);
        } else {
            libc::kill(pid, libc::SIGKILL);
        }
    }
}

fn clock_ticks() -> u64 {
    // SAFETY: sysconf has no preconditions.
    let t = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    if t > 0 {
        t as u64
    } else {
        100
    }
}

/// utime + stime + reaped children, from `/proc/<pid>/stat`.
pub(crate) fn cpu_ms(pid: i32, ticks_per_sec: u64) -> Option<u64> {
    let stat = fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    parse_stat_cpu_ticks(&stat).map(|ticks| ticks * 1000 / ticks_per_sec)
}

fn parse_stat_cpu_ticks(stat: &str) -> Option<u64> {
    // fields after the parenthesised comm start at field 3 (state)
    let rest = &stat[stat.rfind(')')? + 2..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    // utime, stime, cutime, cstime are fields 14..=17 overall
    let sum = fields.get(11..15)?.iter().map(|f| f.parse::<u64>().unwrap_or(0)).sum();
    Some(sum)
}
