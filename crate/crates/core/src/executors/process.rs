use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::ExecResult;

pub(crate) enum Outcome {
    Finished(ExecResult),
    TimedOut,
}

fn drain(mut pipe: impl Read + Send + 'static) -> JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        buf
    })
}

pub(crate) fn exit_code(status: ExitStatus) -> i32 {
    status
        .code()
        .or_else(|| status.signal().map(|s| 128 + s))
        .unwrap_or(-1)
}

/// Runs `cmd` in its own process group with stdin closed, draining both
/// output pipes while it runs. On timeout the whole group is killed.
///
/// I/O errors come back untouched so callers can classify spawn failures.
pub(crate) fn run(mut cmd: Command, timeout: Duration) -> io::Result<Outcome> {
    cmd.stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    let start = Instant::now();
    let mut child: Child = cmd.spawn()?;
    let pid = child.id() as libc::pid_t;
    let out = drain(child.stdout.take().expect("stdout piped"));
    let err = drain(child.stderr.take().expect("stderr piped"));

    let (tx, rx) = mpsc::channel();
    let waiter = thread::spawn(move || {
        let _ = tx.send(child.wait());
    });

    let status = match rx.recv_timeout(timeout) {
        Ok(status) => status,
        Err(_) => {
            // SAFETY: killpg has no memory-safety preconditions; the group id
            // is the child's pid because of process_group(0).
            unsafe {
                libc::killpg(pid, libc::SIGKILL);
            }
            let _ = waiter.join();
            let _ = out.join();
            let _ = err.join();
            return Ok(Outcome::TimedOut);
        }
    };
    let _ = waiter.join();
    // Stragglers left in the group would hold the pipes open.
    // SAFETY: as above.
    unsafe {
        libc::killpg(pid, libc::SIGKILL);
    }
    let status = status?;
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    Ok(Outcome::Finished(ExecResult {
        exit_code: exit_code(status),
        stdout,
        stderr,
        wall_time: start.elapsed(),
    }))
}
