//! Process-group plumbing for the executor (unix only).

use std::io::Read;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

/// Output captured from one pipe, bounded to `limit` bytes.
#[derive(Debug, Default)]
pub(crate) struct Captured {
    pub bytes: Vec<u8>,
    pub truncated: bool,
}

/// Drains `pipe` on a background thread, keeping the first `limit` bytes.
/// The pipe is read to EOF regardless so the child never blocks on a full
/// buffer.
pub(crate) fn spawn_reader<R: Read + Send + 'static>(mut pipe: R, limit: usize) -> mpsc::Receiver<Captured> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut out = Captured::default();
        let mut chunk = [0u8; 8192];
        loop {
            match pipe.read(&mut chunk) {
                Ok(0) => break,
                Ok(n) => {
                    let room = limit.saturating_sub(out.bytes.len());
                    if n > room {
                        out.truncated = true;
                    }
                    out.bytes.extend_from_slice(&chunk[..n.min(room)]);
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        let _ = tx.send(out);
    });
    rx
}

/// Sends SIGKILL to every member of process group `pgid`.
pub(crate) fn kill_group(pgid: i32) {
    if pgid <= 1 {
        return;
    }
    // ESRCH just means the group is already gone.
    unsafe {
        libc::killpg(pgid, libc::SIGKILL);
    }
}

/// True while any non-zombie process belongs to group `pgid`.
#[cfg(target_os = "linux")]
pub fn process_group_alive(pgid: i32) -> bool {
    let Ok(entries) = std::fs::read_dir("/proc") else {
        return signal_probe(pgid);
    };
    for entry in entries.flatten() {
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if !name.bytes().all(|b| b.is_ascii_digit()) {
            continue;
        }
        let Ok(stat) = std::fs::read_to_string(entry.path().join("stat")) else {
            continue;
        };
        // pid (comm) state ppid pgrp ...; comm may contain spaces or parens.
        let Some(close) = stat.rfind(')') else { continue };
        let mut fields = stat[close + 1..].split_whitespace();
        let state = fields.next();
        let _ppid = fields.next();
        let pgrp = fields.next().and_then(|f| f.parse::<i32>().ok());
        if pgrp == Some(pgid) && state != Some("Z") && state != Some("X") {
            return true;
        }
    }
    false
}

#[cfg(not(target_os = "linux"))]
pub fn process_group_alive(pgid: i32) -> bool {
    signal_probe(pgid)
}

fn signal_probe(pgid: i32) -> bool {
    unsafe { libc::killpg(pgid, 0) == 0 }
}

/// Kills the group and waits (bounded) until no live member remains.
pub(crate) fn reap_group(pgid: i32, patience: Duration) -> bool {
    let start = Instant::now();
    loop {
        kill_group(pgid);
        if !process_group_alive(pgid) {
            return true;
        }
        if start.elapsed() >= patience {
            tracing::warn!(pgid, "process group still alive after kill");
            return false;
        }
        thread::sleep(Duration::from_millis(2));
    }
}
