//! Subprocess execution with wall-clock timeouts.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;

use wait_timeout::ChildExt;

/// Single-quotes `s` for `sh`.
pub fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}

pub enum RunOutcome {
    Exited {
        success: bool,
        code: Option<i32>,
        stdout: String,
        stderr: String,
    },
    TimedOut,
}

/// Runs `sh -c command` in `dir`, killing it after `timeout`.
pub fn run_with_timeout(command: &str, dir: &Path, timeout: Duration) -> std::io::Result<RunOutcome> {
    run_shell(Command::new("sh").arg("-c").arg(command), dir, timeout)
}

pub fn run_shell(cmd: &mut Command, dir: &Path, timeout: Duration) -> std::io::Result<RunOutcome> {
    use std::os::unix::process::CommandExt;
    let mut child = cmd
        .current_dir(dir)
        .process_group(0)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;
    // Drain pipes on threads so a chatty child cannot block on a full pipe.
    let mut so = child.stdout.take().unwrap();
    let mut se = child.stderr.take().unwrap();
    let t_out = std::thread::spawn(move || {
        let mut v = Vec::new();
        let _ = so.read_to_end(&mut v);
        v
    });
    let t_err = std::thread::spawn(move || {
        let mut v = Vec::new();
        let _ = se.read_to_end(&mut v);
        v
    });
    let status = match child.wait_timeout(timeout)? {
        Some(s) => s,
        None => {
            // Kill the whole process group so shell grandchildren die too.
            let _ = Command::new("kill").args(["-KILL", "--", &format!("-{}", child.id())]).status();
            let _ = child.kill();
            let _ = child.wait();
            return Ok(RunOutcome::TimedOut);
        }
    };
    let stdout = String::from_utf8_lossy(&t_out.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&t_err.join().unwrap_or_default()).into_owned();
    Ok(RunOutcome::Exited {
        success: status.success(),
        code: status.code(),
        stdout,
        stderr,
    })
}
