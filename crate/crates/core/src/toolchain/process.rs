use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

#[derive(Debug, Clone)]
pub struct ProcessOutput {
    pub stdout: String,
    pub stderr: String,
    /// `None` when the process was killed or ended by a signal.
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub elapsed: Duration,
}

impl ProcessOutput {
    pub fn success(&self) -> bool {
        !self.timed_out && self.exit_code == Some(0)
    }

    /// stderr followed by stdout.
    pub fn combined(&self) -> String {
        let mut s = self.stderr.clone();
        if !s.is_empty() && !s.ends_with('\n') && !self.stdout.is_empty() {
            s.push('\n');
        }
        s.push_str(&self.stdout);
        s
    }
}

/// Run `argv` in `cwd`, killing it after `timeout`. Pipes are drained on
/// background threads so a chatty child cannot block on a full pipe.
pub fn run(argv: &[String], cwd: &Path, timeout: Duration) -> std::io::Result<ProcessOutput> {
    let (program, args) =
        argv.split_first().ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"))?;
    let start = Instant::now();
    let mut cmd = Command::new(program);
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let mut child = cmd
        .args(args)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .env("LC_ALL", "C")
        .spawn()?;

    let mut out_pipe = child.stdout.take().expect("piped stdout");
    let mut err_pipe = child.stderr.take().expect("piped stderr");
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out_pipe.read_to_end(&mut buf);
        buf
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err_pipe.read_to_end(&mut buf);
        buf
    });

    let (exit_code, timed_out) = match child.wait_timeout(timeout)? {
        Some(status) => (status.code(), false),
        None => {
            kill_group(&mut child);
            let _ = child.wait();
            (None, true)
        }
    };
    let stdout = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
    Ok(ProcessOutput { stdout, stderr, exit_code, timed_out, elapsed: start.elapsed() })
}

/// Kill the child and anything it spawned (compiler drivers fork cc1/ld,
/// which would otherwise keep the pipes open).
fn kill_group(child: &mut std::process::Child) {
    #[cfg(unix)]
    // SAFETY: plain syscall on a process group id we created.
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.kill();
}
