//! Runs a candidate plus its task's tests in a child process and
//! classifies the result.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use polyeval_core::{
    tail_at_char_boundary, ExecutionOutcome, OutcomeStatus, PatternFile, RuntimeProfile, SampleKey,
    TaskSpec, OUTPUT_TAIL_CAP,
};

use crate::sync::Semaphore;

/// Time a child gets between the graceful and the forced signal.
pub const KILL_GRACE: Duration = Duration::from_millis(500);

const POLL: Duration = Duration::from_millis(5);

/// Stands in for the per-execution temp directory in captured output,
/// so tracebacks are identical across runs.
pub const WORKDIR_PLACEHOLDER: &str = "<workdir>";

/// Part of the grace budget kept back for delivering the forced kill.
const FORCED_KILL_RESERVE: Duration = Duration::from_millis(30);

/// Classified result of one execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub status: OutcomeStatus,
    pub duration_ms: u64,
    pub stdout_tail: String,
    pub stderr_tail: String,
}

impl Verdict {
    fn instant(status: OutcomeStatus, stderr: String) -> Self {
        Verdict {
            status,
            duration_ms: 0,
            stdout_tail: String::new(),
            stderr_tail: tail_at_char_boundary(&stderr, OUTPUT_TAIL_CAP).to_string(),
        }
    }

    pub fn into_outcome(self, key: &SampleKey) -> ExecutionOutcome {
        ExecutionOutcome {
            model_id: key.model_id.clone(),
            task_id: key.task_id.clone(),
            sample_index: key.sample_index,
            status: self.status,
            duration_ms: self.duration_ms,
            stdout_tail: self.stdout_tail,
            stderr_tail: self.stderr_tail,
        }
    }
}

/// The harness source: candidate code, a blank line, then the tests.
pub fn harness_source(code: &str, test_source: &str) -> String {
    let mut source = String::with_capacity(code.len() + test_source.len() + 2);
    source.push_str(code);
    source.push_str("\n\n");
    source.push_str(test_source);
    source
}

pub struct Sandbox {
    slots: Semaphore,
    patterns: PatternFile,
}

impl Default for Sandbox {
    fn default() -> Self {
        let cpus = thread::available_parallelism().map_or(1, |n| n.get());
        Sandbox::new(cpus)
    }
}

impl Sandbox {
    /// At most `max_children` candidates run at once.
    pub fn new(max_children: usize) -> Self {
        Sandbox {
            slots: Semaphore::new(max_children),
            patterns: PatternFile::builtin(),
        }
    }

    pub fn with_patterns(mut self, patterns: PatternFile) -> Self {
        self.patterns = patterns;
        self
    }

    pub fn evaluate_sample(&self, code: &str, task: &TaskSpec, profile: &RuntimeProfile) -> Verdict {
        if code.trim().is_empty() {
            return Verdict::instant(OutcomeStatus::EmptyCode, String::new());
        }
        let _slot = self.slots.acquire();
        match self.run(code, task, profile) {
            Ok(v) => v,
            Err(e) => Verdict::instant(OutcomeStatus::SandboxError, format!("sandbox: {e}")),
        }
    }

    fn run(&self, code: &str, task: &TaskSpec, profile: &RuntimeProfile) -> std::io::Result<Verdict> {
        let workdir = tempfile::Builder::new().prefix("polyeval-").tempdir()?;
        let harness = workdir.path().join(&profile.harness_file);
        std::fs::write(&harness, harness_source(code, &task.test_source))?;

        let mut command = build_command(profile, &harness, workdir.path())?;
        let started = Instant::now();
        let mut child = command.spawn()?;
        let stdout = TailReader::spawn(child.stdout.take());
        let stderr = TailReader::spawn(child.stderr.take());

        let limit = Duration::from_secs_f64(task.timeout_s.max(0.0));
        let exit = loop {
            if let Some(status) = child.try_wait()? {
                break Some(status);
            }
            if started.elapsed() >= limit {
                break None;
            }
            thread::sleep(POLL);
        };
        let status = match exit {
            Some(status) => {
                // reap anything the candidate left running in its group
                signal_group(child.id(), libc::SIGKILL);
                Some(status)
            }
            None => {
                // the poll may overshoot the limit; take that out of the grace
                let overshoot = started.elapsed().saturating_sub(limit);
                let grace = KILL_GRACE.saturating_sub(overshoot + FORCED_KILL_RESERVE);
                terminate_group(&mut child, grace);
                None
            }
        };
        let duration_ms = started.elapsed().as_millis() as u64;
        let scrub = |tail: String| {
            tail.replace(&*workdir.path().to_string_lossy(), WORKDIR_PLACEHOLDER)
        };
        let stdout_tail = scrub(stdout.finish());
        let stderr_tail = scrub(stderr.finish());
        let status = match status {
            None => OutcomeStatus::Timeout,
            Some(s) => self.classify(s, &stderr_tail, profile),
        };
        Ok(Verdict {
            status,
            duration_ms,
            stdout_tail,
            stderr_tail,
        })
    }

    fn classify(&self, exit: ExitStatus, stderr_tail: &str, profile: &RuntimeProfile) -> OutcomeStatus {
        if exit.success() {
            OutcomeStatus::Passed
        } else if self
            .patterns
            .language(&profile.language)
            .indicates_test_failure(stderr_tail)
        {
            OutcomeStatus::Failed
        } else {
            OutcomeStatus::RuntimeError
        }
    }
}

fn build_command(profile: &RuntimeProfile, harness: &Path, workdir: &Path) -> std::io::Result<Command> {
    let mut argv: Vec<String> = Vec::new();
    if profile.isolate_network {
        argv.extend(["unshare".to_string(), "-rn".to_string()]);
    }
    argv.extend(profile.interpreter_cmd.iter().cloned());
    let Some((program, args)) = argv.split_first() else {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "empty interpreter_cmd",
        ));
    };
    let mut command = Command::new(program);
    command
        .args(args)
        .arg(harness)
        .current_dir(workdir)
        .env_clear()
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    for name in &profile.env_allowlist {
        if let Some(value) = std::env::var_os(name) {
            command.env(name, value);
        }
    }
    command.envs(&profile.env);
    Ok(command)
}

fn signal_group(pgid: u32, signal: libc::c_int) -> bool {
    // SAFETY: killpg only sends a signal; a stale id fails with ESRCH.
    unsafe { libc::killpg(pgid as libc::pid_t, signal) == 0 }
}

fn group_alive(pgid: u32) -> bool {
    signal_group(pgid, 0)
}

/// Terminates `child` and everything in its process group: a graceful
/// signal first, then a forced kill once [`KILL_GRACE`] has passed.
/// Calling it on an already-exited child does nothing harmful.
pub fn kill_process_tree(child: &mut Child) {
    terminate_group(child, KILL_GRACE);
}

fn terminate_group(child: &mut Child, grace: Duration) {
    let pgid = child.id();
    if matches!(child.try_wait(), Ok(Some(_))) && !group_alive(pgid) {
        return;
    }
    signal_group(pgid, libc::SIGTERM);
    let grace_start = Instant::now();
    while grace_start.elapsed() < grace {
        let exited = matches!(child.try_wait(), Ok(Some(_)));
        if exited && !group_alive(pgid) {
            return;
        }
        thread::sleep(POLL);
    }
    signal_group(pgid, libc::SIGKILL);
    let _ = child.kill();
    let _ = child.wait();
}

/// Drains a pipe on its own thread, keeping only the last bytes.
struct TailReader {
    buffer: Arc<Mutex<Vec<u8>>>,
    handle: Option<JoinHandle<()>>,
}

impl TailReader {
    fn spawn<R: Read + Send + 'static>(pipe: Option<R>) -> Self {
        let buffer = Arc::new(Mutex::new(Vec::new()));
        let handle = pipe.map(|mut pipe| {
            let buffer = Arc::clone(&buffer);
            thread::spawn(move || {
                let mut chunk = [0u8; 16 * 1024];
                loop {
                    match pipe.read(&mut chunk) {
                        Ok(0) | Err(_) => break,
                        Ok(n) => {
                            let mut buf = buffer.lock().unwrap();
                            buf.extend_from_slice(&chunk[..n]);
                            // keep a margin so the char-boundary cut has room
                            if buf.len() > 4 * OUTPUT_TAIL_CAP {
                                let drop = buf.len() - OUTPUT_TAIL_CAP - 8;
                                buf.drain(..drop);
                            }
                        }
                    }
                }
            })
        });
        TailReader { buffer, handle }
    }

    /// Waits briefly for the pipe to close; a descendant that escaped the
    /// process group may hold it open forever.
    fn finish(mut self) -> String {
        if let Some(handle) = self.handle.take() {
            let deadline = Instant::now() + Duration::from_millis(200);
            while !handle.is_finished() && Instant::now() < deadline {
                thread::sleep(Duration::from_millis(2));
            }
            if handle.is_finished() {
                let _ = handle.join();
            }
        }
        let bytes = self.buffer.lock().unwrap().clone();
        let start = bytes.len().saturating_sub(OUTPUT_TAIL_CAP);
        let text = String::from_utf8_lossy(&bytes[start..]);
        tail_at_char_boundary(&text, OUTPUT_TAIL_CAP).to_string()
    }
}
