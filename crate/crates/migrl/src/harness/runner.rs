//! Sandboxed execution of candidate code against test programs.
//!
//! Generated code is untrusted: every test runs in its own subprocess with a
//! fresh scratch directory as working directory, a scrubbed environment, and
//! a wall-clock timeout. Nothing is ever executed in-process.

use std::fs;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::EvalEntry;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("runner command is not configured")]
    NotConfigured,
    #[error("failed to spawn runner '{program}': {source}")]
    Spawn {
        program: String,
        source: std::io::Error,
    },
    #[error("scratch directory error: {0}")]
    Scratch(std::io::Error),
}

/// External runner configuration. The command receives the assembled source
/// file path as its final argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunnerConfig {
    /// Argv of the runner, e.g. `["python3"]`.
    pub command: Vec<String>,
    /// Wall-clock limit per test program.
    pub timeout_secs: f64,
    /// Environment variables passed through; everything else is dropped.
    pub env_allowlist: Vec<String>,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            command: Vec::new(),
            timeout_secs: 10.0,
            env_allowlist: ["PATH", "HOME", "LANG", "LC_ALL", "TMPDIR"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl RunnerConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            ..Self::default()
        }
    }
}

/// Result of one test-program execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum TestStatus {
    Passed,
    /// Nonzero exit; `exit_code` is absent when killed by a signal.
    Failed { exit_code: Option<i32> },
    TimedOut,
    /// The test could not be executed at all (I/O failure mid-run).
    Error { message: String },
}

impl TestStatus {
    pub fn passed(&self) -> bool {
        matches!(self, TestStatus::Passed)
    }
}

/// Per-test statuses plus the overall verdict for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestsOutcome {
    pub tests: Vec<TestStatus>,
    pub all_passed: bool,
}

fn run_single(source: &str, cfg: &RunnerConfig) -> Result<TestStatus, RunnerError> {
    let scratch = tempfile::tempdir().map_err(RunnerError::Scratch)?;
    let source_path = scratch.path().join("candidate.py");
    if let Err(e) = fs::write(&source_path, source) {
        return Ok(TestStatus::Error { message: e.to_string() });
    }

    let (program, args) = cfg.command.split_first().ok_or(RunnerError::NotConfigured)?;
    let mut command = Command::new(program);
    command
        .args(args)
        .arg(&source_path)
        .current_dir(scratch.path())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .env_clear();
    for key in &cfg.env_allowlist {
        if let Ok(value) = std::env::var(key) {
            command.env(key, value);
        }
    }

    let mut child = match command.spawn() {
        Ok(child) => child,
        Err(source) => {
            return Err(RunnerError::Spawn {
                program: program.clone(),
                source,
            })
        }
    };

    let deadline = Instant::now() + Duration::from_secs_f64(cfg.timeout_secs);
    loop {
        match child.try_wait() {
            Ok(Some(status)) => {
                return Ok(if status.success() {
                    TestStatus::Passed
                } else {
                    TestStatus::Failed { exit_code: status.code() }
                });
            }
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Ok(TestStatus::TimedOut);
                }
                std::thread::sleep(Duration::from_millis(2));
            }
            Err(e) => return Ok(TestStatus::Error { message: e.to_string() }),
        }
    }
}

/// Runs every test program of `entry` against `candidate_code`.
///
/// Each test is assembled as `candidate + "\n\n" + test` into one source
/// file and executed via the configured command in a scratch directory.
/// Pass means exit status 0; a timeout or nonzero exit fails the test.
pub fn run_tests(
    candidate_code: &str,
    entry: &EvalEntry,
    cfg: &RunnerConfig,
) -> Result<TestsOutcome, RunnerError> {
    if cfg.command.is_empty() {
        return Err(RunnerError::NotConfigured);
    }
    let mut tests = Vec::with_capacity(entry.test_programs.len());
    for test in &entry.test_programs {
        let source = format!("{candidate_code}\n\n{test}\n");
        tests.push(run_single(&source, cfg)?);
    }
    let all_passed = tests.iter().all(TestStatus::passed);
    Ok(TestsOutcome { tests, all_passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry_with_tests(tests: Vec<String>) -> EvalEntry {
        EvalEntry {
            update_api_path: "m.f".into(),
            update_description: "d".into(),
            update_signature: "m.f(x)".into(),
            update_docstring: "doc".into(),
            scenario: "s".into(),
            problem: "p".into(),
            solution_signature: "def f(x):".into(),
            test_programs: tests,
            extra: serde_json::Map::new(),
        }
    }

    fn python() -> Option<RunnerConfig> {
        let cfg = RunnerConfig::new(vec!["python3".into()]);
        // Probe once so the suite degrades gracefully without python3.
        let probe = Command::new("python3").arg("--version").output();
        probe.is_ok().then_some(cfg)
    }

    #[test]
    fn unconfigured_runner_is_a_config_error() {
        let entry = entry_with_tests(vec!["assert True".into()]);
        let err = run_tests("x = 1", &entry, &RunnerConfig::default()).unwrap_err();
        assert!(matches!(err, RunnerError::NotConfigured));
    }

    #[test]
    fn missing_binary_is_a_spawn_error() {
        let entry = entry_with_tests(vec!["assert True".into()]);
        let cfg = RunnerConfig::new(vec!["no-such-runner-zz9".into()]);
        let err = run_tests("x = 1", &entry, &cfg).unwrap_err();
        assert!(matches!(err, RunnerError::Spawn { .. }));
    }

    #[test]
    fn passing_and_failing_candidates() {
        let Some(cfg) = python() else {
            eprintln!("python3 unavailable; skipping");
            return;
        };
        let entry = entry_with_tests(vec![
            "assert add(2, 3) == 5".into(),
            "assert add(-1, 1) == 0".into(),
        ]);
        let good = run_tests("def add(a, b):\n    return a + b", &entry, &cfg).unwrap();
        assert!(good.all_passed);
        assert_eq!(good.tests, vec![TestStatus::Passed, TestStatus::Passed]);

        let bad = run_tests("def add(a, b):\n    return a - b", &entry, &cfg).unwrap();
        assert!(!bad.all_passed);
        assert!(matches!(bad.tests[0], TestStatus::Failed { .. }));

        // A candidate that raises on import fails every test.
        let broken = run_tests("raise RuntimeError('boom')", &entry, &cfg).unwrap();
        assert!(!broken.all_passed);
    }

    #[test]
    fn timeouts_are_marked() {
        let Some(mut cfg) = python() else {
            eprintln!("python3 unavailable; skipping");
            return;
        };
        cfg.timeout_secs = 0.05;
        let entry = entry_with_tests(vec!["pass".into()]);
        let out = run_tests(
            "import time\ntime.sleep(10)",
            &entry,
            &cfg,
        )
        .unwrap();
        assert_eq!(out.tests, vec![TestStatus::TimedOut]);
        assert!(!out.all_passed);
    }

    #[test]
    fn environment_is_scrubbed() {
        let Some(cfg) = python() else {
            eprintln!("python3 unavailable; skipping");
            return;
        };
        std::env::set_var("MIGRL_SECRET_TOKEN", "leak-me");
        let entry = entry_with_tests(vec![
            "import os\nassert 'MIGRL_SECRET_TOKEN' not in os.environ".into(),
        ]);
        let out = run_tests("x = 1", &entry, &cfg).unwrap();
        assert!(out.all_passed, "allowlist must drop unknown variables");
    }
}
