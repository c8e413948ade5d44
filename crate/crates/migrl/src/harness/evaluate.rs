//! End-to-end evaluation: parse completions, execute tests, estimate pass@k.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codeval::parse_output;
use crate::exec;
use crate::harness::dataset::EvalEntry;
use crate::harness::passk::{EntryOutcome, PassAtKReport, PassKError, SampleOutcome};
use crate::harness::prompt::render_eval_prompt;
use crate::harness::runner::{run_tests, RunnerConfig, RunnerError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("failed reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    InvalidRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("completions cover {got} entries but the dataset has {want}")]
    WrongEntryCount { got: usize, want: usize },
    #[error("entry {index} has {got} samples, expected {want} everywhere")]
    RaggedSamples {
        index: usize,
        got: usize,
        want: usize,
    },
    #[error("generator command is not configured")]
    GeneratorNotConfigured,
    #[error("generator failed on entry {index}: {message}")]
    Generator { index: usize, message: String },
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    PassK(#[from] PassKError),
}

/// Raw completions, n per entry, aligned with the entry list.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionSet {
    per_entry: Vec<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CompletionRecord {
    entry_index: usize,
    samples: Vec<String>,
}

impl CompletionSet {
    /// Every entry must have the same positive number of samples.
    pub fn new(per_entry: Vec<Vec<String>>) -> Result<Self, EvalError> {
        let want = per_entry.first().map(Vec::len).unwrap_or(0);
        for (index, samples) in per_entry.iter().enumerate() {
            if samples.len() != want || samples.is_empty() {
                return Err(EvalError::RaggedSamples {
                    index,
                    got: samples.len(),
                    want: want.max(1),
                });
            }
        }
        Ok(Self { per_entry })
    }

    /// Samples per entry.
    pub fn samples_per_entry(&self) -> usize {
        self.per_entry.first().map(Vec::len).unwrap_or(0)
    }

    pub fn entry_count(&self) -> usize {
        self.per_entry.len()
    }

    /// Loads completions from a JSONL file of
    /// `{"entry_index": i, "samples": [...]}` records, one per entry.
    pub fn from_jsonl(path: &Path, entry_count: usize) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path).map_err(|source| EvalError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut slots: Vec<Option<Vec<String>>> = vec![None; entry_count];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let record: CompletionRecord =
                serde_json::from_str(raw).map_err(|e| EvalError::InvalidRecord {
                    path: path.to_path_buf(),
                    line,
                    message: e.to_string(),
                })?;
            if record.entry_index >= entry_count {
                return Err(EvalError::InvalidRecord {
                    path: path.to_path_buf(),
                    line,
                    message: format!(
                        "entry_index {} out of range (dataset has {entry_count} entries)",
                        record.entry_index
                    ),
                });
            }
            if slots[record.entry_index].replace(record.samples).is_some() {
                return Err(EvalError::InvalidRecord {
                    path: path.to_path_buf(),
                    line,
                    message: format!("duplicate entry_index {}", record.entry_index),
                });
            }
        }
        if let Some(index) = slots.iter().position(Option::is_none) {
            return Err(EvalError::InvalidRecord {
                path: path.to_path_buf(),
                line: 0,
                message: format!("missing completions for entry {index}"),
            });
        }
        Self::new(slots.into_iter().map(Option::unwrap).collect())
    }

    /// Generates n completions per entry by invoking an external command
    /// once per sample: the rendered prompt goes to stdin, the completion is
    /// read from stdout.
    pub fn generate(
        entries: &[EvalEntry],
        command: &[String],
        n: usize,
        timeout: Duration,
    ) -> Result<Self, EvalError> {
        let (program, args) = command
            .split_first()
            .ok_or(EvalError::GeneratorNotConfigured)?;
        let mut per_entry = Vec::with_capacity(entries.len());
        for (index, entry) in entries.iter().enumerate() {
            let prompt = render_eval_prompt(entry);
            let mut samples = Vec::with_capacity(n);
            for _ in 0..n {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::null())
                    .spawn()
                    .map_err(|e| EvalError::Generator {
                        index,
                        message: e.to_string(),
                    })?;
                if let Some(mut stdin) = child.stdin.take() {
                    let _ = stdin.write_all(prompt.as_bytes());
                }
                let deadline = Instant::now() + timeout;
                loop {
                    match child.try_wait() {
                        Ok(Some(_)) => break,
                        Ok(None) if Instant::now() >= deadline => {
                            let _ = child.kill();
                            return Err(EvalError::Generator {
                                index,
                                message: "generator timed out".into(),
                            });
                        }
                        Ok(None) => std::thread::sleep(Duration::from_millis(2)),
                        Err(e) => {
                            return Err(EvalError::Generator {
                                index,
                                message: e.to_string(),
                            })
                        }
                    }
                }
                let output = child.wait_with_output().map_err(|e| EvalError::Generator {
                    index,
                    message: e.to_string(),
                })?;
                samples.push(String::from_utf8_lossy(&output.stdout).into_owned());
            }
            per_entry.push(samples);
        }
        Self::new(per_entry)
    }

    fn samples(&self, index: usize) -> &[String] {
        &self.per_entry[index]
    }
}

/// Parses every completion, runs the entry's tests on the extracted code,
/// and aggregates pass@k over the requested k values.
///
/// Per-sample failures (no code, failing tests, timeouts, mid-run I/O
/// errors) are recorded in the report; only configuration-level problems
/// (unknown runner, bad k) abort the evaluation.
pub fn evaluate(
    entries: &[EvalEntry],
    completions: &CompletionSet,
    ks: &[usize],
    runner: &RunnerConfig,
) -> Result<PassAtKReport, EvalError> {
    if completions.entry_count() != entries.len() {
        return Err(EvalError::WrongEntryCount {
            got: completions.entry_count(),
            want: entries.len(),
        });
    }
    let n = completions.samples_per_entry();
    for &k in ks {
        if k == 0 {
            return Err(PassKError::KZero.into());
        }
        if k > n {
            return Err(PassKError::KTooLarge { k, n }.into());
        }
    }
    if runner.command.is_empty() {
        return Err(RunnerError::NotConfigured.into());
    }

    // One unit of work per (entry, sample); the pool bounds parallelism and
    // results are reassembled in index order.
    let mut units = Vec::with_capacity(entries.len() * n);
    for (i, _) in entries.iter().enumerate() {
        for j in 0..n {
            units.push((i, j));
        }
    }
    let outcomes = exec::map_slice(&units, |&(i, j)| -> Result<SampleOutcome, EvalError> {
        let raw = &completions.samples(i)[j];
        let parsed = parse_output(raw);
        match parsed.code.as_deref() {
            None => Ok(SampleOutcome {
                format_ok: parsed.format_ok,
                syntax_ok: parsed.syntax_ok,
                code_present: false,
                passed: false,
                tests: Vec::new(),
            }),
            Some(code) => {
                let result = run_tests(code, &entries[i], runner)?;
                Ok(SampleOutcome {
                    format_ok: parsed.format_ok,
                    syntax_ok: parsed.syntax_ok,
                    code_present: true,
                    passed: result.all_passed,
                    tests: result.tests,
                })
            }
        }
    });

    let mut per_entry: Vec<EntryOutcome> = (0..entries.len())
        .map(|i| EntryOutcome {
            entry_index: i,
            n,
            c: 0,
            samples: Vec::with_capacity(n),
        })
        .collect();
    for ((i, _), outcome) in units.into_iter().zip(outcomes) {
        let outcome = outcome?;
        if outcome.passed {
            per_entry[i].c += 1;
        }
        per_entry[i].samples.push(outcome);
    }

    Ok(PassAtKReport::from_entries(per_entry, ks)?)
}

/// Writes the per-entry detail file (one JSON record per entry).
pub fn write_detail(path: &Path, report: &PassAtKReport) -> Result<(), EvalError> {
    let mut text = String::new();
    for entry in &report.entries {
        text.push_str(&serde_json::to_string(entry).expect("entry serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|source| EvalError::Read {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(test: &str) -> EvalEntry {
        EvalEntry {
            update_api_path: "m.f".into(),
            update_description: "d".into(),
            update_signature: "m.f(x)".into(),
            update_docstring: "doc".into(),
            scenario: "s".into(),
            problem: "p".into(),
            solution_signature: "def f(x):".into(),
            test_programs: vec![test.into()],
            extra: serde_json::Map::new(),
        }
    }

    fn wrap(code: &str) -> String {
        format!("<think>t</think><answer>```python\n{code}\n```</answer>")
    }

    fn python_available() -> bool {
        Command::new("python3").arg("--version").output().is_ok()
    }

    #[test]
    fn completion_set_validation() {
        assert!(CompletionSet::new(vec![vec!["a".into()], vec!["b".into()]]).is_ok());
        assert!(CompletionSet::new(vec![vec!["a".into()], vec![]]).is_err());
        assert!(
            CompletionSet::new(vec![vec!["a".into()], vec!["b".into(), "c".into()]]).is_err()
        );
    }

    #[test]
    fn completion_jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("completions.jsonl");
        fs::write(
            &path,
            "{\"entry_index\":1,\"samples\":[\"y\"]}\n{\"entry_index\":0,\"samples\":[\"x\"]}\n",
        )
        .unwrap();
        let set = CompletionSet::from_jsonl(&path, 2).unwrap();
        assert_eq!(set.samples(0), &["x".to_string()]);
        assert_eq!(set.samples(1), &["y".to_string()]);

        // Missing coverage is an error.
        fs::write(&path, "{\"entry_index\":0,\"samples\":[\"x\"]}\n").unwrap();
        assert!(CompletionSet::from_jsonl(&path, 2).is_err());
    }

    #[test]
    fn malformed_completions_score_zero() {
        if !python_available() {
            eprintln!("python3 unavailable; skipping");
            return;
        }
        let entries = vec![entry("assert f(1) == 1")];
        let completions =
            CompletionSet::new(vec![vec!["no code here".into(), "also none".into()]]).unwrap();
        let report = evaluate(
            &entries,
            &completions,
            &[1, 2],
            &RunnerConfig::new(vec!["python3".into()]),
        )
        .unwrap();
        assert_eq!(report.entries[0].c, 0);
        for score in &report.aggregate {
            assert_eq!(score.pass_at_k, 0.0);
        }
    }

    #[test]
    fn single_passing_entry_scores_one() {
        if !python_available() {
            eprintln!("python3 unavailable; skipping");
            return;
        }
        let entries = vec![entry("assert f(3) == 3")];
        let completions =
            CompletionSet::new(vec![vec![wrap("def f(x):\n    return x")]]).unwrap();
        let report = evaluate(
            &entries,
            &completions,
            &[1],
            &RunnerConfig::new(vec!["python3".into()]),
        )
        .unwrap();
        assert_eq!(report.entries[0].c, 1);
        assert_eq!(report.aggregate[0].pass_at_k, 1.0);
        assert!(report.entries[0].samples[0].format_ok);
    }

    #[test]
    fn aggregate_is_mean_of_per_entry_estimates() {
        if !python_available() {
            eprintln!("python3 unavailable; skipping");
            return;
        }
        let entries = vec![entry("assert f(1) == 1"), entry("assert f(1) == 2")];
        let good = wrap("def f(x):\n    return x");
        let completions = CompletionSet::new(vec![vec![good.clone()], vec![good]]).unwrap();
        let report = evaluate(
            &entries,
            &completions,
            &[1],
            &RunnerConfig::new(vec!["python3".into()]),
        )
        .unwrap();
        // First entry passes, second fails its test.
        assert_eq!(report.entries[0].c, 1);
        assert_eq!(report.entries[1].c, 0);
        assert!((report.aggregate[0].pass_at_k - 0.5).abs() < 1e-15);
    }

    #[test]
    fn k_larger_than_n_is_an_error() {
        let entries = vec![entry("assert True")];
        let completions = CompletionSet::new(vec![vec![wrap("x = 1")]]).unwrap();
        let err = evaluate(
            &entries,
            &completions,
            &[2],
            &RunnerConfig::new(vec!["python3".into()]),
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::PassK(PassKError::KTooLarge { .. })));
    }
}
