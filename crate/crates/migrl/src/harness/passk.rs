//! Unbiased pass@k estimation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::runner::TestStatus;

#[derive(Debug, Error, PartialEq)]
pub enum PassKError {
    #[error("k must be >= 1")]
    KZero,
    #[error("k = {k} exceeds the sample count n = {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("c = {c} exceeds the sample count n = {n}")]
    CTooLarge { c: usize, n: usize },
}

/// Unbiased estimator of the probability that at least one of `k` samples
/// drawn from `n` (of which `c` pass) is correct:
/// `1 - C(n-c, k) / C(n, k)`.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, PassKError> {
    if k == 0 {
        return Err(PassKError::KZero);
    }
    if k > n {
        return Err(PassKError::KTooLarge { k, n });
    }
    if c > n {
        return Err(PassKError::CTooLarge { c, n });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let mut fail_all = 1.0f64;
    for i in 0..k {
        fail_all *= (n - c - i) as f64 / (n - i) as f64;
    }
    Ok(1.0 - fail_all)
}

/// Outcome of one completion against one entry's tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub format_ok: bool,
    pub syntax_ok: bool,
    pub code_present: bool,
    /// True iff code was extracted and every test passed.
    pub passed: bool,
    pub tests: Vec<TestStatus>,
}

/// Per-entry tally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryOutcome {
    pub entry_index: usize,
    /// Samples drawn.
    pub n: usize,
    /// Samples passing all tests.
    pub c: usize,
    pub samples: Vec<SampleOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub pass_at_k: f64,
}

/// The full evaluation report: per-entry details plus the aggregate pass@k
/// (mean of the per-entry estimators) for each requested k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtKReport {
    pub entries: Vec<EntryOutcome>,
    pub aggregate: Vec<KScore>,
}

impl PassAtKReport {
    pub fn from_entries(entries: Vec<EntryOutcome>, ks: &[usize]) -> Result<Self, PassKError> {
        let mut aggregate = Vec::with_capacity(ks.len());
        for &k in ks {
            let mut sum = 0.0;
            for entry in &entries {
                sum += pass_at_k(entry.n, entry.c, k)?;
            }
            let mean = if entries.is_empty() { 0.0 } else { sum / entries.len() as f64 };
            aggregate.push(KScore { k, pass_at_k: mean });
        }
        Ok(Self { entries, aggregate })
    }
}
