//! Dataset I/O, prompt rendering, pass@k estimation, and sandboxed test
//! execution.

pub mod dataset;
pub mod evaluate;
pub mod passk;
pub mod prompt;
pub mod runner;

pub use dataset::{
    load_eval_dataset, load_migration_dataset, save_eval_dataset, save_migration_dataset,
    DatasetError, EvalEntry,
};
pub use evaluate::{evaluate, write_detail, CompletionSet, EvalError};
pub use passk::{pass_at_k, EntryOutcome, KScore, PassAtKReport, PassKError, SampleOutcome};
pub use prompt::{render_eval_prompt, render_training_prompt, ASSISTANT_PREFIX};
pub use runner::{run_tests, RunnerConfig, RunnerError, TestStatus, TestsOutcome};
