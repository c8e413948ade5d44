//! migrl: rule-based reinforcement fine-tuning for code migration.
//!
//! The crate implements the full training and evaluation stack for teaching a
//! policy to rewrite code that calls an outdated library API so that it calls
//! the updated one:
//!
//! - [`codeval`]: output parsing (`<think>`/`<answer>` format), a structural
//!   syntax checker, edit-distance metrics, and the format + correctness
//!   reward functions (EM, ES, and their syntax-gated EM*/ES* variants).
//! - [`rlcore`]: group-relative advantages, the GRPO and DAPO clipped
//!   surrogate objectives, dynamic sampling, and the soft length penalty.
//! - [`policy`]: an order-n character softmax policy with exact analytic
//!   gradients, used to verify the optimization machinery end to end.
//! - [`toyenv`]: a seeded generator of synthetic migration tasks with a
//!   deterministic rewrite oracle.
//! - [`trainer`]: the training loop (sampling, scoring, filtering, advantage
//!   and gradient computation, LR schedule, metrics logging, checkpoints).
//! - [`harness`]: dataset I/O, prompt rendering, pass@k estimation, and
//!   sandboxed execution of generated code against test programs.
//!
//! Batch operations (reward scoring, rollout sampling, test execution) run on
//! rayon when the default `parallel` feature is enabled and fall back to
//! sequential loops when it is disabled. Results are bit-identical either
//! way: every parallel unit owns a splittable RNG and all reductions run in
//! a fixed left-to-right order.

pub mod codeval;
pub mod harness;
pub mod policy;
pub mod rlcore;
pub mod toyenv;
pub mod trainer;

pub(crate) mod exec;
pub(crate) mod util;

pub use codeval::{
    composite_reward, correctness_reward, edit_similarity, exact_match, format_reward,
    levenshtein, normalize_code, parse_output, structural_syntax_check, CorrectnessMode,
    ParsedOutput, RewardBreakdown,
};
pub use rlcore::{Algorithm, RlConfig, Rollout, RolloutGroup};
pub use toyenv::MigrationEntry;
pub use trainer::{StepMetrics, TrainerConfig};
