//! Output parsing, syntax checking, string-similarity metrics, and the
//! format + correctness reward stack.
//!
//! Everything here is a pure function of its inputs (the command-backed
//! syntax checker excepted), so scoring can fan out across worker threads
//! freely.

mod metrics;
mod parse;
mod reward;
mod syntax;

pub use metrics::{edit_similarity, exact_match, levenshtein, normalize_code};
pub use parse::{parse_output, parse_output_with, ParsedOutput};
pub use reward::{
    composite_reward, correctness_reward, format_reward, score_batch, score_batch_seq, score_one,
    CorrectnessMode, RewardBreakdown, ScoredCompletion,
};
pub use syntax::{structural_syntax_check, CommandChecker, StructuralChecker, SyntaxChecker};
