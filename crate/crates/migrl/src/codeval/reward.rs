//! Format and correctness rewards.
//!
//! The total reward for one completion is `format + correctness + length
//! penalty`. Format is a hard ±1 on the `<think>/<answer>` output contract.
//! Correctness compares extracted code against the target under one of four
//! string-matching modes; the starred modes gate the metric behind a syntax
//! check so that broken code is always worth less than well-formed wrong
//! code.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{edit_similarity, exact_match};
use super::parse::ParsedOutput;

/// Correctness reward variant for a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectnessMode {
    /// Exact match, no syntax gate: +2.0 on match, -2.0 otherwise.
    Em,
    /// Edit similarity, no syntax gate: `4.0 * sim - 2.0`.
    Es,
    /// Syntax-gated exact match: +2.0 match / -1.5 valid non-match / -2.0 invalid.
    EmStar,
    /// Syntax-gated edit similarity: -2.0 invalid, else `sim * 3.5 - 1.5`.
    EsStar,
    /// Format reward only; correctness contributes 0.
    FormatOnly,
}

impl fmt::Display for CorrectnessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CorrectnessMode::Em => "em",
            CorrectnessMode::Es => "es",
            CorrectnessMode::EmStar => "em_star",
            CorrectnessMode::EsStar => "es_star",
            CorrectnessMode::FormatOnly => "format_only",
        };
        f.write_str(s)
    }
}

impl FromStr for CorrectnessMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "em" => Ok(CorrectnessMode::Em),
            "es" => Ok(CorrectnessMode::Es),
            "em_star" => Ok(CorrectnessMode::EmStar),
            "es_star" => Ok(CorrectnessMode::EsStar),
            "format_only" => Ok(CorrectnessMode::FormatOnly),
            other => Err(format!(
                "unknown correctness mode '{other}' (expected em, es, em_star, es_star, format_only)"
            )),
        }
    }
}

/// Per-rollout reward components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Format reward, +1 or -1.
    pub format: f64,
    /// Correctness reward in [-2.0, +2.0]; 0 in format-only mode.
    pub correctness: f64,
    /// Soft length penalty in [-1.0, 0.0]; 0 outside DAPO mode.
    pub length_penalty: f64,
    /// `format + correctness + length_penalty`.
    pub total: f64,
}

/// +1 if the output met the format, -1 otherwise.
pub fn format_reward(parsed: &ParsedOutput) -> f64 {
    if parsed.format_ok {
        1.0
    } else {
        -1.0
    }
}

/// Correctness reward for one parsed completion against the target code.
///
/// Absent code always scores the floor (-2.0). Callers must not pass
/// [`CorrectnessMode::FormatOnly`]; use [`composite_reward`] for that.
pub fn correctness_reward(parsed: &ParsedOutput, target: &str, mode: CorrectnessMode) -> f64 {
    let Some(code) = parsed.code.as_deref() else {
        return -2.0;
    };
    match mode {
        CorrectnessMode::EmStar => {
            if !parsed.syntax_ok {
                -2.0
            } else if exact_match(code, target) {
                2.0
            } else {
                -1.5
            }
        }
        CorrectnessMode::EsStar => {
            if !parsed.syntax_ok {
                -2.0
            } else {
                edit_similarity(code, target) * 3.5 - 1.5
            }
        }
        CorrectnessMode::Em => {
            if exact_match(code, target) {
                2.0
            } else {
                -2.0
            }
        }
        CorrectnessMode::Es => edit_similarity(code, target) * 4.0 - 2.0,
        CorrectnessMode::FormatOnly => {
            panic!("correctness_reward is undefined in format-only mode")
        }
    }
}

/// Combines format, correctness, and length penalty into one breakdown.
///
/// `length_penalty` must already be computed (0 outside DAPO mode).
pub fn composite_reward(
    parsed: &ParsedOutput,
    target: &str,
    mode: CorrectnessMode,
    length_penalty: f64,
) -> RewardBreakdown {
    debug_assert!((-1.0..=0.0).contains(&length_penalty));
    let format = format_reward(parsed);
    let correctness = match mode {
        CorrectnessMode::FormatOnly => 0.0,
        _ => correctness_reward(parsed, target, mode),
    };
    RewardBreakdown {
        format,
        correctness,
        length_penalty,
        total: format + correctness + length_penalty,
    }
}

/// One scored completion, ready for serialization by the `score` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredCompletion {
    pub format_ok: bool,
    pub syntax_ok: bool,
    pub format: f64,
    pub correctness: f64,
    pub length_penalty: f64,
    pub total: f64,
}

impl ScoredCompletion {
    fn new(parsed: &ParsedOutput, breakdown: &RewardBreakdown) -> Self {
        Self {
            format_ok: parsed.format_ok,
            syntax_ok: parsed.syntax_ok,
            format: breakdown.format,
            correctness: breakdown.correctness,
            length_penalty: breakdown.length_penalty,
            total: breakdown.total,
        }
    }
}

/// Scores one raw completion against a target.
pub fn score_one(
    raw: &str,
    target: &str,
    mode: CorrectnessMode,
    checker: &dyn super::SyntaxChecker,
) -> ScoredCompletion {
    let parsed = super::parse::parse_output_with(raw, checker);
    let breakdown = composite_reward(&parsed, target, mode, 0.0);
    ScoredCompletion::new(&parsed, &breakdown)
}

/// Scores a batch of `(completion, target)` pairs, in parallel when the
/// `parallel` feature is enabled. Output order matches input order.
pub fn score_batch(
    pairs: &[(String, String)],
    mode: CorrectnessMode,
    checker: &dyn super::SyntaxChecker,
) -> Vec<ScoredCompletion> {
    crate::exec::map_slice(pairs, |(raw, target)| score_one(raw, target, mode, checker))
}

/// Sequential fallback of [`score_batch`], kept as a separate entry point so
/// the benchmark suite can compare the two directly.
pub fn score_batch_seq(
    pairs: &[(String, String)],
    mode: CorrectnessMode,
    checker: &dyn super::SyntaxChecker,
) -> Vec<ScoredCompletion> {
    pairs
        .iter()
        .map(|(raw, target)| score_one(raw, target, mode, checker))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::parse::parse_output;
    use super::*;

    fn wrap(code: &str) -> String {
        format!("<think>t</think><answer>```python\n{code}\n```</answer>")
    }

    #[test]
    fn format_reward_branches() {
        assert_eq!(format_reward(&parse_output(&wrap("x = 1"))), 1.0);
        assert_eq!(format_reward(&parse_output("<think>x</think>")), -1.0);
        assert_eq!(format_reward(&parse_output("")), -1.0);
    }

    #[test]
    fn em_star_branches() {
        let exact = parse_output(&wrap("y = f2(a)"));
        assert_eq!(correctness_reward(&exact, "y = f2(a)", CorrectnessMode::EmStar), 2.0);

        let valid_miss = parse_output(&wrap("y = f3(a)"));
        assert_eq!(
            correctness_reward(&valid_miss, "y = f2(a)", CorrectnessMode::EmStar),
            -1.5
        );

        let invalid = parse_output(&wrap("def f(:"));
        assert_eq!(correctness_reward(&invalid, "y = f2(a)", CorrectnessMode::EmStar), -2.0);

        let absent = parse_output("<think>x</think>");
        assert_eq!(correctness_reward(&absent, "y = f2(a)", CorrectnessMode::EmStar), -2.0);
    }

    #[test]
    fn es_star_scaling() {
        // Similarity 0.6 -> 0.6 * 3.5 - 1.5 = 0.6.
        let p = parse_output(&wrap("abcdef"));
        let target = "abcdxy\nq"; // sim computed below
        let sim = edit_similarity("abcdef", target);
        let got = correctness_reward(&p, target, CorrectnessMode::EsStar);
        assert!((got - (sim * 3.5 - 1.5)).abs() < 1e-15);

        let invalid = parse_output(&wrap("def f(:"));
        assert_eq!(correctness_reward(&invalid, target, CorrectnessMode::EsStar), -2.0);
    }

    #[test]
    fn plain_variants_span_same_range() {
        let exact = parse_output(&wrap("y = 1"));
        assert_eq!(correctness_reward(&exact, "y = 1", CorrectnessMode::Em), 2.0);
        assert_eq!(correctness_reward(&exact, "y = 1", CorrectnessMode::Es), 2.0);
        let miss = parse_output(&wrap("zz"));
        assert_eq!(correctness_reward(&miss, "y = 1", CorrectnessMode::Em), -2.0);
        let es = correctness_reward(&miss, "y = 1", CorrectnessMode::Es);
        assert!((-2.0..=2.0).contains(&es));
    }

    #[test]
    fn composite_totals() {
        let perfect = parse_output(&wrap("y = f2(a)"));
        let b = composite_reward(&perfect, "y = f2(a)", CorrectnessMode::EmStar, 0.0);
        assert_eq!(b.total, 3.0);

        let malformed = parse_output("no tags at all");
        let b = composite_reward(&malformed, "y = f2(a)", CorrectnessMode::EsStar, 0.0);
        assert_eq!(b.total, -3.0);

        let with_pen = composite_reward(&perfect, "y = f2(a)", CorrectnessMode::EsStar, -0.5);
        assert!((with_pen.total - 2.5).abs() < 1e-15);

        let fmt_only = composite_reward(&perfect, "y = f2(a)", CorrectnessMode::FormatOnly, 0.0);
        assert_eq!(fmt_only.correctness, 0.0);
        assert_eq!(fmt_only.total, 1.0);
    }

    #[test]
    fn agreement_at_the_top() {
        // exact match => similarity 1 => ES* = EM* = +2.0
        let p = parse_output(&wrap("a = g(1)"));
        assert_eq!(correctness_reward(&p, "a = g(1)", CorrectnessMode::EmStar), 2.0);
        assert_eq!(correctness_reward(&p, "a = g(1)", CorrectnessMode::EsStar), 2.0);
    }

    #[test]
    fn batch_matches_sequential() {
        let pairs: Vec<(String, String)> = (0..64)
            .map(|i| (wrap(&format!("y = f{i}(a)")), "y = f7(a)".to_string()))
            .collect();
        let par = score_batch(&pairs, CorrectnessMode::EsStar, &super::super::StructuralChecker);
        let seq =
            score_batch_seq(&pairs, CorrectnessMode::EsStar, &super::super::StructuralChecker);
        for (a, b) in par.iter().zip(&seq) {
            assert_eq!(a.total, b.total);
        }
    }

    use super::super::metrics::edit_similarity;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn es_star_monotone_in_similarity(
            a in "[ab=() ]{0,12}", b in "[ab=() ]{0,12}", t in "[ab=() ]{0,12}"
        ) {
            let pa = parse_output(&wrap(&a));
            let pb = parse_output(&wrap(&b));
            if pa.syntax_ok && pb.syntax_ok {
                let (sa, sb) = (edit_similarity(&a, &t), edit_similarity(&b, &t));
                let (ra, rb) = (
                    correctness_reward(&pa, &t, CorrectnessMode::EsStar),
                    correctness_reward(&pb, &t, CorrectnessMode::EsStar),
                );
                if sa >= sb {
                    prop_assert!(ra >= rb - 1e-12);
                }
            }
        }
    }
}
