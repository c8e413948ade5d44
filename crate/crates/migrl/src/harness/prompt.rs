//! Prompt rendering.
//!
//! The rendered prompt is the concatenation of the system message, the user
//! message with the entry's fields substituted at the marked slots, and the
//! pre-seeded assistant prefix, joined by blank lines. Rendering is
//! byte-exact: downstream tooling and tests may rely on the literal
//! scaffold text.

use crate::harness::dataset::EvalEntry;
use crate::toyenv::MigrationEntry;

/// Pre-seeded assistant prefix; completions therefore start mid-think-block.
pub const ASSISTANT_PREFIX: &str = "Let me solve this step by step.\n<think>";

const TRAIN_SYSTEM: &str = "You are a helpful coding assistant. Your task is to transform the old version of the code into the new version specified, based on the update information. You first thinks about the reasoning process in the mind and then provides the solution.";

const EVAL_SYSTEM: &str = "You are a helpful code assistant. You first think about the reasoning process in the mind and then provide a Python solution to a problem in a real-world scenario.";

/// Renders the code-migration training prompt for one entry.
pub fn render_training_prompt(entry: &MigrationEntry) -> String {
    let user = format!(
        "Dependency {dep} performed an API update in version {ver}, and the update content includes:\n\
         <doc>\n{info}\n</doc>\n\
         The old version of the code is:\n\
         ```python\n{old}\n```\n\
         Show your work in <think> </think> tags. And return the final code in <answer> </answer>, the code within <answer></answer> should be enclosed in ```python ``` tags.",
        dep = entry.dependency,
        ver = entry.target_version,
        info = entry.update_info,
        old = entry.old_code,
    );
    format!("{TRAIN_SYSTEM}\n\n{user}\n\n{ASSISTANT_PREFIX}")
}

/// Renders the evaluation prompt for one entry.
pub fn render_eval_prompt(entry: &EvalEntry) -> String {
    let user = format!(
        "Update Note:\n\n\
         There's an recent update to a function {api} -- {desc}.\n\n\
         The function now has a new function signature -- {sig}.\n\n\
         Here is a detailed documentation about the update:\n\
         <doc>\n{doc}\n</doc>\n\n\
         Scenario: {scenario}\n\n\
         Problem: {problem}\n\n\
         Solution Signature: {solution}\n\n\
         Show your work in <think> </think> tags.\n\
         And return the final code in <answer> </answer>, the code within <answer></answer> should be enclosed in ```python ``` tags.",
        api = entry.update_api_path,
        desc = entry.update_description,
        sig = entry.update_signature,
        doc = entry.update_docstring,
        scenario = entry.scenario,
        problem = entry.problem,
        solution = entry.solution_signature,
    );
    format!("{EVAL_SYSTEM}\n\n{user}\n\n{ASSISTANT_PREFIX}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn migration(dep: &str, ver: &str, info: &str, old: &str, target: &str) -> MigrationEntry {
        MigrationEntry {
            dependency: dep.into(),
            target_version: ver.into(),
            update_info: info.into(),
            old_code: old.into(),
            target_code: target.into(),
            extra: serde_json::Map::new(),
        }
    }

    fn eval_entry(fields: [&str; 7]) -> EvalEntry {
        EvalEntry {
            update_api_path: fields[0].into(),
            update_description: fields[1].into(),
            update_signature: fields[2].into(),
            update_docstring: fields[3].into(),
            scenario: fields[4].into(),
            problem: fields[5].into(),
            solution_signature: fields[6].into(),
            test_programs: vec!["assert True".into()],
            extra: serde_json::Map::new(),
        }
    }

    #[test]
    fn training_prompt_contains_fixed_segments() {
        let p = render_training_prompt(&migration("numpy", "2.0", "cross changed", "a", "b"));
        assert!(p.contains("performed an API update in version"));
        assert!(p.contains("<doc>\ncross changed\n</doc>"));
        assert!(p.contains("```python\na\n```"));
        assert!(p.ends_with(ASSISTANT_PREFIX));
    }

    #[test]
    fn eval_prompt_contains_fixed_segments() {
        let p = render_eval_prompt(&eval_entry(["m.f", "d", "s", "doc", "sc", "pr", "sig"]));
        // The original template wording is kept verbatim.
        assert!(p.contains("There's an recent update to a function m.f -- d."));
        assert!(p.contains("Solution Signature: sig"));
        assert!(p.contains("<doc>\ndoc\n</doc>"));
        assert!(p.ends_with(ASSISTANT_PREFIX));
    }

    #[test]
    fn empty_fields_keep_full_scaffold() {
        let p = render_training_prompt(&migration("d", "v", "", "", "t"));
        assert!(p.contains("<doc>\n\n</doc>"));
        assert!(p.contains("```python\n\n```"));
        let p = render_eval_prompt(&eval_entry(["", "", "", "", "", "", "x"]));
        assert!(p.contains("Update Note:"));
        assert!(p.contains("Scenario: "));
    }

    proptest! {
        #[test]
        fn rendering_is_injective_on_simple_fields(
            a in "[a-z0-9]{1,10}", b in "[a-z0-9]{1,10}",
        ) {
            prop_assume!(a != b);
            let p1 = render_training_prompt(&migration(&a, "1.0", "u", "c", "t"));
            let p2 = render_training_prompt(&migration(&b, "1.0", "u", "c", "t"));
            prop_assert_ne!(p1, p2);
            let p3 = render_training_prompt(&migration("d", "1.0", &a, "c", "t"));
            let p4 = render_training_prompt(&migration("d", "1.0", &b, "c", "t"));
            prop_assert_ne!(p3, p4);
        }
    }
}
