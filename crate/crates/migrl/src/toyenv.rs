//! Synthetic code-migration tasks in a miniature language.
//!
//! Each task is a [`MigrationEntry`] whose target code is produced by a
//! deterministic rewrite oracle, so the trainer and the reward functions can
//! be tested against exact ground truth. Difficulty 1 restricts the
//! generator to a small rename family whose targets are jointly consistent
//! with a low-order character model, which is what makes the desk-scale
//! training run able to solve held-out tasks; difficulties 2 and 3 widen the
//! snippet length and the rule mix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::Vocabulary;
use crate::util::mix;

#[derive(Debug, Error, PartialEq)]
pub enum ToyEnvError {
    #[error("rule references '{0}', which does not occur as a call in the code")]
    SymbolNotFound(String),
    #[error("invalid rule: {0}")]
    InvalidRule(String),
}

/// One training record: what changed, plus the code before and after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationEntry {
    pub dependency: String,
    pub target_version: String,
    pub update_info: String,
    pub old_code: String,
    pub target_code: String,
    /// Unknown fields from external datasets, preserved for round-trips.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// A deterministic API rewrite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RewriteRule {
    /// `old(...)` becomes `new(...)` at every call site.
    Rename { old: String, new: String },
    /// Append `name=value` to every call of `func`.
    AddParam {
        func: String,
        name: String,
        value: String,
    },
    /// Permute the arguments of every call of `func`; `order[i]` is the old
    /// index of the argument placed at position `i`.
    ReorderParams { func: String, order: Vec<usize> },
    /// `func(...)` becomes `namespace.func(...)`.
    WrapNamespace { func: String, namespace: String },
}

/// Characters of the miniature language.
pub const TOY_SYMBOLS: &str = "abcdefghijklmnopqrstuvwxyz0123456789_=(),. \n\"";

/// The shared toy vocabulary (TOY_SYMBOLS plus BOS/EOS).
pub fn toy_vocabulary() -> Vocabulary {
    Vocabulary::new(TOY_SYMBOLS.chars()).expect("toy symbol set is valid")
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'
}

/// Byte offsets at which `func` occurs as a call, i.e. followed by `(` and
/// not embedded in a longer identifier.
fn call_sites(code: &str, func: &str) -> Vec<usize> {
    let mut sites = Vec::new();
    let bytes = code.as_bytes();
    let mut from = 0;
    while let Some(pos) = code[from..].find(func) {
        let start = from + pos;
        let end = start + func.len();
        let before_ok = start == 0 || !is_ident_char(bytes[start - 1] as char);
        let after_ok = bytes.get(end) == Some(&b'(');
        if before_ok && after_ok {
            sites.push(start);
        }
        from = start + 1;
    }
    sites
}

/// Index of the `)` matching the `(` at `open`, respecting nesting.
fn matching_close(code: &str, open: usize) -> Option<usize> {
    let mut depth = 0;
    for (i, c) in code[open..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Splits an argument list on top-level commas, trimming each part.
fn split_args(inner: &str) -> Vec<String> {
    if inner.trim().is_empty() {
        return Vec::new();
    }
    let mut parts = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (i, c) in inner.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(inner[start..i].trim().to_string());
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(inner[start..].trim().to_string());
    parts
}

/// Applies `rule` to `old_code`, rewriting every matching call site exactly
/// once and leaving all other text byte-identical.
pub fn oracle_migrate(old_code: &str, rule: &RewriteRule) -> Result<String, ToyEnvError> {
    let func = match rule {
        RewriteRule::Rename { old, .. } => old,
        RewriteRule::AddParam { func, .. }
        | RewriteRule::ReorderParams { func, .. }
        | RewriteRule::WrapNamespace { func, .. } => func,
    };
    let sites = call_sites(old_code, func);
    if sites.is_empty() {
        return Err(ToyEnvError::SymbolNotFound(func.clone()));
    }

    let mut out = String::with_capacity(old_code.len() + 16);
    let mut cursor = 0;
    for &site in &sites {
        out.push_str(&old_code[cursor..site]);
        let open = site + func.len();
        match rule {
            RewriteRule::Rename { new, .. } => {
                out.push_str(new);
                cursor = open; // keep "(" and everything after
            }
            RewriteRule::WrapNamespace { namespace, .. } => {
                let already = old_code[..site].ends_with(&format!("{namespace}."));
                if !already {
                    out.push_str(namespace);
                    out.push('.');
                }
                out.push_str(func);
                cursor = open;
            }
            RewriteRule::AddParam { name, value, .. } => {
                let close = matching_close(old_code, open)
                    .ok_or_else(|| ToyEnvError::InvalidRule("unbalanced call".into()))?;
                let inner = &old_code[open + 1..close];
                out.push_str(func);
                out.push('(');
                out.push_str(inner);
                if !inner.trim().is_empty() {
                    out.push_str(", ");
                }
                out.push_str(&format!("{name}={value}"));
                out.push(')');
                cursor = close + 1;
            }
            RewriteRule::ReorderParams { order, .. } => {
                let close = matching_close(old_code, open)
                    .ok_or_else(|| ToyEnvError::InvalidRule("unbalanced call".into()))?;
                let args = split_args(&old_code[open + 1..close]);
                if args.len() != order.len() {
                    return Err(ToyEnvError::InvalidRule(format!(
                        "permutation of length {} applied to {} arguments",
                        order.len(),
                        args.len()
                    )));
                }
                let mut seen = vec![false; order.len()];
                for &i in order {
                    if i >= order.len() || seen[i] {
                        return Err(ToyEnvError::InvalidRule(
                            "order is not a permutation".into(),
                        ));
                    }
                    seen[i] = true;
                }
                let reordered: Vec<&str> = order.iter().map(|&i| args[i].as_str()).collect();
                out.push_str(func);
                out.push('(');
                out.push_str(&reordered.join(", "));
                out.push(')');
                cursor = close + 1;
            }
        }
    }
    out.push_str(&old_code[cursor..]);
    Ok(out)
}

const DEPENDENCIES: [&str; 4] = ["toylib", "mathkit", "datagrid", "vecops"];

// The difficulty-1 rename family. Every target is determined by characters
// at most four positions back (the variable pins the function digit, the
// digit pins the argument), so the whole family fits one order-5 table.
const EASY_VARS: [&str; 4] = ["a", "b", "c", "d"];
const EASY_ARGS: [&str; 4] = ["w", "x", "y", "z"];

const FUNCS: [&str; 6] = ["load", "norm", "scale", "fit", "stack", "probe"];
const ARG_VARS: [&str; 5] = ["x", "y", "z", "u", "v"];
const OUT_VARS: [&str; 4] = ["r", "s", "t", "q"];
const PARAM_NAMES: [&str; 3] = ["axis", "k", "eps"];
const NAMESPACES: [&str; 3] = ["np", "tk", "lib2"];

fn update_info_for(rule: &RewriteRule) -> String {
    match rule {
        RewriteRule::Rename { old, new } => {
            format!("function {old} was renamed to {new}")
        }
        RewriteRule::AddParam { func, name, value } => {
            format!("parameter {name}={value} was added to {func}")
        }
        RewriteRule::ReorderParams { func, .. } => {
            format!("arguments of {func} were reordered")
        }
        RewriteRule::WrapNamespace { func, namespace } => {
            format!("function {func} was moved into namespace {namespace}")
        }
    }
}

/// Generates one synthetic migration task. Pure in `(seed, difficulty)`.
///
/// Difficulty 1 draws from the four-task rename family; difficulty 2 uses
/// two-statement snippets with rename/add-parameter/namespace rules;
/// difficulty 3 uses three statements and all four rule kinds.
pub fn gen_task(seed: u64, difficulty: u8) -> (MigrationEntry, RewriteRule) {
    assert!(
        (1..=3).contains(&difficulty),
        "difficulty must be in 1..=3, got {difficulty}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, difficulty as u64));
    let dependency = DEPENDENCIES[rng.gen_range(0..DEPENDENCIES.len())].to_string();
    let target_version = format!("{}.{}", rng.gen_range(1..4), rng.gen_range(0..10));

    let (old_code, rule) = if difficulty == 1 {
        let i = rng.gen_range(0..4);
        let old_fn = format!("f{}", i + 1);
        let new_fn = format!("g{}", i + 1);
        let old_code = format!("{} = {}({})", EASY_VARS[i], old_fn, EASY_ARGS[i]);
        (old_code, RewriteRule::Rename { old: old_fn, new: new_fn })
    } else {
        let n_statements = difficulty as usize;
        // Distinct functions per statement so the rule touches exactly the
        // call sites it names.
        let mut fn_order: Vec<&str> = FUNCS.to_vec();
        for i in (1..fn_order.len()).rev() {
            fn_order.swap(i, rng.gen_range(0..=i));
        }
        let target_stmt = rng.gen_range(0..n_statements);

        let mut statements = Vec::with_capacity(n_statements);
        let mut target_fn = String::new();
        let mut target_arity = 0usize;
        for s in 0..n_statements {
            let func = fn_order[s];
            let arity = if s == target_stmt && difficulty == 3 {
                2 // reorder needs two arguments to be meaningful
            } else {
                rng.gen_range(1..=2)
            };
            let mut args: Vec<&str> = ARG_VARS.to_vec();
            for i in (1..args.len()).rev() {
                args.swap(i, rng.gen_range(0..=i));
            }
            let arg_list = args[..arity].join(", ");
            statements.push(format!("{} = {}({})", OUT_VARS[s], func, arg_list));
            if s == target_stmt {
                target_fn = func.to_string();
                target_arity = arity;
            }
        }
        let old_code = statements.join("\n");

        let n_kinds = if difficulty == 2 { 3 } else { 4 };
        let rule = match rng.gen_range(0..n_kinds) {
            0 => RewriteRule::Rename {
                old: target_fn.clone(),
                new: format!("{target_fn}_v2"),
            },
            1 => RewriteRule::AddParam {
                func: target_fn.clone(),
                name: PARAM_NAMES[rng.gen_range(0..PARAM_NAMES.len())].to_string(),
                value: rng.gen_range(0..3).to_string(),
            },
            2 => RewriteRule::WrapNamespace {
                func: target_fn.clone(),
                namespace: NAMESPACES[rng.gen_range(0..NAMESPACES.len())].to_string(),
            },
            _ => RewriteRule::ReorderParams {
                func: target_fn.clone(),
                order: (0..target_arity).rev().collect(),
            },
        };
        (old_code, rule)
    };

    let target_code = oracle_migrate(&old_code, &rule).expect("generated rule always applies");
    let entry = MigrationEntry {
        dependency,
        target_version,
        update_info: update_info_for(&rule),
        old_code,
        target_code,
        extra: serde_json::Map::new(),
    };
    (entry, rule)
}
