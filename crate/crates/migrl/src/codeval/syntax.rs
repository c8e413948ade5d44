//! Syntax validation for extracted code.
//!
//! The default checker is hermetic: a structural scan that catches the
//! failure modes that matter for reward shaping (unbalanced brackets,
//! unterminated strings, mixed indentation, headers without a body) without
//! depending on an interpreter. A command-backed checker is available when
//! real compile checking is wanted.

use std::io::Write;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use super::metrics::normalize_code;

/// Decides whether a piece of extracted code is syntactically valid.
pub trait SyntaxChecker: Send + Sync {
    fn is_valid(&self, code: &str) -> bool;
}

/// The hermetic structural checker; see [`structural_syntax_check`].
#[derive(Debug, Clone, Copy, Default)]
pub struct StructuralChecker;

impl SyntaxChecker for StructuralChecker {
    fn is_valid(&self, code: &str) -> bool {
        structural_syntax_check(code)
    }
}

/// Pipes code to an external command; exit status 0 means valid.
///
/// Any other exit status, a spawn failure, or hitting the timeout counts as
/// invalid.
#[derive(Debug, Clone)]
pub struct CommandChecker {
    /// Argv of the checker process, e.g. `["python3", "-c", "import sys,ast; ast.parse(sys.stdin.read())"]`.
    pub command: Vec<String>,
    /// Wall-clock limit per check.
    pub timeout: Duration,
}

impl CommandChecker {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            timeout: Duration::from_secs(5),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl SyntaxChecker for CommandChecker {
    fn is_valid(&self, code: &str) -> bool {
        let Some((program, args)) = self.command.split_first() else {
            return false;
        };
        let child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn();
        let Ok(mut child) = child else { return false };
        if let Some(mut stdin) = child.stdin.take() {
            let _ = stdin.write_all(code.as_bytes());
        }
        let deadline = Instant::now() + self.timeout;
        loop {
            match child.try_wait() {
                Ok(Some(status)) => return status.success(),
                Ok(None) => {
                    if Instant::now() >= deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        return false;
                    }
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(_) => return false,
            }
        }
    }
}

const OPENERS: [char; 3] = ['(', '[', '{'];

fn closer_for(open: char) -> char {
    match open {
        '(' => ')',
        '[' => ']',
        _ => '}',
    }
}

/// Structural syntax check.
///
/// Valid iff, after line-ending unification:
/// (a) round/square/curly brackets balance and nest correctly outside string
///     literals and comments,
/// (b) single- and double-quoted strings terminate on their line, and
///     triple-quoted strings terminate before end of input,
/// (c) no line's indentation mixes tabs and spaces,
/// (d) every line whose last non-whitespace, non-comment character is a
///     code-context `:` is followed by a more-indented non-empty line,
/// (e) the code is non-empty after normalization.
pub fn structural_syntax_check(code: &str) -> bool {
    if normalize_code(code).is_empty() {
        return false;
    }
    let code = code.replace("\r\n", "\n").replace('\r', "\n");

    let mut bracket_stack: Vec<char> = Vec::new();
    let mut in_triple: Option<char> = None;
    // Per line: (indent width, has any non-whitespace, ends with code colon).
    let mut line_meta: Vec<(usize, bool, bool)> = Vec::new();

    for line in code.split('\n') {
        let chars: Vec<char> = line.chars().collect();
        let mut indent = 0;
        if in_triple.is_none() {
            let mut saw_space = false;
            let mut saw_tab = false;
            while indent < chars.len() && (chars[indent] == ' ' || chars[indent] == '\t') {
                saw_space |= chars[indent] == ' ';
                saw_tab |= chars[indent] == '\t';
                indent += 1;
            }
            if saw_space && saw_tab {
                return false;
            }
        }

        let mut last_code_colon = false;
        let mut has_content = !line.trim().is_empty();
        let mut i = if in_triple.is_some() { 0 } else { indent };
        while i < chars.len() {
            let c = chars[i];
            if let Some(q) = in_triple {
                has_content = true;
                if c == '\\' {
                    i += 2;
                    continue;
                }
                if c == q && chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) {
                    in_triple = None;
                    i += 3;
                    // The closing quote is a code-context character.
                    last_code_colon = false;
                    continue;
                }
                i += 1;
                continue;
            }
            match c {
                '#' => break, // comment to end of line
                '\'' | '"' => {
                    if chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c) {
                        in_triple = Some(c);
                        i += 3;
                        continue;
                    }
                    // Single-line string: must close before end of line.
                    let mut j = i + 1;
                    let mut closed = false;
                    while j < chars.len() {
                        if chars[j] == '\\' {
                            j += 2;
                            continue;
                        }
                        if chars[j] == c {
                            closed = true;
                            break;
                        }
                        j += 1;
                    }
                    if !closed {
                        return false;
                    }
                    last_code_colon = false;
                    i = j + 1;
                    continue;
                }
                _ if OPENERS.contains(&c) => {
                    bracket_stack.push(c);
                    last_code_colon = false;
                }
                ')' | ']' | '}' => match bracket_stack.pop() {
                    Some(open) if closer_for(open) == c => last_code_colon = false,
                    _ => return false,
                },
                _ => {
                    if !c.is_whitespace() {
                        last_code_colon = c == ':';
                    }
                }
            }
            i += 1;
        }
        // Inside a triple string the colon rule never applies.
        if in_triple.is_some() {
            last_code_colon = false;
        }
        line_meta.push((indent, has_content, last_code_colon));
    }

    if in_triple.is_some() || !bracket_stack.is_empty() {
        return false;
    }

    // (d): a block header needs a more-indented non-empty follower.
    for (idx, &(indent, _, colon)) in line_meta.iter().enumerate() {
        if !colon {
            continue;
        }
        let follower = line_meta[idx + 1..].iter().find(|&&(_, content, _)| content);
        match follower {
            Some(&(follow_indent, _, _)) if follow_indent > indent => {}
            _ => return false,
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_function() {
        assert!(structural_syntax_check("def f(a):\n    return a"));
    }

    #[test]
    fn invalid_header() {
        assert!(!structural_syntax_check("def f(:"));
    }

    #[test]
    fn unterminated_bracket() {
        assert!(!structural_syntax_check("x = (1, 2"));
    }

    #[test]
    fn mismatched_nesting() {
        assert!(!structural_syntax_check("x = [1, (2])"));
    }

    #[test]
    fn brackets_inside_strings_ignored() {
        assert!(structural_syntax_check("s = \"(((\""));
        assert!(structural_syntax_check("s = '['  # ) comment bracket"));
    }

    #[test]
    fn unterminated_single_line_string() {
        assert!(!structural_syntax_check("s = \"abc"));
        assert!(!structural_syntax_check("s = 'a\nb'"));
    }

    #[test]
    fn escaped_quote_does_not_close() {
        assert!(structural_syntax_check("s = \"a\\\"b\""));
        assert!(!structural_syntax_check("s = \"a\\\""));
    }

    #[test]
    fn triple_quoted_spans_lines() {
        assert!(structural_syntax_check("s = \"\"\"a\nb:\nc\"\"\""));
        assert!(!structural_syntax_check("s = \"\"\"a\nb"));
    }

    #[test]
    fn mixed_indentation_rejected() {
        assert!(!structural_syntax_check("def f(a):\n \treturn a"));
        assert!(structural_syntax_check("def f(a):\n\treturn a"));
    }

    #[test]
    fn colon_needs_indented_follower() {
        assert!(!structural_syntax_check("def f(a):"));
        assert!(!structural_syntax_check("def f(a):\nreturn a"));
        assert!(structural_syntax_check("for i in xs:\n\n    g(i)"));
    }

    #[test]
    fn colon_inside_string_is_not_a_header() {
        assert!(structural_syntax_check("s = 'a:'"));
    }

    #[test]
    fn empty_after_normalization_invalid() {
        assert!(!structural_syntax_check(""));
        assert!(!structural_syntax_check("  \n\t\n"));
    }

    #[test]
    fn command_checker_validates_via_exit_status() {
        let ok = CommandChecker::new(vec!["sh".into(), "-c".into(), "exit 0".into()]);
        let bad = CommandChecker::new(vec!["sh".into(), "-c".into(), "exit 1".into()]);
        assert!(ok.is_valid("anything"));
        assert!(!bad.is_valid("anything"));
    }

    #[test]
    fn command_checker_timeout_is_invalid() {
        let slow = CommandChecker::new(vec!["sh".into(), "-c".into(), "sleep 5".into()])
            .with_timeout(Duration::from_millis(50));
        assert!(!slow.is_valid("x"));
    }

    #[test]
    fn command_checker_missing_binary_is_invalid() {
        let gone = CommandChecker::new(vec!["definitely-not-a-real-binary-9x".into()]);
        assert!(!gone.is_valid("x"));
    }
}
