//! Structured decomposition of raw model output.
//!
//! A well-formed completion looks like
//! `<think>...</think><answer>...```python\n...\n```...</answer>`.
//! Because the assistant prompt is pre-seeded with `Let me solve this step by
//! step.\n<think>`, a completion may also open mid-think-block: raw text with
//! no `<think>` but a `</think>` before the answer is treated as having an
//! implicit open tag at position 0.

use super::syntax::SyntaxChecker;
use super::StructuralChecker;

/// Result of parsing one model completion. Parsing is total: malformed input
/// yields `format_ok = false`, never an error.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedOutput {
    /// The completion exactly as received.
    pub raw_text: String,
    /// Contents of the think block, when its delimiters were found.
    pub think_text: Option<String>,
    /// Contents of the answer block, when both delimiters were found.
    pub answer_text: Option<String>,
    /// Bytes between the opening and closing fence lines of the first fenced
    /// code block, with one trailing newline normalized away.
    pub code: Option<String>,
    /// True iff the completion matches the required output format exactly.
    pub format_ok: bool,
    /// True iff `code` is present and passes the syntax checker.
    pub syntax_ok: bool,
}

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

fn find_all(haystack: &str, needle: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        out.push(from + pos);
        from += pos + needle.len();
    }
    out
}

/// Extracts the complete fenced code blocks of `text`.
///
/// A block opens at a line beginning with three backticks (optional language
/// tag after them) and closes at a line that is three backticks, ignoring
/// trailing whitespace. Returns the block contents plus whether a dangling
/// unclosed opener remains.
fn fenced_blocks(text: &str) -> (Vec<String>, bool) {
    let mut blocks = Vec::new();
    let mut content_start: Option<usize> = None;
    let mut line_start = 0;
    let bytes = text.as_bytes();
    while line_start <= text.len() {
        let line_end = text[line_start..]
            .find('\n')
            .map(|i| line_start + i)
            .unwrap_or(text.len());
        let line = &text[line_start..line_end];
        match content_start {
            None => {
                if line.starts_with("```") {
                    // Content begins after this line's newline.
                    content_start = Some((line_end + 1).min(text.len()));
                }
            }
            Some(start) => {
                if line.trim_end() == "```" {
                    let raw = &text[start..line_start.min(text.len())];
                    blocks.push(raw.strip_suffix('\n').unwrap_or(raw).to_string());
                    content_start = None;
                }
            }
        }
        if line_end == text.len() {
            break;
        }
        line_start = line_end + 1;
        // Guard against a trailing newline producing an extra empty loop turn.
        if line_start > bytes.len() {
            break;
        }
    }
    (blocks, content_start.is_some())
}

/// Parses a raw completion with the default hermetic syntax checker.
pub fn parse_output(raw: &str) -> ParsedOutput {
    parse_output_with(raw, &StructuralChecker)
}

/// Parses a raw completion, validating any extracted code with `checker`.
pub fn parse_output_with(raw: &str, checker: &dyn SyntaxChecker) -> ParsedOutput {
    let think_opens = find_all(raw, THINK_OPEN);
    let think_closes = find_all(raw, THINK_CLOSE);
    let answer_opens = find_all(raw, ANSWER_OPEN);
    let answer_closes = find_all(raw, ANSWER_CLOSE);

    // Think block: one explicit `<think>...</think>` pair, or an implicit
    // open at position 0 when only the close tag is present.
    let mut think_ok = false;
    let mut think_end = 0; // byte index just past `</think>`
    let think_text = if think_opens.len() == 1
        && think_closes.len() == 1
        && think_opens[0] < think_closes[0]
    {
        think_ok = true;
        think_end = think_closes[0] + THINK_CLOSE.len();
        Some(raw[think_opens[0] + THINK_OPEN.len()..think_closes[0]].to_string())
    } else if think_opens.is_empty() && think_closes.len() == 1 {
        think_ok = true;
        think_end = think_closes[0] + THINK_CLOSE.len();
        Some(raw[..think_closes[0]].to_string())
    } else {
        // Best effort for diagnostics: first open with a close after it.
        think_opens
            .first()
            .and_then(|&o| {
                think_closes
                    .iter()
                    .find(|&&c| c > o)
                    .map(|&c| raw[o + THINK_OPEN.len()..c].to_string())
            })
            .or_else(|| {
                think_closes
                    .first()
                    .filter(|&&c| think_opens.iter().all(|&o| o > c))
                    .map(|&c| raw[..c].to_string())
            })
    };

    // Answer block: extracted from the first open/close pair regardless of
    // placement, so correctness can still be scored on order violations.
    let answer_text = answer_opens.first().and_then(|&o| {
        answer_closes
            .iter()
            .find(|&&c| c > o)
            .map(|&c| raw[o + ANSWER_OPEN.len()..c].to_string())
    });

    let (answer_blocks, answer_dangling) = match &answer_text {
        Some(text) => fenced_blocks(text),
        None => (Vec::new(), false),
    };
    // Fall back to scanning the whole output so partially formed completions
    // still yield code for the correctness reward.
    let code = if let Some(first) = answer_blocks.first() {
        Some(first.clone())
    } else {
        fenced_blocks(raw).0.into_iter().next()
    };

    let answer_ok = answer_opens.len() == 1
        && answer_closes.len() == 1
        && answer_opens[0] < answer_closes[0];

    let format_ok = think_ok
        && answer_ok
        && answer_opens[0] >= think_end
        && raw[think_end..answer_opens[0]].trim().is_empty()
        && raw[answer_closes[0] + ANSWER_CLOSE.len()..].trim().is_empty()
        && answer_blocks.len() == 1
        && !answer_dangling;

    let syntax_ok = code.as_deref().map_or(false, |c| checker.is_valid(c));

    ParsedOutput {
        raw_text: raw.to_string(),
        think_text,
        answer_text,
        code,
        format_ok,
        syntax_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_output() {
        let p = parse_output("<think>rename f</think><answer>```python\ny=f2(a)\n```</answer>");
        assert!(p.format_ok);
        assert_eq!(p.think_text.as_deref(), Some("rename f"));
        assert_eq!(p.code.as_deref(), Some("y=f2(a)"));
        assert!(p.syntax_ok);
    }

    #[test]
    fn missing_answer_block() {
        let p = parse_output("<think>x</think>");
        assert!(!p.format_ok);
        assert_eq!(p.think_text.as_deref(), Some("x"));
        assert!(p.answer_text.is_none());
        assert!(p.code.is_none());
        assert!(!p.syntax_ok);
    }

    #[test]
    fn order_violation_still_extracts_code() {
        let p = parse_output("<answer>```python\ny=1\n```</answer><think>late</think>");
        assert!(!p.format_ok);
        assert_eq!(p.code.as_deref(), Some("y=1"));
    }

    #[test]
    fn implicit_open_think_from_preseeded_prefix() {
        let p = parse_output("the api was renamed</think>\n<answer>\n```python\ny = f2(a)\n```\n</answer>");
        assert!(p.format_ok, "implicit think open must be accepted");
        assert_eq!(p.think_text.as_deref(), Some("the api was renamed"));
        assert_eq!(p.code.as_deref(), Some("y = f2(a)"));
    }

    #[test]
    fn text_before_explicit_think_is_permitted() {
        let p = parse_output("preamble <think>t</think> <answer>```\nx = 1\n```</answer>");
        assert!(p.format_ok);
    }

    #[test]
    fn trailing_junk_after_answer_fails() {
        let p = parse_output("<think>t</think><answer>```\nx = 1\n```</answer>extra");
        assert!(!p.format_ok);
        assert_eq!(p.code.as_deref(), Some("x = 1"));
    }

    #[test]
    fn multiple_fences_take_first_and_fail_format() {
        let p =
            parse_output("<think>t</think><answer>```\na = 1\n```\n```\nb = 2\n```</answer>");
        assert!(!p.format_ok);
        assert_eq!(p.code.as_deref(), Some("a = 1"));
    }

    #[test]
    fn two_think_blocks_fail() {
        let p = parse_output("<think>a</think><think>b</think><answer>```\nx=1\n```</answer>");
        assert!(!p.format_ok);
    }

    #[test]
    fn unclosed_fence_yields_no_code() {
        let p = parse_output("<think>t</think><answer>```python\nx = 1</answer>");
        assert!(!p.format_ok);
        assert!(p.code.is_none());
    }

    #[test]
    fn fence_without_language_tag() {
        let p = parse_output("<think>t</think><answer>```\nz = q(1)\n```</answer>");
        assert!(p.format_ok);
        assert_eq!(p.code.as_deref(), Some("z = q(1)"));
    }

    #[test]
    fn empty_input_is_total() {
        let p = parse_output("");
        assert!(!p.format_ok);
        assert!(p.think_text.is_none() && p.answer_text.is_none() && p.code.is_none());
    }

    #[test]
    fn empty_code_block_preserved() {
        let p = parse_output("<think>t</think><answer>```python\n```</answer>");
        assert!(p.format_ok);
        assert_eq!(p.code.as_deref(), Some(""));
        assert!(!p.syntax_ok, "empty code is not syntactically valid");
    }

    #[test]
    fn code_fallback_outside_answer() {
        let p = parse_output("```python\ny = 3\n```");
        assert!(!p.format_ok);
        assert_eq!(p.code.as_deref(), Some("y = 3"));
    }
}
