//! Code normalization and string-similarity metrics.

/// Canonicalizes whitespace so that cosmetic differences do not affect the
/// match metrics: LF line endings, no trailing whitespace per line, no
/// leading/trailing blank lines, common indentation removed.
pub fn normalize_code(code: &str) -> String {
    let unified = code.replace("\r\n", "\n").replace('\r', "\n");
    let mut lines: Vec<String> = unified
        .split('\n')
        .map(|l| l.trim_end().to_string())
        .collect();

    while lines.first().map_or(false, |l| l.is_empty()) {
        lines.remove(0);
    }
    while lines.last().map_or(false, |l| l.is_empty()) {
        lines.pop();
    }

    // Dedent: longest common leading-whitespace prefix over non-empty lines.
    let mut common: Option<String> = None;
    for line in lines.iter().filter(|l| !l.is_empty()) {
        let ws: String = line.chars().take_while(|c| c.is_whitespace()).collect();
        common = Some(match common {
            None => ws,
            Some(prev) => prev
                .chars()
                .zip(ws.chars())
                .take_while(|(a, b)| a == b)
                .map(|(a, _)| a)
                .collect(),
        });
    }
    let prefix = common.unwrap_or_default();
    if !prefix.is_empty() {
        for line in &mut lines {
            if let Some(rest) = line.strip_prefix(&prefix) {
                *line = rest.to_string();
            }
        }
    }
    lines.join("\n")
}

/// Minimum number of single-character insertions, deletions, and
/// substitutions transforming `a` into `b`.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }

    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j + 1] + 1).min(cur[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized edit similarity in [0, 1]: `1 - d/max(|a|, |b|)` over the
/// normalized code strings; two empty strings are identical (1.0).
pub fn edit_similarity(pred: &str, target: &str) -> f64 {
    let a = normalize_code(pred);
    let b = normalize_code(target);
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / max_len as f64
}

/// True iff the two snippets are identical after normalization.
pub fn exact_match(pred: &str, target: &str) -> bool {
    normalize_code(pred) == normalize_code(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_strips_and_dedents() {
        assert_eq!(normalize_code("  y = f(a)  \n"), "y = f(a)");
        assert_eq!(normalize_code("a\r\nb"), "a\nb");
        assert_eq!(normalize_code(""), "");
        assert_eq!(normalize_code("\n\n  x = 1\n  y = 2\n\n"), "x = 1\ny = 2");
        assert_eq!(normalize_code("    a\n      b"), "a\n  b");
    }

    #[test]
    fn normalize_keeps_relative_indent_with_blank_interior_line() {
        assert_eq!(normalize_code("  a\n\n  b"), "a\n\nb");
    }

    #[test]
    fn levenshtein_known_values() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("same", "same"), 0);
    }

    #[test]
    fn edit_similarity_values() {
        assert_eq!(edit_similarity("x = 1", "x = 1"), 1.0);
        assert!((edit_similarity("abcd", "abce") - 0.75).abs() < 1e-12);
        assert_eq!(edit_similarity("", "abc"), 0.0);
        assert_eq!(edit_similarity("", ""), 1.0);
    }

    #[test]
    fn exact_match_ignores_cosmetics() {
        assert!(exact_match("y = f2(a)  \r\n", "y = f2(a)"));
        assert!(exact_match("    y = 1\n    z = 2", "y = 1\nz = 2"));
        assert!(!exact_match("y = f2(a)", "y = f3(a)"));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,80}") {
            let once = normalize_code(&s);
            prop_assert_eq!(normalize_code(&once), once);
        }

        #[test]
        fn levenshtein_symmetry_and_identity(a in "[abc]{0,10}", b in "[abc]{0,10}") {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert_eq!(levenshtein(&a, &a), 0);
            prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
        }

        #[test]
        fn levenshtein_triangle(a in "[ab]{0,8}", b in "[ab]{0,8}", c in "[ab]{0,8}") {
            let ab = levenshtein(&a, &b);
            let bc = levenshtein(&b, &c);
            let ac = levenshtein(&a, &c);
            prop_assert!(ac <= ab + bc);
        }
    }
}
