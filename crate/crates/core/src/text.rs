//! Text normalization shared by the filters and scorers.

/// Case-folds and collapses every run of Unicode whitespace to one space.
/// Leading and trailing whitespace is removed.
pub fn fold_collapse(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Whitespace tokenization; punctuation stays attached to its token.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// True when `needle` occurs contiguously in `haystack` after
/// [`fold_collapse`] of both sides.
pub fn contains_normalized(haystack: &str, needle: &str) -> bool {
    let needle = fold_collapse(needle);
    !needle.is_empty() && fold_collapse(haystack).contains(&needle)
}

/// Lowercase ASCII-ish slug for identifiers. Non-alphanumerics become `_`.
pub fn slug(s: &str) -> String {
    let mut out = String::new();
    let mut last_us = true;
    for c in s.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            out.push(c);
            last_us = false;
        } else if !last_us {
            out.push('_');
            last_us = true;
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Sign languages are languages").len(), 4);
        assert_eq!(tokenize("").len(), 0);
        assert_eq!(tokenize("a  b\tc"), vec!["a", "b", "c"]);
        assert_eq!(tokenize("Hello, world."), vec!["Hello,", "world."]);
    }

    #[test]
    fn fold_collapse_handles_unicode_space_and_case() {
        assert_eq!(fold_collapse("  Visual-Manual\u{00a0}\n Modality "), "visual-manual modality");
        assert_eq!(fold_collapse("ՀԱՅԵՐԵՆ"), "հայերեն");
    }

    #[test]
    fn slug_is_stable() {
        assert_eq!(slug("Sign language"), "sign_language");
        assert_eq!(slug("UEFA Champions League (2024)"), "uefa_champions_league_2024");
    }
}
