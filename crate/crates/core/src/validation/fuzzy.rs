use crate::text::fold_collapse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("needle is empty after normalization")]
pub struct EmptyNeedle;

/// Minimum unit-cost Levenshtein distance between `needle` and any
/// contiguous substring of `haystack` (semi-global alignment: leading and
/// trailing haystack characters are free).
pub fn infix_distance(needle: &[char], haystack: &[char]) -> usize {
    let mut prev = vec![0usize; haystack.len() + 1];
    let mut cur = vec![0usize; haystack.len() + 1];
    for (i, &a) in needle.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &b) in haystack.iter().enumerate() {
            let sub = prev[j] + usize::from(a != b);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev.into_iter().min().unwrap_or(0)
}

/// `1 - d / |needle|` on case-folded, whitespace-collapsed text, where `d`
/// is the [`infix_distance`]. Lies in `[0, 1]`; 1 means verbatim containment.
pub fn fuzzy_substring_score(needle: &str, haystack: &str) -> Result<f64, EmptyNeedle> {
    let needle: Vec<char> = fold_collapse(needle).chars().collect();
    if needle.is_empty() {
        return Err(EmptyNeedle);
    }
    let haystack: Vec<char> = fold_collapse(haystack).chars().collect();
    let d = infix_distance(&needle, &haystack);
    Ok((1.0 - d as f64 / needle.len() as f64).clamp(0.0, 1.0))
}
