use std::collections::HashSet;

use crate::item::McQaItem;
use crate::text::{contains_normalized, fold_collapse};

const EXTRA_TRAILING_PUNCT: &[char] = &['։', '՞', '…', '？', '。', '！'];

/// Case-folded, whitespace-collapsed, trailing punctuation removed.
pub fn normalize_question(q: &str) -> String {
    let folded = fold_collapse(q);
    folded
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || EXTRA_TRAILING_PUNCT.contains(&c) || c.is_whitespace())
        .to_owned()
}

/// Keeps the first occurrence of each normalized question, preserving order.
pub fn dedup_questions(items: Vec<McQaItem>) -> Vec<McQaItem> {
    let mut seen = HashSet::new();
    items.into_iter().filter(|it| seen.insert(normalize_question(&it.question))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterVerdict {
    Keep,
    Reject,
}

/// Keep iff the correct option occurs contiguously in the paragraph,
/// ignoring case and whitespace runs.
pub fn verbatim_answer_filter(item: &McQaItem, paragraph: &str) -> FilterVerdict {
    if contains_normalized(paragraph, item.answer()) {
        FilterVerdict::Keep
    } else {
        FilterVerdict::Reject
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::item::{Lang, Stage};

    fn item(q: &str, answer: &str) -> McQaItem {
        McQaItem {
            item_id: q.into(),
            pair_id: "p".into(),
            question: q.into(),
            options: vec![answer.into(), "x1".into(), "x2".into(), "x3".into()],
            correct_index: 0,
            language: Lang::new("en").unwrap(),
            stage: Stage::Generated,
        }
    }

    const UEFA: &str = "Since the rebranding of the European Champion Clubs' Cup as the UEFA Champions League in 1992, \
        107 different players from 37 countries have scored three goals or more in a single match.";
    const SIGN: &str = "Sign languages (also known as signed languages) are languages that use the visual-manual \
        modality to convey meaning, instead of spoken words.";

    #[test]
    fn dedup_normalization_collision() {
        let out = dedup_questions(vec![item("Who founded X?", "a"), item("who founded  X?", "a")]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].question, "Who founded X?");
    }

    #[test]
    fn dedup_identity_on_distinct() {
        let items = vec![item("A?", "a"), item("B?", "a"), item("C?", "a")];
        assert_eq!(dedup_questions(items.clone()), items);
    }

    #[test]
    fn armenian_question_mark_is_trailing_punctuation() {
        assert_eq!(normalize_question("Ո՞վ է հեղինակը։"), "ո՞վ է հեղինակը");
    }

    #[test]
    fn verbatim_examples() {
        assert_eq!(verbatim_answer_filter(&item("q", "European Champion Clubs' Cup"), UEFA), FilterVerdict::Keep);
        assert_eq!(verbatim_answer_filter(&item("q", "Visual-manual"), SIGN), FilterVerdict::Keep);
        assert_eq!(verbatim_answer_filter(&item("q", "Jupiter"), SIGN), FilterVerdict::Reject);
    }
}
