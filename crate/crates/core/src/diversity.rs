//! Question-type frequency analysis.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::item::McQaItem;

/// Interrogative heads are looked for within this many leading tokens.
pub const SCAN_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QuestionType {
    Who,
    Where,
    What,
    When,
    Which,
    How,
    General,
    Why,
}

impl QuestionType {
    /// Table column order.
    pub const ALL: [QuestionType; 8] = [
        QuestionType::Who,
        QuestionType::Where,
        QuestionType::What,
        QuestionType::When,
        QuestionType::Which,
        QuestionType::How,
        QuestionType::General,
        QuestionType::Why,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuestionType::Who => "Who",
            QuestionType::Where => "Where",
            QuestionType::What => "What",
            QuestionType::When => "When",
            QuestionType::Which => "Which",
            QuestionType::How => "How",
            QuestionType::General => "General",
            QuestionType::Why => "Why",
        }
    }

    fn from_word(w: &str) -> Option<Self> {
        Some(match w {
            "who" => QuestionType::Who,
            "where" => QuestionType::Where,
            "what" => QuestionType::What,
            "when" => QuestionType::When,
            "which" => QuestionType::Which,
            "how" => QuestionType::How,
            "why" => QuestionType::Why,
            _ => return None,
        })
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn tag_question_type(question: &str) -> QuestionType {
    question
        .split_whitespace()
        .take(SCAN_WINDOW)
        .find_map(|tok| {
            let head: String = tok
                .trim_start_matches(|c: char| !c.is_alphabetic())
                .chars()
                .take_while(|c| c.is_alphabetic())
                .flat_map(char::to_lowercase)
                .collect();
            QuestionType::from_word(&head)
        })
        .unwrap_or(QuestionType::General)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QuestionTypeTable {
    counts: [usize; 8],
}

impl QuestionTypeTable {
    pub fn get(&self, t: QuestionType) -> usize {
        self.counts[Self::slot(t)]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = (QuestionType, usize)> + '_ {
        QuestionType::ALL.iter().map(|&t| (t, self.get(t)))
    }

    fn slot(t: QuestionType) -> usize {
        QuestionType::ALL.iter().position(|&x| x == t).unwrap()
    }

    fn bump(&mut self, t: QuestionType) {
        self.counts[Self::slot(t)] += 1;
    }

    /// Header row and count row, right-aligned per column.
    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = self.rows().map(|(t, n)| t.name().len().max(n.to_string().len())).collect();
        let line = |cells: Vec<String>| {
            cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
        };
        format!(
            "{}\n{}\n",
            line(QuestionType::ALL.iter().map(|t| t.name().to_string()).collect()),
            line(self.rows().map(|(_, n)| n.to_string()).collect())
        )
    }
}

impl Serialize for QuestionTypeTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(8))?;
        for (t, n) in self.rows() {
            m.serialize_entry(t.name(), &n)?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for QuestionTypeTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m: std::collections::BTreeMap<String, usize> = std::collections::BTreeMap::deserialize(d)?;
        let mut table = QuestionTypeTable::default();
        for (name, n) in m {
            let t = QuestionType::ALL
                .into_iter()
                .find(|t| t.name() == name)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown question type {name:?}")))?;
            table.counts[Self::slot(t)] = n;
        }
        Ok(table)
    }
}

pub fn type_frequency_of<'a>(questions: impl IntoIterator<Item = &'a str>) -> QuestionTypeTable {
    let mut table = QuestionTypeTable::default();
    for q in questions {
        table.bump(tag_question_type(q));
    }
    table
}

pub fn type_frequency(items: &[McQaItem]) -> QuestionTypeTable {
    type_frequency_of(items.iter().map(|i| i.question.as_str()))
}
