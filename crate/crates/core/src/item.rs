use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// ISO-639 language code, e.g. `en` or `hy`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Lang(String);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid language code {0:?}")]
pub struct InvalidLang(pub String);

impl Lang {
    pub fn new(code: &str) -> Result<Self, InvalidLang> {
        let ok = (2..=3).contains(&code.len()) && code.bytes().all(|b| b.is_ascii_lowercase());
        if ok {
            Ok(Lang(code.to_owned()))
        } else {
            Err(InvalidLang(code.to_owned()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Lang {
    type Err = InvalidLang;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Lang::new(s)
    }
}

impl TryFrom<String> for Lang {
    type Error = InvalidLang;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Lang::new(&s)
    }
}

impl From<Lang> for String {
    fn from(l: Lang) -> String {
        l.0
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generated,
    Translated,
    Validated,
}

pub const NUM_OPTIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ItemError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("expected {NUM_OPTIONS} options, got {0}")]
    OptionCount(usize),
    #[error("correct_index {0} out of range")]
    CorrectIndex(usize),
    #[error("options {0} and {1} are identical")]
    DuplicateOption(usize, usize),
    #[error("option {0} is empty")]
    EmptyOption(usize),
}

/// A multiple-choice question with exactly four options.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McQaItem {
    pub item_id: String,
    pub pair_id: String,
    pub question: String,
    pub options: Vec<String>,
    pub correct_index: usize,
    pub language: Lang,
    pub stage: Stage,
}

impl McQaItem {
    pub fn answer(&self) -> &str {
        &self.options[self.correct_index]
    }

    pub fn check(&self) -> Result<(), ItemError> {
        check_fields(&self.question, &self.options, self.correct_index)
    }
}

pub(crate) fn check_fields(question: &str, options: &[String], correct: usize) -> Result<(), ItemError> {
    if question.trim().is_empty() {
        return Err(ItemError::EmptyQuestion);
    }
    if options.len() != NUM_OPTIONS {
        return Err(ItemError::OptionCount(options.len()));
    }
    if correct >= NUM_OPTIONS {
        return Err(ItemError::CorrectIndex(correct));
    }
    for (i, a) in options.iter().enumerate() {
        if a.trim().is_empty() {
            return Err(ItemError::EmptyOption(i));
        }
        for (j, b) in options.iter().enumerate().skip(i + 1) {
            if a == b {
                return Err(ItemError::DuplicateOption(i, j));
            }
        }
    }
    Ok(())
}
