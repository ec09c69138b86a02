//! Parser for the labeled block format requested by the generation prompt:
//!
//! ```text
//! Q: What is the primary modality used to convey meaning in sign languages?
//! A1: Auditory-vocal
//! A2: Visual-manual
//! A3: Tactile-kinesthetic
//! A4: Olfactory-gustatory
//! Answer: Visual-manual
//! ```

use serde::{Deserialize, Serialize};

use super::GenerationError;
use crate::item::{check_fields, Lang, McQaItem, Stage, NUM_OPTIONS};
use crate::text::fold_collapse;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub block: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationBatch {
    pub pair_id: String,
    pub items: Vec<McQaItem>,
    pub raw_output: String,
    pub parse_failures: usize,
    pub failures: Vec<ParseFailure>,
}

#[derive(Default)]
struct RawBlock {
    question: String,
    options: [Option<String>; NUM_OPTIONS],
    answer: Option<String>,
}

/// Strips list numbering and markdown emphasis in front of a field label.
fn strip_decoration(line: &str) -> &str {
    let mut s = line.trim().trim_start_matches(['#', '*', '-', '>']).trim_start();
    let digits = s.len() - s.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')']) {
            s = r.trim_start();
        }
    }
    s.trim_start_matches('*')
}

fn field<'a>(line: &'a str, labels: &[&str]) -> Option<&'a str> {
    labels.iter().find_map(|l| {
        let head = line.get(..l.len())?;
        if head.eq_ignore_ascii_case(l) {
            Some(line[l.len()..].trim().trim_matches('*').trim())
        } else {
            None
        }
    })
}

fn resolve_answer(key: &str, options: &[String]) -> Option<usize> {
    let key = key.trim();
    if let Some(i) = options.iter().position(|o| o == key) {
        return Some(i);
    }
    let folded = fold_collapse(key);
    if let Some(i) = options.iter().position(|o| fold_collapse(o) == folded) {
        return Some(i);
    }
    let label = key.trim_start_matches(['A', 'a']);
    match label.parse::<usize>() {
        Ok(n) if (1..=NUM_OPTIONS).contains(&n) && label.len() == 1 => Some(n - 1),
        _ => None,
    }
}

fn finish(block: RawBlock) -> Result<(String, Vec<String>, usize), String> {
    let mut options = Vec::with_capacity(NUM_OPTIONS);
    for (i, o) in block.options.into_iter().enumerate() {
        match o {
            Some(o) if !o.is_empty() => options.push(o),
            _ => return Err(format!("missing option A{}", i + 1)),
        }
    }
    let key = block.answer.ok_or("missing Answer line")?;
    let correct = resolve_answer(&key, &options).ok_or_else(|| format!("answer key {key:?} names no option"))?;
    check_fields(&block.question, &options, correct).map_err(|e| e.to_string())?;
    Ok((block.question, options, correct))
}

/// Extracts well-formed blocks; malformed ones are counted and skipped.
pub fn parse_generation(raw: &str, pair_id: &str, language: &Lang) -> Result<GenerationBatch, GenerationError> {
    let mut blocks: Vec<RawBlock> = Vec::new();
    for line in raw.lines() {
        let line = strip_decoration(line);
        if let Some(q) = field(line, &["Q:", "Question:"]) {
            blocks.push(RawBlock { question: q.to_owned(), ..Default::default() });
            continue;
        }
        let Some(cur) = blocks.last_mut() else { continue };
        if let Some(a) = field(line, &["Answer:", "Correct answer:", "Correct:"]) {
            cur.answer.get_or_insert_with(|| a.to_owned());
            continue;
        }
        for i in 0..NUM_OPTIONS {
            if let Some(o) = field(line, &[&format!("A{}:", i + 1)]) {
                cur.options[i].get_or_insert_with(|| o.to_owned());
            }
        }
    }

    let mut items = Vec::new();
    let mut failures = Vec::new();
    for (idx, block) in blocks.into_iter().enumerate() {
        match finish(block) {
            Ok((question, options, correct_index)) => items.push(McQaItem {
                item_id: format!("{pair_id}-q{idx:02}"),
                pair_id: pair_id.to_owned(),
                question,
                options,
                correct_index,
                language: language.clone(),
                stage: Stage::Generated,
            }),
            Err(reason) => {
                log::debug!("{pair_id}: block {idx} skipped: {reason}");
                failures.push(ParseFailure { block: idx, reason });
            }
        }
    }
    if items.is_empty() {
        return Err(GenerationError::EmptyOutput { pair_id: pair_id.to_owned(), failures: failures.len() });
    }
    Ok(GenerationBatch {
        pair_id: pair_id.to_owned(),
        items,
        raw_output: raw.to_owned(),
        parse_failures: failures.len(),
        failures,
    })
}
