//! Model evaluation on an assembled dataset: few-shot prompting, answer
//! parsing, accuracy scoring and bias-probe construction.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{DatasetRecord, DatasetSplit};
use crate::item::NUM_OPTIONS;
use crate::jsonl::{self, sha256_hex, JsonlError};
use crate::par::Exec;
use crate::providers::{llm_complete, DecodingParams, LlmProvider};
use crate::text::fold_collapse;

pub const ALLOWED_SHOTS: [usize; 4] = [0, 2, 4, 6];
pub const LETTERS: [char; NUM_OPTIONS] = ['A', 'B', 'C', 'D'];

pub const INSTRUCTION: &str = "Read the paragraph and answer the multiple-choice question. \
Reply with the letter of the correct option only.";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BenchError {
    #[error("k must be one of 0, 2, 4, 6 (got {0})")]
    BadShots(usize),
    #[error("{needed} demonstrations requested but only {available} available")]
    InsufficientDemos { needed: usize, available: usize },
    #[error("demonstration {0} overlaps the evaluation set")]
    Leakage(String),
    #[error("predictions do not cover the gold set: {missing} missing, {extra} unexpected, {duplicate} duplicated")]
    CoverageMismatch { missing: usize, extra: usize, duplicate: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotPrompt {
    pub text: String,
    pub demo_ids: Vec<String>,
}

fn block(out: &mut String, r: &DatasetRecord) {
    out.push_str(&format!("Paragraph: {}\nQuestion: {}\n", r.paragraph, r.question));
    for (l, o) in LETTERS.iter().zip(&r.options) {
        out.push_str(&format!("{l}. {o}\n"));
    }
    out.push_str("Answer:");
}

fn item_rng(seed: u64, item_id: &str) -> ChaCha8Rng {
    let digest = sha256_hex(format!("{seed}:{item_id}").as_bytes());
    ChaCha8Rng::seed_from_u64(u64::from_str_radix(&digest[..16], 16).unwrap())
}

/// Samples `k` demonstrations without replacement using a per-item stream
/// derived from `seed`, and appends the unanswered target block.
pub fn build_fewshot_prompt(item: &DatasetRecord, demos: &[DatasetRecord], k: usize, seed: u64) -> Result<FewShotPrompt, BenchError> {
    if !ALLOWED_SHOTS.contains(&k) {
        return Err(BenchError::BadShots(k));
    }
    if demos.len() < k {
        return Err(BenchError::InsufficientDemos { needed: k, available: demos.len() });
    }
    let picked = rand::seq::index::sample(&mut item_rng(seed, &item.item_id), demos.len(), k);
    let mut text = format!("{INSTRUCTION}\n\n");
    let mut demo_ids = Vec::with_capacity(k);
    for i in picked.iter() {
        let d = &demos[i];
        if d.item_id == item.item_id || d.pair_id == item.pair_id {
            return Err(BenchError::Leakage(d.item_id.clone()));
        }
        block(&mut text, d);
        text.push_str(&format!(" {}\n\n", LETTERS[d.correct_index]));
        demo_ids.push(d.item_id.clone());
    }
    block(&mut text, item);
    Ok(FewShotPrompt { text, demo_ids })
}

const ANSWER_PREFIXES: [&str; 5] = ["the correct answer is", "the answer is", "correct answer:", "final answer:", "answer:"];

fn strip_prefixes(s: &str) -> &str {
    let mut s = s.trim_start();
    loop {
        let lower = s.to_lowercase();
        match ANSWER_PREFIXES.iter().find(|p| lower.starts_with(*p)) {
            Some(p) if s.is_char_boundary(p.len()) => s = s[p.len()..].trim_start(),
            _ => return s,
        }
    }
}

/// First match among a leading option letter, a leading option number, or
/// the longest option text contained in the output. `None` is unparseable.
pub fn parse_choice(output: &str, options: &[String]) -> Option<usize> {
    let s = strip_prefixes(output).trim_start_matches(['(', '[', '*', '"', '\'']);
    let mut chars = s.chars();
    let first = chars.next();
    let next = chars.next();
    if let Some(c) = first {
        let bounded = next.is_none_or(|n| !n.is_alphanumeric());
        let strict = next.is_none_or(|n| matches!(n, ')' | '.' | ':' | ']' | '*'));
        if ('A'..='D').contains(&c) && bounded {
            return Some(c as usize - 'A' as usize);
        }
        if ('a'..='d').contains(&c) && strict {
            return Some(c as usize - 'a' as usize);
        }
        if ('1'..='4').contains(&c) && next.is_none_or(|n| !n.is_ascii_digit()) {
            return Some(c as usize - '1' as usize);
        }
    }
    let hay = fold_collapse(output);
    options
        .iter()
        .enumerate()
        .map(|(i, o)| (i, fold_collapse(o)))
        .filter(|(_, o)| !o.is_empty() && hay.contains(o.as_str()))
        .max_by_key(|(i, o)| (o.chars().count(), std::cmp::Reverse(*i)))
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub item_id: String,
    /// `None` when the model output could not be mapped to an option.
    pub chosen_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub correct: usize,
    pub total: usize,
    pub unparseable: usize,
    pub accuracy: f64,
}

pub fn score_accuracy(predictions: &[Prediction], gold: &[DatasetRecord]) -> Result<Score, BenchError> {
    let answers: BTreeMap<&str, usize> = gold.iter().map(|r| (r.item_id.as_str(), r.correct_index)).collect();
    let mut seen = BTreeSet::new();
    let (mut extra, mut duplicate) = (0, 0);
    for p in predictions {
        if !answers.contains_key(p.item_id.as_str()) {
            extra += 1;
        } else if !seen.insert(p.item_id.as_str()) {
            duplicate += 1;
        }
    }
    let missing = answers.len() - seen.len();
    if missing + extra + duplicate > 0 || answers.is_empty() {
        return Err(BenchError::CoverageMismatch { missing, extra, duplicate });
    }
    let correct = predictions.iter().filter(|p| p.chosen_index == Some(answers[p.item_id.as_str()])).count();
    let unparseable = predictions.iter().filter(|p| p.chosen_index.is_none()).count();
    let total = answers.len();
    Ok(Score { correct, total, unparseable, accuracy: correct as f64 / total as f64 })
}

/// Accuracy as a percentage with one decimal, e.g. `58.7`.
pub fn format_accuracy(accuracy: f64) -> String {
    format!("{:.1}", accuracy * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub model_id: String,
    pub k_shots: usize,
    pub seed: u64,
    pub predictions: Vec<Prediction>,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub unparseable_count: usize,
    pub provider_failures: usize,
}

impl EvalRun {
    pub fn file_name(&self) -> String {
        eval_file_name(&self.model_id, self.k_shots)
    }
}

pub fn eval_file_name(model_id: &str, k: usize) -> String {
    format!("eval_{}_{k}.json", crate::text::slug(model_id))
}

/// Checks that no train item or paragraph reaches the test side.
pub fn check_disjoint(train: &[DatasetRecord], test: &[DatasetRecord]) -> Result<(), BenchError> {
    let ids: BTreeSet<&str> = test.iter().map(|r| r.item_id.as_str()).collect();
    let pairs: BTreeSet<&str> = test.iter().map(|r| r.pair_id.as_str()).collect();
    match train.iter().find(|d| ids.contains(d.item_id.as_str()) || pairs.contains(d.pair_id.as_str())) {
        Some(d) => Err(BenchError::Leakage(d.item_id.clone())),
        None => Ok(()),
    }
}

/// Evaluates `llm` on the test side with demonstrations from the train
/// side. Provider failures count as unparseable.
pub fn run_eval(
    split: &DatasetSplit,
    llm: &dyn LlmProvider,
    k: usize,
    seed: u64,
    params: &DecodingParams,
    exec: Exec,
) -> Result<EvalRun, BenchError> {
    check_disjoint(&split.train, &split.test)?;
    let prompts = split
        .test
        .iter()
        .map(|item| build_fewshot_prompt(item, &split.train, k, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let test_ids: BTreeSet<&str> = split.test.iter().map(|r| r.item_id.as_str()).collect();
    if let Some(id) = prompts.iter().flat_map(|p| &p.demo_ids).find(|id| test_ids.contains(id.as_str())) {
        return Err(BenchError::Leakage(id.clone()));
    }
    let jobs: Vec<(&DatasetRecord, &FewShotPrompt)> = split.test.iter().zip(&prompts).collect();
    let outputs = exec.map(&jobs, |(item, p)| llm_complete(llm, &p.text, params).map(|o| parse_choice(&o, &item.options)));
    let provider_failures = outputs.iter().filter(|o| o.is_err()).count();
    let mut predictions: Vec<Prediction> = split
        .test
        .iter()
        .zip(outputs)
        .map(|(item, o)| Prediction { item_id: item.item_id.clone(), chosen_index: o.ok().flatten() })
        .collect();
    predictions.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let score = score_accuracy(&predictions, &split.test)?;
    Ok(EvalRun {
        model_id: llm.model_id().to_owned(),
        k_shots: k,
        seed,
        predictions,
        accuracy: score.accuracy,
        correct: score.correct,
        total: score.total,
        unparseable_count: score.unparseable,
        provider_failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeVariant {
    Full,
    QuestionOnly,
    ParagraphOnly,
}

impl ProbeVariant {
    pub const ALL: [ProbeVariant; 3] = [ProbeVariant::Full, ProbeVariant::QuestionOnly, ProbeVariant::ParagraphOnly];

    pub fn name(self) -> &'static str {
        match self {
            ProbeVariant::Full => "full",
            ProbeVariant::QuestionOnly => "question_only",
            ProbeVariant::ParagraphOnly => "paragraph_only",
        }
    }

    fn apply(self, r: &DatasetRecord) -> DatasetRecord {
        let mut r = r.clone();
        match self {
            ProbeVariant::Full => {}
            ProbeVariant::QuestionOnly => r.paragraph.clear(),
            ProbeVariant::ParagraphOnly => r.question.clear(),
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasProbeSet {
    pub variant: ProbeVariant,
    pub train: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

pub fn build_bias_probes(split: &DatasetSplit) -> [BiasProbeSet; 3] {
    ProbeVariant::ALL.map(|variant| BiasProbeSet {
        variant,
        train: split.train.iter().map(|r| variant.apply(r)).collect(),
        test: split.test.iter().map(|r| variant.apply(r)).collect(),
    })
}

/// Writes `probe_<variant>_{train,test}.jsonl` and returns the file names.
pub fn write_bias_probes(probes: &[BiasProbeSet], dir: &Path) -> Result<Vec<String>, JsonlError> {
    let mut names = Vec::new();
    for p in probes {
        for (side, recs) in [("train", &p.train), ("test", &p.test)] {
            let name = format!("probe_{}_{side}.jsonl", p.variant.name());
            jsonl::write_jsonl(&dir.join(&name), recs)?;
            names.push(name);
        }
    }
    Ok(names)
}
