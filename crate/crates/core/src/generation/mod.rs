//! English MC question generation from source paragraphs.
//!
//! Each paragraph is sent to the LLM with a ten-demonstration prompt; the
//! output is parsed into items, repeated questions are dropped across the
//! whole corpus, and items whose answer does not occur verbatim in their
//! paragraph are discarded.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::item::McQaItem;
use crate::mining::ParallelParagraphPair;
use crate::par::Exec;
use crate::providers::{llm_complete, DecodingParams, LlmProvider, ProviderError};

mod filter;
mod parse;
mod prompt;

pub use filter::{dedup_questions, normalize_question, verbatim_answer_filter, FilterVerdict};
pub use parse::{parse_generation, GenerationBatch, ParseFailure};
pub use prompt::{build_generation_prompt, Demonstration, PromptSpec, DEMO_DELIMITER, NUM_DEMONSTRATIONS};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerationError {
    #[error("paragraph is empty")]
    EmptyParagraph,
    #[error("no well-formed QA block in output for {pair_id} ({failures} malformed)")]
    EmptyOutput { pair_id: String, failures: usize },
    #[error("invalid prompt pack: {0}")]
    PromptPack(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Raw LLM output for one paragraph, kept for the transcript directory.
#[derive(Debug, Clone)]
pub struct Transcript {
    pub pair_id: String,
    pub prompt: String,
    pub output: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParagraphStatus {
    Ok,
    ProviderFailed,
    EmptyOutput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParagraphGeneration {
    pub pair_id: String,
    pub status: ParagraphStatus,
    pub parsed: usize,
    pub parse_failures: usize,
    pub duplicates_removed: usize,
    pub verbatim_rejected: usize,
    pub kept: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTotals {
    pub paragraphs: usize,
    pub provider_failed: usize,
    pub parsed: usize,
    pub parse_failures: usize,
    pub duplicates_removed: usize,
    pub verbatim_rejected: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub prompt_pack_version: String,
    pub model_id: String,
    pub totals: GenerationTotals,
    pub paragraphs: Vec<ParagraphGeneration>,
}

pub struct GenerationOutcome {
    pub items: Vec<McQaItem>,
    pub report: GenerationReport,
    pub transcripts: Vec<Transcript>,
}

/// Prompts the LLM for every pair, then filters the merged corpus.
pub fn generate_corpus(
    pairs: &[ParallelParagraphPair],
    spec: &PromptSpec,
    llm: &dyn LlmProvider,
    params: &DecodingParams,
    exec: Exec,
) -> Result<GenerationOutcome, GenerationError> {
    spec.validate()?;
    let mut sorted: Vec<&ParallelParagraphPair> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));

    let results = exec.map(&sorted, |pair| {
        let prompt = build_generation_prompt(spec, &pair.source_text)?;
        let output = llm_complete(llm, &prompt, params);
        let batch = match &output {
            Ok(raw) => parse_generation(raw, &pair.pair_id, &pair.source_lang),
            Err(e) => Err(GenerationError::Provider(e.clone())),
        };
        Ok::<_, GenerationError>((Transcript { pair_id: pair.pair_id.clone(), prompt, output: output.ok() }, batch))
    });

    let mut transcripts = Vec::new();
    let mut stats: BTreeMap<String, ParagraphGeneration> = BTreeMap::new();
    let mut merged = Vec::new();
    for (pair, res) in sorted.iter().zip(results) {
        let (transcript, batch) = res?;
        transcripts.push(transcript);
        let mut st = ParagraphGeneration {
            pair_id: pair.pair_id.clone(),
            status: ParagraphStatus::Ok,
            parsed: 0,
            parse_failures: 0,
            duplicates_removed: 0,
            verbatim_rejected: 0,
            kept: 0,
            error: None,
        };
        match batch {
            Ok(b) => {
                st.parsed = b.items.len();
                st.parse_failures = b.parse_failures;
                merged.extend(b.items);
            }
            Err(GenerationError::EmptyOutput { failures, .. }) => {
                st.status = ParagraphStatus::EmptyOutput;
                st.parse_failures = failures;
            }
            Err(e) => {
                st.status = ParagraphStatus::ProviderFailed;
                st.error = Some(e.to_string());
            }
        }
        stats.insert(pair.pair_id.clone(), st);
    }

    let before: Vec<String> = merged.iter().map(|i| i.item_id.clone()).collect();
    let deduped = dedup_questions(merged);
    {
        let kept: std::collections::HashSet<&str> = deduped.iter().map(|i| i.item_id.as_str()).collect();
        for id in before.iter().filter(|id| !kept.contains(id.as_str())) {
            let pair_id = id.rsplit_once("-q").map_or(id.as_str(), |(p, _)| p);
            if let Some(st) = stats.get_mut(pair_id) {
                st.duplicates_removed += 1;
            }
        }
    }

    let paragraph_of: BTreeMap<&str, &str> = sorted.iter().map(|p| (p.pair_id.as_str(), p.source_text.as_str())).collect();
    let mut items = Vec::new();
    for it in deduped {
        let st = stats.get_mut(&it.pair_id).expect("item from known pair");
        if verbatim_answer_filter(&it, paragraph_of[it.pair_id.as_str()]) == FilterVerdict::Keep {
            st.kept += 1;
            items.push(it);
        } else {
            st.verbatim_rejected += 1;
        }
    }

    let paragraphs: Vec<ParagraphGeneration> = stats.into_values().collect();
    let totals = GenerationTotals {
        paragraphs: paragraphs.len(),
        provider_failed: paragraphs.iter().filter(|p| p.status == ParagraphStatus::ProviderFailed).count(),
        parsed: paragraphs.iter().map(|p| p.parsed).sum(),
        parse_failures: paragraphs.iter().map(|p| p.parse_failures).sum(),
        duplicates_removed: paragraphs.iter().map(|p| p.duplicates_removed).sum(),
        verbatim_rejected: paragraphs.iter().map(|p| p.verbatim_rejected).sum(),
        kept: items.len(),
    };
    Ok(GenerationOutcome {
        items,
        report: GenerationReport {
            prompt_pack_version: spec.version.clone(),
            model_id: llm.model_id().to_owned(),
            totals,
            paragraphs,
        },
        transcripts,
    })
}
