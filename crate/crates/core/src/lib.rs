//! Construction, validation and benchmarking of multiple-choice QA datasets
//! for low-resource languages, starting from parallel Wikipedia intros.
//!
//! The pipeline is split into stages that hand off JSONL files:
//!
//! 1. [`mining`] selects parallel paragraph pairs by page popularity and
//!    length agreement.
//! 2. [`generation`] prompts an LLM for English MC questions and filters
//!    repeats and answers that do not occur verbatim in the paragraph.
//! 3. [`validation`] translates items and gates the translated answer by
//!    fuzzy containment and embedding similarity against the target paragraph.
//! 4. [`assembly`] balances answer positions and builds a paragraph-disjoint
//!    train/test split.
//! 5. [`diversity`], [`benchmark`] and [`annotation`] analyse the result.
//!
//! All external services live behind the traits in [`providers`]; the
//! [`pipeline`] module drives stages from a declarative config.

pub mod annotation;
pub mod assembly;
pub mod benchmark;
pub mod diversity;
pub mod generation;
pub mod item;
pub mod jsonl;
pub mod manifest;
pub mod mining;
pub mod par;
pub mod pipeline;
pub mod providers;
pub mod text;
pub mod validation;

pub use item::{Lang, McQaItem, Stage};
pub use par::Exec;
