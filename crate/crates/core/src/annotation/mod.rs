//! Human-evaluation workflow: blind batches mixing test items with flagged
//! rejects, verdict records, and agreement statistics.

mod kappa;
mod report;
mod store;

pub use kappa::{cohen_kappa, KappaError};
pub use report::{compute_agreement_report, AgreementReport, KappaMode, ReasonBreakdown};
pub use store::{AnnotationStore, RecordOutcome, StoreError};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::DatasetRecord;
use crate::item::NUM_OPTIONS;

pub const DEFAULT_FLAGGED: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenFlag {
    Kept,
    Flagged,
}

/// Server-side task. Never sent to annotators as is; see [`TaskPayload`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub batch_id: String,
    pub item: DatasetRecord,
    pub hidden_flag: HiddenFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

/// What an annotator sees: no origin flag and no answer key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskPayload {
    pub task_id: String,
    pub batch_id: String,
    pub paragraph: String,
    pub question: String,
    pub options: Vec<String>,
    pub progress: Progress,
}

impl TaskPayload {
    pub fn from_task(task: &AnnotationTask, progress: Progress) -> Self {
        TaskPayload {
            task_id: task.task_id.clone(),
            batch_id: task.batch_id.clone(),
            paragraph: task.item.paragraph.clone(),
            question: task.item.question.clone(),
            options: task.item.options.clone(),
            progress,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotationError {
    #[error("{needed} flagged samples requested but only {available} rejects available")]
    InsufficientRejects { needed: usize, available: usize },
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("invalid reasons: {0}")]
    InvalidReasons(&'static str),
    #[error("invalid record: {0}")]
    InvalidRecord(&'static str),
    #[error("batch {batch_id} incomplete: {complete} of {total} tasks have two annotators")]
    Incomplete { batch_id: String, complete: usize, total: usize },
    #[error("at least two annotators are required")]
    InsufficientAnnotators,
    #[error("unknown batch {0}")]
    UnknownBatch(String),
}

/// Samples `n_flagged` rejects, mixes them with every test item and
/// shuffles; both draws are seeded.
pub fn create_annotation_batch(
    batch_id: &str,
    test: &[DatasetRecord],
    rejects: &[DatasetRecord],
    n_flagged: usize,
    seed: u64,
) -> Result<Vec<AnnotationTask>, AnnotationError> {
    if rejects.len() < n_flagged {
        return Err(AnnotationError::InsufficientRejects { needed: n_flagged, available: rejects.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, rejects.len(), n_flagged).into_vec();
    picked.sort_unstable();
    let mut pool: Vec<(DatasetRecord, HiddenFlag)> = test.iter().map(|r| (r.clone(), HiddenFlag::Kept)).collect();
    pool.extend(picked.into_iter().map(|i| (rejects[i].clone(), HiddenFlag::Flagged)));
    pool.shuffle(&mut rng);
    Ok(pool
        .into_iter()
        .enumerate()
        .map(|(n, (item, hidden_flag))| AnnotationTask {
            task_id: format!("{batch_id}:{n:04}"),
            batch_id: batch_id.to_owned(),
            item,
            hidden_flag,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    PartiallyMissingInfo,
    BadTranslation,
    PartiallyCorrectAnswers,
    SeveralCorrectAnswers,
    DateMismatch,
    Other,
}

impl Reason {
    /// Table row order.
    pub const ALL: [Reason; 6] = [
        Reason::PartiallyMissingInfo,
        Reason::BadTranslation,
        Reason::PartiallyCorrectAnswers,
        Reason::SeveralCorrectAnswers,
        Reason::DateMismatch,
        Reason::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Reason::PartiallyMissingInfo => "Partially Missing Info",
            Reason::BadTranslation => "Bad Translation",
            Reason::PartiallyCorrectAnswers => "Partially Correct Answers",
            Reason::SeveralCorrectAnswers => "Several Correct Answers",
            Reason::DateMismatch => "Date Mismatch",
            Reason::Other => "Other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verdict {
    Chosen(usize),
    Unanswerable,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum VerdictRepr {
    Chosen(usize),
    Word(UnanswerableWord),
}

#[derive(Serialize, Deserialize)]
enum UnanswerableWord {
    #[serde(rename = "unanswerable")]
    Unanswerable,
}

impl Serialize for Verdict {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            Verdict::Chosen(i) => VerdictRepr::Chosen(i),
            Verdict::Unanswerable => VerdictRepr::Word(UnanswerableWord::Unanswerable),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Verdict {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match VerdictRepr::deserialize(d)? {
            VerdictRepr::Chosen(i) => Verdict::Chosen(i),
            VerdictRepr::Word(_) => Verdict::Unanswerable,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub task_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub reasons: Vec<Reason>,
    #[serde(default)]
    pub timestamp_ms: u64,
}

impl AnnotationRecord {
    /// Reasons are required exactly when the verdict is unanswerable.
    pub fn check(&self) -> Result<(), AnnotationError> {
        if self.annotator_id.trim().is_empty() {
            return Err(AnnotationError::InvalidRecord("annotator_id is empty"));
        }
        match self.verdict {
            Verdict::Chosen(i) if i >= NUM_OPTIONS => Err(AnnotationError::InvalidRecord("chosen index out of range")),
            Verdict::Chosen(_) if !self.reasons.is_empty() => {
                Err(AnnotationError::InvalidReasons("reasons given for an answered item"))
            }
            Verdict::Unanswerable if self.reasons.is_empty() => {
                Err(AnnotationError::InvalidReasons("unanswerable verdict needs at least one reason"))
            }
            _ => {
                let mut r = self.reasons.clone();
                r.sort();
                r.dedup();
                if r.len() != self.reasons.len() {
                    return Err(AnnotationError::InvalidReasons("duplicate reason"));
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::item::Lang;

    pub fn rec(id: &str) -> DatasetRecord {
        DatasetRecord {
            item_id: id.into(),
            pair_id: format!("p_{id}"),
            paragraph: format!("Paragraph {id}."),
            question: format!("Question {id}?"),
            options: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            correct_index: 0,
            language: Lang::new("hy").unwrap(),
        }
    }

    pub fn recs(prefix: &str, n: usize) -> Vec<DatasetRecord> {
        (0..n).map(|i| rec(&format!("{prefix}{i:03}"))).collect()
    }

    pub fn record(task: &str, who: &str, verdict: Verdict, reasons: &[Reason]) -> AnnotationRecord {
        AnnotationRecord { task_id: task.into(), annotator_id: who.into(), verdict, reasons: reasons.to_vec(), timestamp_ms: 0 }
    }

    #[test]
    fn batch_sizes() {
        let tasks = create_annotation_batch("b1", &recs("t", 247), &recs("r", 300), 100, 4).unwrap();
        assert_eq!(tasks.len(), 347);
        assert_eq!(tasks.iter().filter(|t| t.hidden_flag == HiddenFlag::Flagged).count(), 100);
        assert_eq!(tasks[0].task_id, "b1:0000");
        assert_eq!(tasks, create_annotation_batch("b1", &recs("t", 247), &recs("r", 300), 100, 4).unwrap());

        let only = create_annotation_batch("b", &recs("t", 5), &[], 0, 1).unwrap();
        assert_eq!(only.len(), 5);
        assert!(only.iter().all(|t| t.hidden_flag == HiddenFlag::Kept));
        assert_eq!(
            create_annotation_batch("b", &recs("t", 5), &recs("r", 3), 4, 1).unwrap_err(),
            AnnotationError::InsufficientRejects { needed: 4, available: 3 }
        );
    }

    #[test]
    fn payload_is_blind() {
        let tasks = create_annotation_batch("b", &recs("t", 2), &recs("r", 2), 2, 0).unwrap();
        for t in &tasks {
            let v = serde_json::to_value(TaskPayload::from_task(t, Progress { done: 0, total: 4 })).unwrap();
            let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
            assert!(!keys.iter().any(|k| k.as_str() == "hidden_flag" || k.as_str() == "correct_index"));
            assert!(!v.to_string().contains("hidden_flag"));
        }
    }

    #[test]
    fn record_invariant() {
        use Reason::*;
        assert!(record("t", "a", Verdict::Chosen(2), &[]).check().is_ok());
        assert!(record("t", "a", Verdict::Unanswerable, &[BadTranslation, DateMismatch]).check().is_ok());
        assert!(matches!(record("t", "a", Verdict::Chosen(1), &[Other]).check(), Err(AnnotationError::InvalidReasons(_))));
        assert!(matches!(record("t", "a", Verdict::Unanswerable, &[]).check(), Err(AnnotationError::InvalidReasons(_))));
        assert!(record("t", "a", Verdict::Chosen(4), &[]).check().is_err());
        assert!(record("t", "", Verdict::Chosen(0), &[]).check().is_err());
    }

    #[test]
    fn verdict_wire_format() {
        let r = record("b:0001", "ann1", Verdict::Unanswerable, &[Reason::DateMismatch]);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains(r#""verdict":"unanswerable""#));
        assert!(s.contains(r#""reasons":["date_mismatch"]"#));
        assert_eq!(serde_json::from_str::<AnnotationRecord>(&s).unwrap(), r);
        let c: AnnotationRecord = serde_json::from_str(r#"{"task_id":"x","annotator_id":"a","verdict":2}"#).unwrap();
        assert_eq!(c.verdict, Verdict::Chosen(2));
        assert!(serde_json::from_str::<AnnotationRecord>(r#"{"task_id":"x","annotator_id":"a","verdict":"maybe"}"#).is_err());
    }
}
