use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{compute_agreement_report, AgreementReport, AnnotationError, AnnotationRecord, AnnotationTask, KappaMode, Progress, TaskPayload};
use crate::jsonl::{self, JsonlError};

const RECORDS_FILE: &str = "annotations.jsonl";
const SUPERSEDED_FILE: &str = "supersessions.jsonl";
const BATCH_DIR: &str = "batches";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Io(#[from] JsonlError),
    #[error("annotation store io: {0}")]
    File(#[from] std::io::Error),
    #[error("batch id {0:?} must be nonempty ASCII letters, digits, '-' or '_'")]
    BadBatchId(String),
    #[error("batch {0} already exists with different tasks")]
    BatchConflict(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub superseded: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Supersession {
    task_id: String,
    annotator_id: String,
    previous: AnnotationRecord,
}

struct State {
    tasks: BTreeMap<String, AnnotationTask>,
    batches: BTreeMap<String, Vec<String>>,
    latest: BTreeMap<(String, String), AnnotationRecord>,
    records: File,
    superseded: File,
}

/// Append-only JSONL store. All writes go through one lock, so writes
/// to the same task are serialized.
pub struct AnnotationStore {
    dir: PathBuf,
    state: Mutex<State>,
}

fn valid_batch_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn append_line<T: Serialize>(f: &mut File, value: &T) -> Result<(), StoreError> {
    let mut line = serde_json::to_vec(value).map_err(JsonlError::Serialize)?;
    line.push(b'\n');
    f.write_all(&line)?;
    f.sync_data()?;
    Ok(())
}

impl AnnotationStore {
    /// Opens `dir`, loading every batch and replaying the record log.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir.join(BATCH_DIR))?;
        let mut tasks = BTreeMap::new();
        let mut batches = BTreeMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir.join(BATCH_DIR))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for p in paths {
            let batch: Vec<AnnotationTask> = jsonl::read_jsonl(&p)?;
            if let Some(first) = batch.first() {
                batches.insert(first.batch_id.clone(), batch.iter().map(|t| t.task_id.clone()).collect());
            }
            tasks.extend(batch.into_iter().map(|t| (t.task_id.clone(), t)));
        }
        let records_path = dir.join(RECORDS_FILE);
        let mut latest = BTreeMap::new();
        if records_path.exists() {
            for r in jsonl::read_jsonl::<AnnotationRecord>(&records_path)? {
                latest.insert((r.task_id.clone(), r.annotator_id.clone()), r);
            }
        }
        let open = |name: &str| OpenOptions::new().create(true).append(true).open(dir.join(name));
        let state = State { tasks, batches, latest, records: open(RECORDS_FILE)?, superseded: open(SUPERSEDED_FILE)? };
        Ok(AnnotationStore { dir: dir.to_owned(), state: Mutex::new(state) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Registers a batch. Re-adding identical tasks is a no-op.
    pub fn add_batch(&self, tasks: &[AnnotationTask]) -> Result<(), StoreError> {
        let Some(batch_id) = tasks.first().map(|t| t.batch_id.clone()) else {
            return Ok(());
        };
        if !valid_batch_id(&batch_id) || tasks.iter().any(|t| t.batch_id != batch_id) {
            return Err(StoreError::BadBatchId(batch_id));
        }
        let mut st = self.state.lock().unwrap();
        if let Some(existing) = st.batches.get(&batch_id) {
            let same = existing.len() == tasks.len() && tasks.iter().all(|t| st.tasks.get(&t.task_id) == Some(t));
            return if same { Ok(()) } else { Err(StoreError::BatchConflict(batch_id)) };
        }
        if let Some(t) = tasks.iter().find(|t| st.tasks.contains_key(&t.task_id)) {
            return Err(StoreError::BatchConflict(t.task_id.clone()));
        }
        jsonl::write_jsonl(&self.dir.join(BATCH_DIR).join(format!("{batch_id}.jsonl")), tasks)?;
        st.batches.insert(batch_id, tasks.iter().map(|t| t.task_id.clone()).collect());
        st.tasks.extend(tasks.iter().map(|t| (t.task_id.clone(), t.clone())));
        Ok(())
    }

    pub fn batch_ids(&self) -> Vec<String> {
        self.state.lock().unwrap().batches.keys().cloned().collect()
    }

    pub fn tasks(&self, batch_id: &str) -> Result<Vec<AnnotationTask>, StoreError> {
        let st = self.state.lock().unwrap();
        let ids = st.batches.get(batch_id).ok_or_else(|| AnnotationError::UnknownBatch(batch_id.into()))?;
        Ok(ids.iter().map(|id| st.tasks[id].clone()).collect())
    }

    /// First task in batch order this annotator has not answered, or
    /// `None` once they are done.
    pub fn next_task(&self, batch_id: &str, annotator_id: &str) -> Result<Option<TaskPayload>, StoreError> {
        let st = self.state.lock().unwrap();
        let ids = st.batches.get(batch_id).ok_or_else(|| AnnotationError::UnknownBatch(batch_id.into()))?;
        let answered = |id: &String| st.latest.contains_key(&(id.clone(), annotator_id.to_owned()));
        let done = ids.iter().filter(|id| answered(id)).count();
        let progress = Progress { done, total: ids.len() };
        Ok(ids.iter().find(|id| !answered(id)).map(|id| TaskPayload::from_task(&st.tasks[id], progress)))
    }

    /// Validates and appends a record. A repeat for the same (task,
    /// annotator) supersedes the earlier one; both stay in the log.
    pub fn record(&self, rec: AnnotationRecord) -> Result<RecordOutcome, StoreError> {
        rec.check()?;
        let mut st = self.state.lock().unwrap();
        if !st.tasks.contains_key(&rec.task_id) {
            return Err(AnnotationError::UnknownTask(rec.task_id.clone()).into());
        }
        append_line(&mut st.records, &rec)?;
        let key = (rec.task_id.clone(), rec.annotator_id.clone());
        let previous = st.latest.insert(key, rec.clone());
        if let Some(previous) = previous {
            log::info!("annotation {} by {} superseded", rec.task_id, rec.annotator_id);
            let entry = Supersession { task_id: rec.task_id, annotator_id: rec.annotator_id, previous };
            append_line(&mut st.superseded, &entry)?;
            return Ok(RecordOutcome { superseded: true });
        }
        Ok(RecordOutcome { superseded: false })
    }

    /// Latest record per (task, annotator) for the batch.
    pub fn records(&self, batch_id: &str) -> Result<Vec<AnnotationRecord>, StoreError> {
        let st = self.state.lock().unwrap();
        let ids: BTreeSet<&String> = st.batches.get(batch_id).ok_or_else(|| AnnotationError::UnknownBatch(batch_id.into()))?.iter().collect();
        Ok(st.latest.values().filter(|r| ids.contains(&r.task_id)).cloned().collect())
    }

    /// Agreement report; refused until every task has two annotators.
    pub fn report(&self, batch_id: &str, mode: KappaMode) -> Result<AgreementReport, StoreError> {
        let tasks = self.tasks(batch_id)?;
        let records = self.records(batch_id)?;
        let mut per_task: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &records {
            *per_task.entry(&r.task_id).or_default() += 1;
        }
        let complete = tasks.iter().filter(|t| per_task.get(t.task_id.as_str()).is_some_and(|&n| n >= 2)).count();
        if complete < tasks.len() {
            return Err(AnnotationError::Incomplete { batch_id: batch_id.into(), complete, total: tasks.len() }.into());
        }
        Ok(compute_agreement_report(&tasks, &records, mode)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::tests::{record, recs};
    use crate::annotation::{create_annotation_batch, Reason, Verdict};

    fn store_with_batch() -> (tempfile::TempDir, AnnotationStore, Vec<AnnotationTask>) {
        let dir = tempfile::tempdir().unwrap();
        let store = AnnotationStore::open(dir.path()).unwrap();
        let tasks = create_annotation_batch("b1", &recs("t", 3), &recs("r", 2), 1, 9).unwrap();
        store.add_batch(&tasks).unwrap();
        (dir, store, tasks)
    }

    #[test]
    fn next_task_walks_the_batch() {
        let (_d, store, tasks) = store_with_batch();
        let p = store.next_task("b1", "ann").unwrap().unwrap();
        assert_eq!((p.task_id.as_str(), p.progress), (tasks[0].task_id.as_str(), Progress { done: 0, total: 4 }));
        for t in &tasks {
            store.record(record(&t.task_id, "ann", Verdict::Chosen(0), &[])).unwrap();
        }
        assert!(store.next_task("b1", "ann").unwrap().is_none());
        assert!(store.next_task("b1", "other").unwrap().is_some());
        assert!(matches!(store.next_task("nope", "ann"), Err(StoreError::Annotation(AnnotationError::UnknownBatch(_)))));
    }

    #[test]
    fn supersession_and_replay() {
        let (dir, store, tasks) = store_with_batch();
        let id = &tasks[0].task_id;
        assert!(!store.record(record(id, "a", Verdict::Chosen(1), &[])).unwrap().superseded);
        assert!(store.record(record(id, "a", Verdict::Unanswerable, &[Reason::Other])).unwrap().superseded);
        assert!(matches!(
            store.record(record("b1:9999", "a", Verdict::Chosen(0), &[])),
            Err(StoreError::Annotation(AnnotationError::UnknownTask(_)))
        ));
        assert!(matches!(
            store.record(record(id, "a", Verdict::Chosen(1), &[Reason::Other])),
            Err(StoreError::Annotation(AnnotationError::InvalidReasons(_)))
        ));
        drop(store);
        let log = std::fs::read_to_string(dir.path().join(RECORDS_FILE)).unwrap();
        assert_eq!(log.lines().count(), 2);
        assert_eq!(std::fs::read_to_string(dir.path().join(SUPERSEDED_FILE)).unwrap().lines().count(), 1);
        let reopened = AnnotationStore::open(dir.path()).unwrap();
        let recs = reopened.records("b1").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].verdict, Verdict::Unanswerable);
        assert_eq!(reopened.tasks("b1").unwrap(), tasks);
    }

    #[test]
    fn report_waits_for_two_annotators() {
        let (_d, store, tasks) = store_with_batch();
        for t in &tasks {
            store.record(record(&t.task_id, "a", Verdict::Chosen(0), &[])).unwrap();
        }
        assert!(matches!(
            store.report("b1", KappaMode::FiveWay),
            Err(StoreError::Annotation(AnnotationError::Incomplete { complete: 0, total: 4, .. }))
        ));
        for t in &tasks {
            store.record(record(&t.task_id, "b", Verdict::Chosen(0), &[])).unwrap();
        }
        let r = store.report("b1", KappaMode::FiveWay).unwrap();
        assert_eq!(r.kappa, 1.0);
    }

    #[test]
    fn batch_registration_rules() {
        let (_d, store, tasks) = store_with_batch();
        store.add_batch(&tasks).unwrap();
        let mut other = tasks.clone();
        other.pop();
        assert!(matches!(store.add_batch(&other), Err(StoreError::BatchConflict(_))));
        let mut bad = tasks.clone();
        for t in &mut bad {
            t.batch_id = "../x".into();
        }
        assert!(matches!(store.add_batch(&bad), Err(StoreError::BadBatchId(_))));
    }
}
