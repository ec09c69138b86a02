//! Final dataset assembly: answer-position balancing, paragraph-disjoint
//! train/test split, JSONL output and invariant verification.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::item::{check_fields, Lang, McQaItem, NUM_OPTIONS};
use crate::jsonl::{self, JsonlError};
use crate::manifest::PipelineManifest;

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One line of `train.jsonl` / `test.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub item_id: String,
    pub pair_id: String,
    pub paragraph: String,
    pub question: String,
    pub options: Vec<String>,
    pub correct_index: usize,
    pub language: Lang,
}

impl DatasetRecord {
    pub fn from_item(item: &McQaItem, paragraph: &str) -> Self {
        DatasetRecord {
            item_id: item.item_id.clone(),
            pair_id: item.pair_id.clone(),
            paragraph: paragraph.to_owned(),
            question: item.question.clone(),
            options: item.options.clone(),
            correct_index: item.correct_index,
            language: item.language.clone(),
        }
    }
}

/// Anything that belongs to a source paragraph.
pub trait Grouped {
    fn group_key(&self) -> &str;
}

impl Grouped for McQaItem {
    fn group_key(&self) -> &str {
        &self.pair_id
    }
}

impl Grouped for DatasetRecord {
    fn group_key(&self) -> &str {
        &self.pair_id
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssemblyError {
    #[error("cannot build a paragraph-disjoint split from a single paragraph")]
    SingleParagraphCorpus,
    #[error("cannot split an empty corpus")]
    EmptyCorpus,
    #[error("test fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("item {0} lacks 4 distinct options")]
    InvalidItem(String),
}

/// Moves each item's correct option to a target position drawn round-robin
/// from a seeded permutation of `0..4`, so position counts differ by at most one.
pub fn balance_answer_positions(items: Vec<McQaItem>, seed: u64) -> Result<Vec<McQaItem>, AssemblyError> {
    let mut perm: Vec<usize> = (0..NUM_OPTIONS).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    items
        .into_iter()
        .enumerate()
        .map(|(i, mut it)| {
            it.check().map_err(|_| AssemblyError::InvalidItem(it.item_id.clone()))?;
            let target = perm[i % NUM_OPTIONS];
            it.options.swap(it.correct_index, target);
            it.correct_index = target;
            Ok(it)
        })
        .collect()
}

pub fn position_counts<'a>(correct: impl IntoIterator<Item = &'a usize>) -> [usize; NUM_OPTIONS] {
    let mut c = [0; NUM_OPTIONS];
    for &i in correct {
        c[i] += 1;
    }
    c
}

/// Splits whole groups: groups are shuffled with `seed`, then each is added
/// to the test side when that moves the test size strictly closer to
/// `round(fraction * n)`. Returns `(train, test)` in input order.
pub fn partition_groups<T: Grouped + Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), AssemblyError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(AssemblyError::BadFraction(fraction));
    }
    if items.is_empty() {
        return Err(AssemblyError::EmptyCorpus);
    }
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for it in items {
        *sizes.entry(it.group_key()).or_default() += 1;
    }
    if sizes.len() < 2 {
        return Err(AssemblyError::SingleParagraphCorpus);
    }
    let mut groups: Vec<(&str, usize)> = sizes.into_iter().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let target = (fraction * items.len() as f64).round() as i64;
    let mut test_size: i64 = 0;
    let mut test_groups = BTreeSet::new();
    for (g, n) in groups {
        let n = n as i64;
        if (test_size + n - target).abs() < (test_size - target).abs() {
            test_size += n;
            test_groups.insert(g.to_owned());
        }
    }
    let (test, train): (Vec<T>, Vec<T>) = items.iter().cloned().partition(|it| test_groups.contains(it.group_key()));
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
    pub seed: u64,
    pub manifest: PipelineManifest,
}

pub fn split_train_test(records: Vec<DatasetRecord>, test_fraction: f64, seed: u64) -> Result<DatasetSplit, AssemblyError> {
    let (train, test) = partition_groups(&records, test_fraction, seed)?;
    let manifest = PipelineManifest { split_seed: Some(seed), ..Default::default() };
    Ok(DatasetSplit { train, test, seed, manifest })
}

/// Writes `train.jsonl`, `test.jsonl` and `manifest.json` (which records
/// both files' hashes) and returns the split as written.
pub fn write_dataset(split: &DatasetSplit, out_dir: &Path) -> Result<DatasetSplit, JsonlError> {
    let mut written = split.clone();
    written.manifest.split_seed = Some(split.seed);
    written.manifest.counts.train = Some(split.train.len());
    written.manifest.counts.test = Some(split.test.len());
    let h_train = jsonl::write_jsonl(&out_dir.join(TRAIN_FILE), &split.train)?;
    let h_test = jsonl::write_jsonl(&out_dir.join(TEST_FILE), &split.test)?;
    written.manifest.files.insert(TRAIN_FILE.into(), h_train);
    written.manifest.files.insert(TEST_FILE.into(), h_test);
    jsonl::write_json(&out_dir.join(MANIFEST_FILE), &written.manifest)?;
    Ok(written)
}

pub fn read_dataset(dir: &Path) -> Result<DatasetSplit, JsonlError> {
    let manifest: PipelineManifest = jsonl::read_json(&dir.join(MANIFEST_FILE))?;
    Ok(DatasetSplit {
        train: jsonl::read_jsonl(&dir.join(TRAIN_FILE))?,
        test: jsonl::read_jsonl(&dir.join(TEST_FILE))?,
        seed: manifest.split_seed.unwrap_or_default(),
        manifest,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Re-checks every dataset invariant on an emitted dataset directory.
pub fn verify_dataset(dir: &Path) -> Result<Vec<Check>, JsonlError> {
    let split = read_dataset(dir)?;
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| checks.push(Check { name: name.into(), passed, detail });

    for (file, _) in [(TRAIN_FILE, ()), (TEST_FILE, ())] {
        let actual = jsonl::hash_file(&dir.join(file))?;
        let recorded = split.manifest.files.get(file).cloned().unwrap_or_default();
        push(&format!("hash:{file}"), actual == recorded, format!("recorded {recorded:.12} actual {actual:.12}"));
    }

    let train_groups: BTreeSet<&str> = split.train.iter().map(|r| r.pair_id.as_str()).collect();
    let leaked: Vec<&str> = split.test.iter().map(|r| r.pair_id.as_str()).filter(|p| train_groups.contains(p)).collect();
    push("disjoint_paragraphs", leaked.is_empty(), format!("{} shared pair_ids", leaked.len()));

    let all = split.train.iter().chain(&split.test);
    let invalid: Vec<&str> = all
        .clone()
        .filter(|r| check_fields(&r.question, &r.options, r.correct_index).is_err() || r.paragraph.trim().is_empty())
        .map(|r| r.item_id.as_str())
        .collect();
    push("records_valid", invalid.is_empty(), format!("{} invalid records", invalid.len()));

    let ids: BTreeSet<&str> = all.clone().map(|r| r.item_id.as_str()).collect();
    let n = split.train.len() + split.test.len();
    push("unique_item_ids", ids.len() == n, format!("{} ids for {n} records", ids.len()));

    let counts = position_counts(all.clone().filter(|r| r.correct_index < NUM_OPTIONS).map(|r| &r.correct_index));
    let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
    push("balanced_positions", spread <= 1, format!("position counts {counts:?}"));

    push(
        "stage_counts_weakly_decreasing",
        split.manifest.counts.is_weakly_decreasing(),
        format!("{:?}", split.manifest.counts),
    );
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::item::Stage;
    use proptest::prelude::*;

    fn item(i: usize, pair: &str) -> McQaItem {
        McQaItem {
            item_id: format!("{pair}-q{i:02}"),
            pair_id: pair.into(),
            question: format!("Question {i}?"),
            options: vec![format!("right {i}"), format!("w1 {i}"), format!("w2 {i}"), format!("w3 {i}")],
            correct_index: i % 2,
            language: Lang::new("hy").unwrap(),
            stage: Stage::Validated,
        }
    }

    fn record(i: usize, pair: &str) -> DatasetRecord {
        DatasetRecord::from_item(&item(i, pair), "Paragraph.")
    }

    #[test]
    fn eight_items_use_each_position_twice() {
        let out = balance_answer_positions((0..8).map(|i| item(i, "p")).collect(), 3).unwrap();
        assert_eq!(position_counts(out.iter().map(|i| &i.correct_index)), [2, 2, 2, 2]);
    }

    #[test]
    fn n_1235_counts() {
        let items: Vec<McQaItem> = (0..1235).map(|i| item(i, "p")).collect();
        for seed in [0, 1, 42] {
            let out = balance_answer_positions(items.clone(), seed).unwrap();
            let mut c = position_counts(out.iter().map(|i| &i.correct_index)).to_vec();
            c.sort_unstable();
            assert_eq!(c, vec![308, 309, 309, 309]);
        }
    }

    #[test]
    fn balancing_is_deterministic_and_preserves_answers() {
        let items: Vec<McQaItem> = (0..37).map(|i| item(i, "p")).collect();
        let a = balance_answer_positions(items.clone(), 9).unwrap();
        assert_eq!(a, balance_answer_positions(items.clone(), 9).unwrap());
        for (before, after) in items.iter().zip(&a) {
            assert_eq!(before.answer(), after.answer());
            let mut x = before.options.clone();
            let mut y = after.options.clone();
            x.sort();
            y.sort();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn twenty_items_five_paragraphs() {
        let recs: Vec<DatasetRecord> = (0..20).map(|i| record(i, &format!("p{}", i / 4))).collect();
        for seed in 0..20 {
            let split = split_train_test(recs.clone(), 0.2, seed).unwrap();
            assert_eq!(split.test.len(), 4);
            assert_eq!(split.train.len(), 16);
            let g: BTreeSet<&str> = split.test.iter().map(|r| r.pair_id.as_str()).collect();
            assert_eq!(g.len(), 1);
        }
    }

    #[test]
    fn split_errors() {
        let recs: Vec<DatasetRecord> = (0..5).map(|i| record(i, "only")).collect();
        assert_eq!(split_train_test(recs.clone(), 0.2, 1).unwrap_err(), AssemblyError::SingleParagraphCorpus);
        assert_eq!(split_train_test(vec![], 0.2, 1).unwrap_err(), AssemblyError::EmptyCorpus);
        assert_eq!(split_train_test(recs, 1.0, 1).unwrap_err(), AssemblyError::BadFraction(1.0));
    }

    #[test]
    fn write_read_round_trip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let items: Vec<McQaItem> = (0..40).map(|i| item(i, &format!("p{}", i / 5))).collect();
        let items = balance_answer_positions(items, 5).unwrap();
        let recs = items.iter().map(|i| DatasetRecord::from_item(i, "Paragraph.")).collect();
        let split = split_train_test(recs, 0.2, 11).unwrap();
        let written = write_dataset(&split, dir.path()).unwrap();
        assert_eq!(written.train, split.train);
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, written);

        let bytes = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
        let before = (bytes(TRAIN_FILE), bytes(TEST_FILE), bytes(MANIFEST_FILE));
        write_dataset(&back, dir.path()).unwrap();
        assert_eq!(before, (bytes(TRAIN_FILE), bytes(TEST_FILE), bytes(MANIFEST_FILE)));

        let checks = verify_dataset(dir.path()).unwrap();
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");

        let mut changed = back.clone();
        changed.test[0].question.push('!');
        let rewritten = write_dataset(&changed, dir.path()).unwrap();
        assert_ne!(rewritten.manifest.files[TEST_FILE], back.manifest.files[TEST_FILE]);
        assert_eq!(rewritten.manifest.files[TRAIN_FILE], back.manifest.files[TRAIN_FILE]);
    }

    #[test]
    fn verify_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<DatasetRecord> = (0..8).map(|i| record(i, &format!("p{}", i / 2))).collect();
        let split = split_train_test(recs, 0.25, 0).unwrap();
        write_dataset(&split, dir.path()).unwrap();
        let mut leaked = split.test[0].clone();
        leaked.item_id = "extra".into();
        let mut train = split.train.clone();
        train.push(leaked);
        jsonl::write_jsonl(&dir.path().join(TRAIN_FILE), &train).unwrap();
        let failed: Vec<String> =
            verify_dataset(dir.path()).unwrap().into_iter().filter(|c| !c.passed).map(|c| c.name).collect();
        assert!(failed.contains(&"hash:train.jsonl".to_string()));
        assert!(failed.contains(&"disjoint_paragraphs".to_string()));
    }

    proptest! {
        #[test]
        fn balance_spread_at_most_one(n in 1usize..300, seed in any::<u64>()) {
            let out = balance_answer_positions((0..n).map(|i| item(i, "p")).collect(), seed).unwrap();
            let c = position_counts(out.iter().map(|i| &i.correct_index));
            prop_assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
        }

        #[test]
        fn split_disjoint_and_near_target(sizes in proptest::collection::vec(1usize..12, 2..40), seed in any::<u64>()) {
            let mut recs = Vec::new();
            for (g, &n) in sizes.iter().enumerate() {
                for i in 0..n {
                    recs.push(record(i, &format!("g{g:03}")));
                }
            }
            let n = recs.len();
            let split = split_train_test(recs, 0.2, seed).unwrap();
            let tr: BTreeSet<&str> = split.train.iter().map(|r| r.pair_id.as_str()).collect();
            prop_assert!(split.test.iter().all(|r| !tr.contains(r.pair_id.as_str())));
            prop_assert_eq!(split.train.len() + split.test.len(), n);
            let target = (0.2 * n as f64).round() as i64;
            let max_g = *sizes.iter().max().unwrap() as i64;
            prop_assert!((split.test.len() as i64 - target).abs() <= (max_g - 1).max(0));
        }
    }
}
