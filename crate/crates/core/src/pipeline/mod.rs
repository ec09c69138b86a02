//! Stage orchestration over a workspace directory. Each stage reads its
//! upstream JSONL files, writes its own, and records content hashes in
//! `manifest.json` so later stages can detect stale inputs.

mod config;

pub use config::{
    AnnotationSettings, EmbedderSpec, LlmSpec, ProviderFactory, ProviderSpecs, RunConfig, Seeds, TranslatorSpec, WikiSpec,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotation::{create_annotation_batch, AnnotationStore, AnnotationTask};
use crate::assembly::{self, balance_answer_positions, split_train_test, Check, DatasetRecord};
use crate::benchmark::{self, build_bias_probes, eval_file_name, run_eval, score_accuracy, EvalRun, Prediction, Score, ALLOWED_SHOTS};
use crate::diversity::{type_frequency, type_frequency_of, QuestionTypeTable};
use crate::generation::{generate_corpus, PromptSpec};
use crate::item::McQaItem;
use crate::jsonl::{self, hash_file, JsonlError};
use crate::manifest::{ConfigSnapshot, PipelineManifest, StageRecord};
use crate::mining::{mine, ParallelParagraphPair, RejectReason};
use crate::par::Exec;
use crate::validation::{translate_corpus, validate_corpus, ItemFailure, Verdict};

pub const MANIFEST: &str = "manifest.json";
pub const PROVENANCE: &str = "provenance.jsonl";
pub const PARAGRAPHS: &str = "paragraphs.jsonl";
pub const MINING_REPORT: &str = "mining_report.json";
pub const GENERATED: &str = "generated.jsonl";
pub const GENERATION_REPORT: &str = "generation_report.json";
pub const TRANSCRIPTS: &str = "transcripts.jsonl";
pub const TRANSLATED: &str = "translated.jsonl";
pub const TRANSLATION_REPORT: &str = "translation_report.json";
pub const VALIDATED: &str = "validated.jsonl";
pub const VALIDATION_REPORT: &str = "validation_report.jsonl";
pub const VALIDATION_FAILURES: &str = "validation_failures.json";
pub const REJECTED: &str = "rejected.jsonl";
pub const TRAIN: &str = "dataset/train.jsonl";
pub const TEST: &str = "dataset/test.jsonl";
pub const DATASET_MANIFEST: &str = "dataset/manifest.json";
pub const DIVERSITY_JSON: &str = "reports/diversity.json";
pub const DIVERSITY_TXT: &str = "reports/diversity.txt";
pub const BENCH_DIR: &str = "bench";
pub const PROBE_DIR: &str = "bench/probes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Mine,
    Generate,
    Translate,
    Validate,
    Assemble,
    Report,
    Bench,
    Annotate,
}

impl Stage {
    /// Stages that produce the dataset, in order.
    pub const DATA: [Stage; 6] = [Stage::Mine, Stage::Generate, Stage::Translate, Stage::Validate, Stage::Assemble, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Mine => "mine",
            Stage::Generate => "generate",
            Stage::Translate => "translate",
            Stage::Validate => "validate",
            Stage::Assemble => "assemble",
            Stage::Report => "report",
            Stage::Bench => "bench",
            Stage::Annotate => "annotate",
        }
    }

    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            Stage::Mine => &[],
            Stage::Generate => &[PARAGRAPHS],
            Stage::Translate => &[GENERATED],
            Stage::Validate => &[TRANSLATED, PARAGRAPHS],
            Stage::Assemble => &[VALIDATED, PARAGRAPHS],
            Stage::Report => &[GENERATED, TRAIN, TEST],
            Stage::Bench => &[TRAIN, TEST],
            Stage::Annotate => &[TEST, REJECTED, PARAGRAPHS],
        }
    }

    fn producer_of(file: &str) -> Option<Stage> {
        match file {
            PARAGRAPHS => Some(Stage::Mine),
            GENERATED => Some(Stage::Generate),
            TRANSLATED => Some(Stage::Translate),
            VALIDATED | REJECTED => Some(Stage::Validate),
            TRAIN | TEST => Some(Stage::Assemble),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Stage::DATA.as_slice(), &[Stage::Bench, Stage::Annotate]]
            .concat()
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("stage {stage} needs {file}; run the upstream stage first")]
    MissingUpstream { stage: Stage, file: String },
    #[error("stage {stage} refuses stale input: {detail} (use --force to override)")]
    StaleUpstream { stage: Stage, detail: String },
    #[error("provider failure: {0}")]
    Provider(String),
    #[error(transparent)]
    Io(#[from] JsonlError),
    #[error("dataset verification failed: {0}")]
    VerifyFailed(String),
    #[error("{0}")]
    Other(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::ConfigInvalid(_) => 2,
            PipelineError::MissingUpstream { .. } => 3,
            PipelineError::StaleUpstream { .. } => 4,
            PipelineError::Provider(_) => 5,
            PipelineError::Io(_) => 6,
            PipelineError::VerifyFailed(_) => 7,
            PipelineError::Other(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSummary {
    pub stage: Stage,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TranscriptLine {
    pair_id: String,
    prompt: String,
    output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TranslationReport {
    input: usize,
    translated: usize,
    failures: Vec<ItemFailure>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DiversityReport {
    generated: QuestionTypeTable,
    dataset: QuestionTypeTable,
}

/// The tagger reads English wh-words, so dataset items are tagged through
/// the source question they were translated from.
fn retained_source_questions<'a>(generated: &'a [McQaItem], split: &assembly::DatasetSplit) -> Vec<&'a str> {
    let kept: BTreeSet<&str> = split.train.iter().chain(&split.test).map(|r| r.item_id.as_str()).collect();
    generated.iter().filter(|i| kept.contains(i.item_id.as_str())).map(|i| i.question.as_str()).collect()
}

pub struct Pipeline {
    cfg: RunConfig,
    exec: Exec,
    force: bool,
}

fn other(e: impl fmt::Display) -> PipelineError {
    PipelineError::Other(e.to_string())
}

impl Pipeline {
    pub fn new(cfg: RunConfig, exec: Exec) -> Self {
        Pipeline { cfg, exec, force: false }
    }

    /// Skips the stale-upstream check (missing files are still fatal).
    pub fn force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn workspace(&self) -> &Path {
        &self.cfg.workspace_dir
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.cfg.workspace_dir.join(rel)
    }

    pub fn manifest(&self) -> Result<PipelineManifest, PipelineError> {
        let p = self.path(MANIFEST);
        if p.exists() {
            Ok(jsonl::read_json(&p)?)
        } else {
            Ok(PipelineManifest::default())
        }
    }

    fn factory(&self) -> Result<ProviderFactory<'_>, PipelineError> {
        ProviderFactory::new(&self.cfg.providers, &self.path(PROVENANCE)).map_err(PipelineError::Provider)
    }

    fn snapshot(&self, m: &PipelineManifest) -> ConfigSnapshot {
        let c = &self.cfg;
        let mut snap = ConfigSnapshot {
            source_lang: c.source_lang.to_string(),
            target_lang: c.target_lang.to_string(),
            k_dm: c.mining.k_dm,
            min_views: c.mining.min_views,
            min_edits: c.mining.min_edits,
            k_fuzz: c.validation.k_fuzz,
            k_sim: c.validation.k_sim,
            gate_mode: serde_json::to_value(c.validation.gate_mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            test_fraction: c.test_fraction,
            seeds: BTreeMap::from([
                ("annotation".into(), c.seeds.annotation),
                ("balance".into(), c.seeds.balance),
                ("bench".into(), c.seeds.bench),
                ("split".into(), c.seeds.split),
            ]),
            prompt_pack_version: m.config.prompt_pack_version.clone(),
            model_ids: m.config.model_ids.clone(),
        };
        if snap.prompt_pack_version.is_empty() {
            if let Ok(spec) = PromptSpec::load(&c.prompt_pack) {
                snap.prompt_pack_version = spec.version;
            }
        }
        snap
    }

    /// Verifies that every input exists, matches the hash its producer
    /// recorded, and was produced from the current version of its own inputs.
    fn check_upstream(&self, stage: Stage, m: &PipelineManifest) -> Result<(), PipelineError> {
        for f in stage.inputs() {
            if !self.path(f).is_file() {
                return Err(PipelineError::MissingUpstream { stage, file: f.to_string() });
            }
        }
        if self.force {
            return Ok(());
        }
        let stale = |detail: String| PipelineError::StaleUpstream { stage, detail };
        let mut queue: Vec<String> = stage.inputs().iter().map(|s| s.to_string()).collect();
        let mut seen = BTreeSet::new();
        while let Some(f) = queue.pop() {
            if !seen.insert(f.clone()) {
                continue;
            }
            let recorded = m.files.get(&f).ok_or_else(|| stale(format!("{f} is not recorded in the manifest")))?;
            if self.path(&f).is_file() && &hash_file(&self.path(&f))? != recorded {
                return Err(stale(format!("{f} changed after it was written")));
            }
            let Some(producer) = Stage::producer_of(&f) else { continue };
            if let Some(rec) = m.stages.get(producer.name()) {
                for (g, h) in &rec.inputs {
                    if m.files.get(g) != Some(h) {
                        return Err(stale(format!("{f} was built from an older {g}")));
                    }
                    queue.push(g.clone());
                }
            }
        }
        Ok(())
    }

    fn begin(&self, stage: Stage) -> Result<PipelineManifest, PipelineError> {
        let m = self.manifest()?;
        self.check_upstream(stage, &m)?;
        Ok(m)
    }

    fn commit(
        &self,
        stage: Stage,
        mut m: PipelineManifest,
        outputs: &[String],
        edit: impl FnOnce(&mut PipelineManifest),
    ) -> Result<PipelineManifest, PipelineError> {
        let mut rec = StageRecord::default();
        for f in stage.inputs() {
            rec.inputs.insert(f.to_string(), hash_file(&self.path(f))?);
        }
        for f in outputs {
            let h = hash_file(&self.path(f))?;
            m.files.insert(f.clone(), h.clone());
            rec.outputs.insert(f.clone(), h);
        }
        m.stages.insert(stage.name().into(), rec);
        edit(&mut m);
        m.config = self.snapshot(&m);
        jsonl::write_json(&self.path(MANIFEST), &m)?;
        Ok(m)
    }

    pub fn run(&self, stage: Stage) -> Result<StageSummary, PipelineError> {
        std::fs::create_dir_all(self.workspace()).map_err(|e| other(format!("{}: {e}", self.workspace().display())))?;
        let lines = match stage {
            Stage::Mine => self.mine()?,
            Stage::Generate => self.generate()?,
            Stage::Translate => self.translate()?,
            Stage::Validate => self.validate()?,
            Stage::Assemble => self.assemble()?,
            Stage::Report => self.report()?,
            Stage::Bench => self.bench_all()?,
            Stage::Annotate => {
                let tasks = self.prepare_annotation()?;
                vec![format!("batch {} with {} tasks", self.cfg.annotation.batch_id, tasks.len())]
            }
        };
        Ok(StageSummary { stage, lines })
    }

    /// Runs the six data stages in order.
    pub fn run_all(&self) -> Result<Vec<StageSummary>, PipelineError> {
        Stage::DATA.iter().map(|&s| self.run(s)).collect()
    }

    fn mine(&self) -> Result<Vec<String>, PipelineError> {
        let m = self.begin(Stage::Mine)?;
        let titles = self.cfg.load_titles().map_err(PipelineError::ConfigInvalid)?;
        let wiki = self.factory()?.wiki().map_err(PipelineError::Provider)?;
        let (pairs, report) = mine(&titles, &self.cfg.source_lang, &self.cfg.target_lang, &self.cfg.mining, &*wiki, self.exec);
        let provider_failed = report.rejected.get(&RejectReason::ProviderFailed).copied().unwrap_or(0);
        if report.input_count > 0 && provider_failed == report.input_count {
            return Err(PipelineError::Provider(format!("all {provider_failed} titles failed to fetch")));
        }
        jsonl::write_jsonl(&self.path(PARAGRAPHS), &pairs)?;
        jsonl::write_json(&self.path(MINING_REPORT), &report)?;
        let n = pairs.len();
        self.commit(Stage::Mine, m, &[PARAGRAPHS.into(), MINING_REPORT.into()], |m| {
            m.counts = Default::default();
            m.counts.mined = Some(n);
        })?;
        Ok(vec![format!("{} titles, {} accepted, {} rejected", report.input_count, report.accepted, report.rejected_total())])
    }

    /// First `limit` members of a source-language category, in the order
    /// the wiki lists them; input for a titles file.
    pub fn sample_titles(&self, category: &str, limit: usize) -> Result<Vec<String>, PipelineError> {
        std::fs::create_dir_all(self.workspace()).map_err(|e| other(format!("{}: {e}", self.workspace().display())))?;
        let wiki = self.factory()?.wiki().map_err(PipelineError::Provider)?;
        wiki.category_members(category, &self.cfg.source_lang, limit).map_err(|e| PipelineError::Provider(e.to_string()))
    }

    fn read_pairs(&self) -> Result<Vec<ParallelParagraphPair>, PipelineError> {
        Ok(jsonl::read_jsonl(&self.path(PARAGRAPHS))?)
    }

    fn generate(&self) -> Result<Vec<String>, PipelineError> {
        let m = self.begin(Stage::Generate)?;
        let pairs = self.read_pairs()?;
        let spec = PromptSpec::load(&self.cfg.prompt_pack).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        let llm = self.factory()?.llm().map_err(PipelineError::Provider)?;
        let out = generate_corpus(&pairs, &spec, &*llm, &self.cfg.decoding, self.exec).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        let t = &out.report.totals;
        if t.paragraphs > 0 && t.provider_failed == t.paragraphs {
            return Err(PipelineError::Provider(format!("LLM failed on all {} paragraphs", t.paragraphs)));
        }
        let transcripts: Vec<TranscriptLine> = out
            .transcripts
            .iter()
            .map(|t| TranscriptLine { pair_id: t.pair_id.clone(), prompt: t.prompt.clone(), output: t.output.clone() })
            .collect();
        jsonl::write_jsonl(&self.path(GENERATED), &out.items)?;
        jsonl::write_json(&self.path(GENERATION_REPORT), &out.report)?;
        jsonl::write_jsonl(&self.path(TRANSCRIPTS), &transcripts)?;
        let (parsed, deduped, kept) = (t.parsed, t.parsed - t.duplicates_removed, t.kept);
        let model = llm.model_id().to_owned();
        let outputs = [GENERATED.into(), GENERATION_REPORT.into(), TRANSCRIPTS.into()];
        self.commit(Stage::Generate, m, &outputs, |m| {
            m.counts.generated = Some(parsed);
            m.counts.deduped = Some(deduped);
            m.counts.verbatim_kept = Some(kept);
            m.config.prompt_pack_version = spec.version.clone();
            m.config.model_ids.insert("generation".into(), model);
        })?;
        Ok(vec![format!(
            "{} paragraphs, {parsed} parsed, {} duplicates, {} verbatim rejects, {kept} kept",
            t.paragraphs, t.duplicates_removed, t.verbatim_rejected
        )])
    }

    fn translate(&self) -> Result<Vec<String>, PipelineError> {
        let m = self.begin(Stage::Translate)?;
        let items: Vec<McQaItem> = jsonl::read_jsonl(&self.path(GENERATED))?;
        let tr = self.factory()?.translator().map_err(PipelineError::Provider)?;
        let (ok, failures) = translate_corpus(&items, &self.cfg.target_lang, &*tr, self.exec);
        if !items.is_empty() && ok.is_empty() && failures.iter().all(|f| f.provider_failed) {
            return Err(PipelineError::Provider(format!("translator failed on all {} items", items.len())));
        }
        jsonl::write_jsonl(&self.path(TRANSLATED), &ok)?;
        let report = TranslationReport { input: items.len(), translated: ok.len(), failures };
        jsonl::write_json(&self.path(TRANSLATION_REPORT), &report)?;
        let n = ok.len();
        self.commit(Stage::Translate, m, &[TRANSLATED.into(), TRANSLATION_REPORT.into()], |m| m.counts.translated = Some(n))?;
        Ok(vec![format!("{} items, {n} translated, {} failed", report.input, report.failures.len())])
    }

    fn target_paragraphs(&self) -> Result<BTreeMap<String, String>, PipelineError> {
        Ok(self.read_pairs()?.into_iter().map(|p| (p.pair_id, p.target_text)).collect())
    }

    fn validate(&self) -> Result<Vec<String>, PipelineError> {
        let m = self.begin(Stage::Validate)?;
        let items: Vec<McQaItem> = jsonl::read_jsonl(&self.path(TRANSLATED))?;
        let paragraphs = self.target_paragraphs()?;
        let emb = self.factory()?.embedder().map_err(PipelineError::Provider)?;
        let out = validate_corpus(&items, &paragraphs, &self.cfg.validation, &*emb, self.exec);
        if !items.is_empty() && out.reports.is_empty() && out.failures.iter().all(|f| f.provider_failed) {
            return Err(PipelineError::Provider(format!("embedder failed on all {} items", items.len())));
        }
        let rejected_ids: BTreeSet<&str> =
            out.reports.iter().filter(|r| r.verdict != Verdict::Kept).map(|r| r.item_id.as_str()).collect();
        let mut rejected: Vec<&McQaItem> = items.iter().filter(|i| rejected_ids.contains(i.item_id.as_str())).collect();
        rejected.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        jsonl::write_jsonl(&self.path(VALIDATED), &out.kept)?;
        jsonl::write_jsonl(&self.path(VALIDATION_REPORT), &out.reports)?;
        jsonl::write_json(&self.path(VALIDATION_FAILURES), &out.failures)?;
        jsonl::write_jsonl(&self.path(REJECTED), &rejected)?;
        let n = out.kept.len();
        let model = emb.model_id().to_owned();
        let outputs = [VALIDATED.into(), VALIDATION_REPORT.into(), VALIDATION_FAILURES.into(), REJECTED.into()];
        self.commit(Stage::Validate, m, &outputs, |m| {
            m.counts.validated = Some(n);
            m.config.model_ids.insert("embedding".into(), model);
        })?;
        Ok(vec![format!("{} scored, {n} kept, {} rejected, {} failed", out.reports.len(), rejected.len(), out.failures.len())])
    }

    fn to_records(&self, items: &[McQaItem], paragraphs: &BTreeMap<String, String>) -> Result<Vec<DatasetRecord>, PipelineError> {
        items
            .iter()
            .map(|i| {
                let p = paragraphs.get(&i.pair_id).ok_or_else(|| other(format!("item {} references unknown pair {}", i.item_id, i.pair_id)))?;
                Ok(DatasetRecord::from_item(i, p))
            })
            .collect()
    }

    fn assemble(&self) -> Result<Vec<String>, PipelineError> {
        let m = self.begin(Stage::Assemble)?;
        let mut items: Vec<McQaItem> = jsonl::read_jsonl(&self.path(VALIDATED))?;
        items.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        let items = balance_answer_positions(items, self.cfg.seeds.balance).map_err(other)?;
        let records = self.to_records(&items, &self.target_paragraphs()?)?;
        let mut split = split_train_test(records, self.cfg.test_fraction, self.cfg.seeds.split).map_err(other)?;
        let (n_train, n_test) = (split.train.len(), split.test.len());
        split.manifest = PipelineManifest { config: self.snapshot(&m), counts: m.counts.clone(), ..Default::default() };
        split.manifest.files = m.files.clone();
        assembly::write_dataset(&split, &self.path("dataset"))?;
        self.commit(Stage::Assemble, m, &[TRAIN.into(), TEST.into(), DATASET_MANIFEST.into()], |m| {
            m.counts.train = Some(n_train);
            m.counts.test = Some(n_test);
            m.split_seed = Some(self.cfg.seeds.split);
        })?;
        Ok(vec![format!("{n_train} train, {n_test} test")])
    }

    pub fn read_split(&self) -> Result<assembly::DatasetSplit, PipelineError> {
        Ok(assembly::read_dataset(&self.path("dataset"))?)
    }

    fn report(&self) -> Result<Vec<String>, PipelineError> {
        let m = self.begin(Stage::Report)?;
        let generated: Vec<McQaItem> = jsonl::read_jsonl(&self.path(GENERATED))?;
        let split = self.read_split()?;
        let report = DiversityReport {
            generated: type_frequency(&generated),
            dataset: type_frequency_of(retained_source_questions(&generated, &split)),
        };
        jsonl::write_json(&self.path(DIVERSITY_JSON), &report)?;
        let text = format!("generated ({})\n{}\ndataset ({})\n{}", report.generated.total(), report.generated.to_text(), report.dataset.total(), report.dataset.to_text());
        jsonl::write_atomic(&self.path(DIVERSITY_TXT), text.as_bytes())?;
        self.commit(Stage::Report, m, &[DIVERSITY_JSON.into(), DIVERSITY_TXT.into()], |_| {})?;
        Ok(text.lines().map(String::from).collect())
    }

    /// Evaluates one configured bench model at `k` shots.
    pub fn bench_run(&self, model: &str, k: usize, seed: Option<u64>) -> Result<EvalRun, PipelineError> {
        let m = self.begin(Stage::Bench)?;
        let spec = self
            .cfg
            .providers
            .bench
            .get(model)
            .ok_or_else(|| PipelineError::ConfigInvalid(format!("no bench model named {model:?}")))?;
        let llm = self.factory()?.llm_from(spec).map_err(PipelineError::Provider)?;
        let split = self.read_split()?;
        let seed = seed.unwrap_or(self.cfg.seeds.bench);
        let mut run = run_eval(&split, &*llm, k, seed, &self.cfg.decoding, self.exec).map_err(other)?;
        run.model_id = model.to_owned();
        let rel = format!("{BENCH_DIR}/{}", eval_file_name(model, k));
        jsonl::write_json(&self.path(&rel), &run)?;
        let id = llm.model_id().to_owned();
        self.commit(Stage::Bench, m, &[rel], |m| {
            m.config.model_ids.insert(format!("bench.{model}"), id);
        })?;
        Ok(run)
    }

    pub fn bench_probes(&self) -> Result<Vec<String>, PipelineError> {
        let m = self.begin(Stage::Bench)?;
        let probes = build_bias_probes(&self.read_split()?);
        let names = benchmark::write_bias_probes(&probes, &self.path(PROBE_DIR))?;
        let rel: Vec<String> = names.iter().map(|n| format!("{PROBE_DIR}/{n}")).collect();
        self.commit(Stage::Bench, m, &rel, |_| {})?;
        Ok(rel)
    }

    /// Scores externally produced predictions against the test split.
    pub fn bench_score(&self, predictions: &Path) -> Result<Score, PipelineError> {
        let preds: Vec<Prediction> = jsonl::read_jsonl(predictions)?;
        let split = self.read_split()?;
        score_accuracy(&preds, &split.test).map_err(other)
    }

    fn bench_all(&self) -> Result<Vec<String>, PipelineError> {
        let mut lines = Vec::new();
        let train = self.read_split()?.train.len();
        for model in self.cfg.providers.bench.keys() {
            for k in ALLOWED_SHOTS.into_iter().filter(|&k| k <= train) {
                let run = self.bench_run(model, k, None)?;
                lines.push(format!("{model} k={k}: {} ({}/{})", benchmark::format_accuracy(run.accuracy), run.correct, run.total));
            }
        }
        lines.extend(self.bench_probes()?);
        Ok(lines)
    }

    /// Builds the annotation batch from the test split and validation
    /// rejects and registers it with the store.
    pub fn prepare_annotation(&self) -> Result<Vec<AnnotationTask>, PipelineError> {
        self.begin(Stage::Annotate)?;
        let split = self.read_split()?;
        let rejected: Vec<McQaItem> = jsonl::read_jsonl(&self.path(REJECTED))?;
        let rejects = self.to_records(&rejected, &self.target_paragraphs()?)?;
        let a = &self.cfg.annotation;
        let tasks = create_annotation_batch(&a.batch_id, &split.test, &rejects, a.n_flagged, self.cfg.seeds.annotation).map_err(other)?;
        let store = AnnotationStore::open(&a.data_dir).map_err(other)?;
        store.add_batch(&tasks).map_err(other)?;
        Ok(tasks)
    }

    /// Re-checks the emitted dataset and every recorded stage file hash.
    pub fn verify(&self) -> Result<Vec<Check>, PipelineError> {
        let dir = self.path("dataset");
        if !dir.join(assembly::MANIFEST_FILE).is_file() {
            return Err(PipelineError::MissingUpstream { stage: Stage::Assemble, file: DATASET_MANIFEST.into() });
        }
        let mut checks = assembly::verify_dataset(&dir)?;
        let m = self.manifest()?;
        for (f, h) in &m.files {
            let p = self.path(f);
            let actual = if p.is_file() { hash_file(&p)? } else { String::new() };
            checks.push(Check { name: format!("manifest:{f}"), passed: &actual == h, detail: format!("recorded {h:.12}") });
        }
        checks.push(Check {
            name: "manifest_counts_weakly_decreasing".into(),
            passed: m.counts.is_weakly_decreasing(),
            detail: format!("{:?}", m.counts),
        });
        Ok(checks)
    }
}
