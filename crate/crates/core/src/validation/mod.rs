//! Translation of generated items and the two-gate validation of the
//! translated answer against the target-language paragraph.
//!
//! An item is kept when its answer is fuzzily contained in the paragraph
//! ([`fuzzy_substring_score`] > `k_fuzz`) and is semantically related to it
//! (embedding cosine > `k_sim`). `GateMode::Any` switches to a disjunctive rule.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::item::{ItemError, Lang, McQaItem, Stage};
use crate::par::Exec;
use crate::providers::{cosine, embed_text, translate_text, EmbeddingVector, Embedder, ProviderError, Translator};

mod fuzzy;

pub use fuzzy::{fuzzy_substring_score, infix_distance, EmptyNeedle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Both scores must exceed their thresholds.
    #[default]
    All,
    /// Either score exceeding its threshold suffices.
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub k_fuzz: f64,
    pub k_sim: f64,
    pub gate_mode: GateMode,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { k_fuzz: 0.8, k_sim: 0.5, gate_mode: GateMode::All }
    }
}

impl ValidationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.k_fuzz) {
            return Err(format!("k_fuzz {} outside [0, 1]", self.k_fuzz));
        }
        if !(-1.0..=1.0).contains(&self.k_sim) {
            return Err(format!("k_sim {} outside [-1, 1]", self.k_sim));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Kept,
    RejectedFuzzy,
    RejectedSimilarity,
    RejectedBoth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub item_id: String,
    pub pair_id: String,
    pub fuzzy_score: f64,
    pub similarity: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("item {0} is not at the expected stage")]
    WrongStage(String),
    #[error(transparent)]
    EmptyNeedle(#[from] EmptyNeedle),
    #[error("embedding is all zeros")]
    ZeroVector,
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("translation produced an invalid item: {0}")]
    InvalidTranslation(#[from] ItemError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Applies the gate rule to precomputed scores.
pub fn decide(fuzzy: f64, similarity: f64, cfg: &ValidationConfig) -> Verdict {
    let f_ok = fuzzy > cfg.k_fuzz;
    let s_ok = similarity > cfg.k_sim;
    match cfg.gate_mode {
        GateMode::All => match (f_ok, s_ok) {
            (true, true) => Verdict::Kept,
            (false, true) => Verdict::RejectedFuzzy,
            (true, false) => Verdict::RejectedSimilarity,
            (false, false) => Verdict::RejectedBoth,
        },
        GateMode::Any if f_ok || s_ok => Verdict::Kept,
        GateMode::Any => Verdict::RejectedBoth,
    }
}

/// Translates the question and each option independently; `correct_index` is unchanged.
pub fn translate_item(item: &McQaItem, target: &Lang, tr: &dyn Translator) -> Result<McQaItem, ValidationError> {
    if item.stage != Stage::Generated {
        return Err(ValidationError::WrongStage(item.item_id.clone()));
    }
    let source = &item.language;
    let question = translate_text(tr, &item.question, source, target)?;
    let options = item
        .options
        .iter()
        .map(|o| translate_text(tr, o, source, target))
        .collect::<Result<Vec<_>, _>>()?;
    let out = McQaItem {
        question,
        options,
        language: target.clone(),
        stage: Stage::Translated,
        ..item.clone()
    };
    out.check()?;
    Ok(out)
}

fn cos_of(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, ValidationError> {
    if a.dim() != b.dim() {
        return Err(ValidationError::DimensionMismatch(a.dim(), b.dim()));
    }
    cosine(&a.values, &b.values).ok_or(ValidationError::ZeroVector)
}

/// Cosine of the two texts' embeddings.
pub fn semantic_similarity(emb: &dyn Embedder, answer: &str, paragraph: &str) -> Result<f64, ValidationError> {
    let a = embed_text(emb, answer)?;
    let p = embed_text(emb, paragraph)?;
    cos_of(&a, &p)
}

pub fn validate_item(
    item: &McQaItem,
    paragraph: &str,
    cfg: &ValidationConfig,
    emb: &dyn Embedder,
) -> Result<ValidationReport, ValidationError> {
    let p = embed_text(emb, paragraph)?;
    validate_with_paragraph_embedding(item, paragraph, &p, cfg, emb)
}

fn validate_with_paragraph_embedding(
    item: &McQaItem,
    paragraph: &str,
    paragraph_emb: &EmbeddingVector,
    cfg: &ValidationConfig,
    emb: &dyn Embedder,
) -> Result<ValidationReport, ValidationError> {
    if item.stage != Stage::Translated {
        return Err(ValidationError::WrongStage(item.item_id.clone()));
    }
    let answer = item.answer();
    let fuzzy_score = fuzzy_substring_score(answer, paragraph)?;
    let similarity = cos_of(&embed_text(emb, answer)?, paragraph_emb)?;
    Ok(ValidationReport {
        item_id: item.item_id.clone(),
        pair_id: item.pair_id.clone(),
        fuzzy_score,
        similarity,
        verdict: decide(fuzzy_score, similarity, cfg),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub item_id: String,
    pub provider_failed: bool,
    pub error: String,
}

impl ItemFailure {
    fn new(item_id: &str, e: &ValidationError) -> Self {
        let provider_failed = matches!(e, ValidationError::Provider(p) if p.is_provider_failure());
        ItemFailure { item_id: item_id.to_owned(), provider_failed, error: e.to_string() }
    }
}

/// Translates every item. Failed items are reported and left out.
pub fn translate_corpus(
    items: &[McQaItem],
    target: &Lang,
    tr: &dyn Translator,
    exec: Exec,
) -> (Vec<McQaItem>, Vec<ItemFailure>) {
    let results = exec.map(items, |it| translate_item(it, target, tr));
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (it, r) in items.iter().zip(results) {
        match r {
            Ok(t) => ok.push(t),
            Err(e) => failed.push(ItemFailure::new(&it.item_id, &e)),
        }
    }
    (ok, failed)
}

pub struct ValidationOutcome {
    /// One report per scored item, in `item_id` order, rejected ones included.
    pub reports: Vec<ValidationReport>,
    /// Kept items, `stage = validated`, in `item_id` order.
    pub kept: Vec<McQaItem>,
    pub failures: Vec<ItemFailure>,
}

/// Scores every translated item against its pair's target paragraph.
pub fn validate_corpus(
    items: &[McQaItem],
    paragraphs: &BTreeMap<String, String>,
    cfg: &ValidationConfig,
    emb: &dyn Embedder,
    exec: Exec,
) -> ValidationOutcome {
    let pair_ids: Vec<&String> = paragraphs.keys().collect();
    let para_embs: HashMap<&str, Result<EmbeddingVector, ValidationError>> = pair_ids
        .iter()
        .zip(exec.map(&pair_ids, |id| embed_text(emb, &paragraphs[*id]).map_err(ValidationError::from)))
        .map(|(id, e)| (id.as_str(), e))
        .collect();

    let mut sorted: Vec<&McQaItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let results = exec.map(&sorted, |it| {
        let para = paragraphs
            .get(&it.pair_id)
            .ok_or(ValidationError::Provider(ProviderError::Precondition("item references an unknown pair")))?;
        let pemb = para_embs[it.pair_id.as_str()].as_ref().map_err(Clone::clone)?;
        validate_with_paragraph_embedding(it, para, pemb, cfg, emb)
    });

    let mut out = ValidationOutcome { reports: Vec::new(), kept: Vec::new(), failures: Vec::new() };
    for (it, r) in sorted.into_iter().zip(results) {
        match r {
            Ok(rep) => {
                if rep.verdict == Verdict::Kept {
                    out.kept.push(McQaItem { stage: Stage::Validated, ..it.clone() });
                }
                out.reports.push(rep);
            }
            Err(e) => out.failures.push(ItemFailure::new(&it.item_id, &e)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::{GlossaryTranslator, HashingEmbedder, IdentityTranslator, TableEmbedder};
    use proptest::prelude::*;

    fn l(s: &str) -> Lang {
        Lang::new(s).unwrap()
    }

    fn item(stage: Stage) -> McQaItem {
        McQaItem {
            item_id: "p-q00".into(),
            pair_id: "p".into(),
            question: "What is the capital?".into(),
            options: vec!["Yerevan".into(), "Gyumri".into(), "Vanadzor".into(), "Dilijan".into()],
            correct_index: 0,
            language: l("en"),
            stage,
        }
    }

    #[test]
    fn gate_examples() {
        let cfg = ValidationConfig { k_fuzz: 0.8, k_sim: 0.5, gate_mode: GateMode::All };
        assert_eq!(decide(1.0, 0.9, &cfg), Verdict::Kept);
        assert_eq!(decide(0.5, 0.9, &cfg), Verdict::RejectedFuzzy);
        assert_eq!(decide(0.9, 0.1, &cfg), Verdict::RejectedSimilarity);
        assert_eq!(decide(0.8, 0.5, &cfg), Verdict::RejectedBoth);
        let any = ValidationConfig { gate_mode: GateMode::Any, ..cfg };
        assert_eq!(decide(0.5, 0.9, &any), Verdict::Kept);
        assert_eq!(decide(0.5, 0.1, &any), Verdict::RejectedBoth);
    }

    #[test]
    fn translate_identity_and_table() {
        let it = item(Stage::Generated);
        let out = translate_item(&it, &l("en"), &IdentityTranslator).unwrap();
        assert_eq!((out.question.as_str(), &out.options), (it.question.as_str(), &it.options));
        assert_eq!(out.stage, Stage::Translated);

        let tr = GlossaryTranslator::new(vec![
            ("Yerevan".into(), "Երևան".into()),
            ("Gyumri".into(), "Գյումրի".into()),
            ("Vanadzor".into(), "Վանաձոր".into()),
            ("Dilijan".into(), "Դիլիջան".into()),
        ]);
        let out = translate_item(&it, &l("hy"), &tr).unwrap();
        assert_eq!(out.options, vec!["Երևան", "Գյումրի", "Վանաձոր", "Դիլիջան"]);
        assert_eq!(out.correct_index, 0);
        assert_eq!(out.language, l("hy"));
        assert!(matches!(translate_item(&out, &l("hy"), &tr), Err(ValidationError::WrongStage(_))));
    }

    struct Down;
    impl Translator for Down {
        fn translate(&self, _: &str, _: &Lang, _: &Lang) -> Result<String, ProviderError> {
            Err(ProviderError::Network { attempts: 4, message: "down".into() })
        }
    }

    #[test]
    fn provider_failure_excluded() {
        let (ok, failed) = translate_corpus(&[item(Stage::Generated)], &l("hy"), &Down, Exec::Sequential);
        assert!(ok.is_empty());
        assert!(failed[0].provider_failed);
    }

    #[test]
    fn collapsed_translation_is_invalid() {
        let tr = GlossaryTranslator::new(vec![("Gyumri".into(), "Երևան".into()), ("Yerevan".into(), "Երևան".into())]);
        let err = translate_item(&item(Stage::Generated), &l("hy"), &tr).unwrap_err();
        assert!(matches!(err, ValidationError::InvalidTranslation(ItemError::DuplicateOption(0, 1))));
    }

    #[test]
    fn similarity_examples() {
        let e = HashingEmbedder::new(64);
        assert!((semantic_similarity(&e, "same text", "same text").unwrap() - 1.0).abs() < 1e-9);
        let t = TableEmbedder::new([
            ("a", vec![1.0, 0.0]),
            ("b", vec![0.0, 3.0]),
            ("c", vec![-2.0, 0.0]),
            ("z", vec![0.0, 0.0]),
        ]);
        assert_eq!(semantic_similarity(&t, "a", "b").unwrap(), 0.0);
        assert_eq!(semantic_similarity(&t, "a", "c").unwrap(), -1.0);
        assert_eq!(semantic_similarity(&t, "a", "z"), Err(ValidationError::ZeroVector));
    }

    #[test]
    fn validate_item_records_scores() {
        let mut it = item(Stage::Translated);
        it.options[0] = "Երևանը".into();
        let para = "Հայաստանի մայրաքաղաքը Երևանն է։";
        let e = HashingEmbedder::new(256);
        let lenient = ValidationConfig { k_fuzz: 0.8, k_sim: -1.0, gate_mode: GateMode::All };
        let r = validate_item(&it, para, &lenient, &e).unwrap();
        assert!(r.fuzzy_score > 0.8);
        assert_eq!(r.verdict, Verdict::Kept);
        let strict = ValidationConfig { k_sim: 0.99, ..lenient };
        assert_eq!(validate_item(&it, para, &strict, &e).unwrap().verdict, Verdict::RejectedSimilarity);
        assert!(matches!(validate_item(&item(Stage::Generated), para, &strict, &e), Err(ValidationError::WrongStage(_))));
    }

    #[test]
    fn corpus_validation_orders_and_promotes() {
        let para = BTreeMap::from([("p".to_string(), "Yerevan is the capital city.".to_string())]);
        let mut a = item(Stage::Translated);
        a.item_id = "p-q01".into();
        let mut b = item(Stage::Translated);
        b.options[0] = "Tbilisi".into();
        let mut orphan = item(Stage::Translated);
        orphan.item_id = "x-q00".into();
        orphan.pair_id = "x".into();
        let cfg = ValidationConfig { k_sim: -1.0, ..Default::default() };
        let out = validate_corpus(&[a, b, orphan], &para, &cfg, &HashingEmbedder::new(64), Exec::default());
        let ids: Vec<&str> = out.reports.iter().map(|r| r.item_id.as_str()).collect();
        assert_eq!(ids, vec!["p-q00", "p-q01"]);
        assert_eq!(out.reports[0].verdict, Verdict::RejectedFuzzy);
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].stage, Stage::Validated);
        assert_eq!(out.failures.len(), 1);
    }

    proptest! {
        #[test]
        fn lowering_thresholds_never_shrinks_kept(f in 0.0f64..=1.0, s in -1.0f64..=1.0, kf in 0.0f64..=1.0, ks in -1.0f64..=1.0, df in 0.0f64..=1.0, ds in 0.0f64..=2.0) {
            for mode in [GateMode::All, GateMode::Any] {
                let hi = ValidationConfig { k_fuzz: kf, k_sim: ks, gate_mode: mode };
                let lo = ValidationConfig { k_fuzz: (kf - df).max(0.0), k_sim: (ks - ds).max(-1.0), gate_mode: mode };
                if decide(f, s, &hi) == Verdict::Kept {
                    prop_assert_eq!(decide(f, s, &lo), Verdict::Kept);
                }
            }
        }
    }
}
