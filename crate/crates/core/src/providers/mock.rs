//! Deterministic offline providers: fixtures, scripted and replayed LLMs,
//! glossary translation and feature-hashing embeddings.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    DecodingParams, EmbeddingVector, Embedder, IntroPair, LlmProvider, PageStats, ProviderError, ProvenanceLog,
    Translator, WikiProvider,
};
use crate::item::Lang;
use crate::jsonl::{read_json, sha256_hex, JsonlError};
use crate::text::fold_collapse;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureArticle {
    pub lang: Lang,
    pub title: String,
    pub text: String,
    pub views: u64,
    pub edits: u64,
    /// Interlanguage links: language code to title.
    #[serde(default)]
    pub links: HashMap<String, String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WikiFixture {
    pub articles: Vec<FixtureArticle>,
    /// `lang -> category -> titles`.
    #[serde(default)]
    pub categories: HashMap<String, HashMap<String, Vec<String>>>,
}

/// Wiki provider backed by an in-memory article table.
#[derive(Default)]
pub struct FixtureWiki {
    articles: HashMap<(Lang, String), FixtureArticle>,
    categories: HashMap<String, HashMap<String, Vec<String>>>,
    calls: AtomicUsize,
}

impl FixtureWiki {
    pub fn from_fixture(fx: WikiFixture) -> Self {
        let articles = fx.articles.into_iter().map(|a| ((a.lang.clone(), a.title.clone()), a)).collect();
        FixtureWiki { articles, categories: fx.categories, calls: AtomicUsize::new(0) }
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        Ok(Self::from_fixture(read_json(path)?))
    }

    pub fn with_article(mut self, lang: Lang, title: &str, text: &str, views: u64, edits: u64) -> Self {
        let art = FixtureArticle {
            lang: lang.clone(),
            title: title.into(),
            text: text.into(),
            views,
            edits,
            links: HashMap::new(),
        };
        self.articles.insert((lang, title.into()), art);
        self
    }

    pub fn with_link(mut self, lang: Lang, title: &str, target: Lang, target_title: &str) -> Self {
        if let Some(a) = self.articles.get_mut(&(lang, title.to_owned())) {
            a.links.insert(target.to_string(), target_title.into());
        }
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn get(&self, lang: &Lang, title: &str) -> Option<&FixtureArticle> {
        self.articles.get(&(lang.clone(), title.to_owned()))
    }
}

impl WikiProvider for FixtureWiki {
    fn fetch_intro_pair(&self, title: &str, source: &Lang, target: &Lang) -> Result<IntroPair, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let not_parallel = || ProviderError::NotParallel { title: title.into(), target: target.to_string() };
        let src = self.get(source, title).ok_or_else(not_parallel)?;
        let tgt_title = src.links.get(target.as_str()).ok_or_else(not_parallel)?;
        let tgt = self.get(target, tgt_title).ok_or_else(not_parallel)?;
        Ok(IntroPair {
            source_title: src.title.clone(),
            target_title: tgt.title.clone(),
            source_text: src.text.clone(),
            target_text: tgt.text.clone(),
        })
    }

    fn fetch_stats(&self, title: &str, lang: &Lang) -> Result<PageStats, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let a = self
            .get(lang, title)
            .ok_or_else(|| ProviderError::PageMissing { title: title.into(), lang: lang.to_string() })?;
        Ok(PageStats { title: a.title.clone(), language: lang.clone(), view_count: a.views, edit_count: a.edits })
    }

    fn category_members(&self, category: &str, lang: &Lang, limit: usize) -> Result<Vec<String>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let titles = self.categories.get(lang.as_str()).and_then(|c| c.get(category)).cloned().unwrap_or_default();
        Ok(titles.into_iter().take(limit).collect())
    }

    fn stats_window(&self) -> String {
        "fixture".into()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PromptMatch {
    Sha256 { prompt_sha256: String },
    Contains { contains: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(flatten)]
    pub when: PromptMatch,
    pub response: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmScript {
    pub model_id: String,
    pub rules: Vec<ScriptRule>,
}

/// Returns the response of the first rule matching the prompt; refuses otherwise.
pub struct ScriptedLlm {
    script: LlmScript,
    calls: AtomicUsize,
}

impl ScriptedLlm {
    pub fn new(model_id: &str) -> Self {
        Self::from_script(LlmScript { model_id: model_id.into(), rules: Vec::new() })
    }

    pub fn from_script(script: LlmScript) -> Self {
        ScriptedLlm { script, calls: AtomicUsize::new(0) }
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        Ok(Self::from_script(read_json(path)?))
    }

    pub fn with_contains(mut self, needle: &str, response: &str) -> Self {
        self.script.rules.push(ScriptRule {
            when: PromptMatch::Contains { contains: needle.into() },
            response: response.into(),
        });
        self
    }

    pub fn with_prompt(mut self, prompt: &str, response: &str) -> Self {
        self.script.rules.push(ScriptRule {
            when: PromptMatch::Sha256 { prompt_sha256: sha256_hex(prompt.as_bytes()) },
            response: response.into(),
        });
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LlmProvider for ScriptedLlm {
    fn model_id(&self) -> &str {
        &self.script.model_id
    }

    fn complete(&self, prompt: &str, _params: &DecodingParams) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let digest = sha256_hex(prompt.as_bytes());
        self.script
            .rules
            .iter()
            .find(|r| match &r.when {
                PromptMatch::Sha256 { prompt_sha256 } => *prompt_sha256 == digest,
                PromptMatch::Contains { contains } => prompt.contains(contains.as_str()),
            })
            .map(|r| r.response.clone())
            .ok_or_else(|| ProviderError::Refusal(format!("no scripted response for prompt {}", &digest[..12])))
    }
}

/// Replays LLM responses recorded in a provenance log, keyed by exact prompt.
pub struct ReplayLlm {
    model_id: String,
    responses: HashMap<String, String>,
}

impl ReplayLlm {
    pub fn from_provenance(path: &Path) -> Result<Self, JsonlError> {
        let mut model_id = None;
        let mut responses = HashMap::new();
        for env in ProvenanceLog::read_all(path)? {
            if env.provider != "llm" {
                continue;
            }
            let (Some(prompt), Some(resp)) =
                (env.request.get("prompt").and_then(|p| p.as_str()), env.response.as_ref().and_then(|r| r.as_str()))
            else {
                continue;
            };
            model_id.get_or_insert_with(|| env.model_id.clone().unwrap_or_default());
            responses.insert(sha256_hex(prompt.as_bytes()), resp.to_owned());
        }
        Ok(ReplayLlm { model_id: model_id.unwrap_or_else(|| "replay".into()), responses })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl LlmProvider for ReplayLlm {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, prompt: &str, _params: &DecodingParams) -> Result<String, ProviderError> {
        self.responses
            .get(&sha256_hex(prompt.as_bytes()))
            .cloned()
            .ok_or_else(|| ProviderError::Refusal("prompt not present in transcript".into()))
    }
}

/// Picks an option letter uniformly from a hash of `(seed, prompt)`.
pub struct HashChooserLlm {
    model_id: String,
    seed: u64,
}

impl HashChooserLlm {
    pub fn new(model_id: &str, seed: u64) -> Self {
        HashChooserLlm { model_id: model_id.into(), seed }
    }
}

impl LlmProvider for HashChooserLlm {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, prompt: &str, _params: &DecodingParams) -> Result<String, ProviderError> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(prompt.as_bytes());
        let letter = (b'A' + h.finalize()[0] % 4) as char;
        Ok(format!("Answer: {letter}"))
    }
}

pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str, _source: &Lang, _target: &Lang) -> Result<String, ProviderError> {
        Ok(text.to_owned())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Glossary {
    pub entries: Vec<(String, String)>,
}

fn core_of(token: &str) -> (&str, &str, &str) {
    let start = token.find(|c: char| c.is_alphanumeric()).unwrap_or(token.len());
    let end = token.rfind(|c: char| c.is_alphanumeric()).map_or(start, |i| i + token[i..].chars().next().unwrap().len_utf8());
    let end = end.max(start);
    (&token[..start], &token[start..end], &token[end..])
}

/// Phrase-table translator. A whole-string entry wins; otherwise the longest
/// matching phrase is substituted at each token position and unknown tokens
/// pass through unchanged.
pub struct GlossaryTranslator {
    whole: HashMap<String, String>,
    phrases: Vec<(Vec<String>, String)>,
    calls: AtomicUsize,
}

impl GlossaryTranslator {
    pub fn new(entries: Vec<(String, String)>) -> Self {
        let whole = entries.iter().map(|(s, t)| (fold_collapse(s), t.clone())).collect();
        let mut phrases: Vec<(Vec<String>, String)> = entries
            .into_iter()
            .map(|(s, t)| (s.split_whitespace().map(|w| core_of(w).1.to_lowercase()).collect::<Vec<_>>(), t))
            .filter(|(p, _)| !p.is_empty())
            .collect();
        phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
        GlossaryTranslator { whole, phrases, calls: AtomicUsize::new(0) }
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        let g: Glossary = read_json(path)?;
        Ok(Self::new(g.entries))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Translator for GlossaryTranslator {
    fn translate(&self, text: &str, _source: &Lang, _target: &Lang) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(t) = self.whole.get(&fold_collapse(text)) {
            return Ok(t.clone());
        }
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let cores: Vec<String> = tokens.iter().map(|t| core_of(t).1.to_lowercase()).collect();
        let mut out: Vec<String> = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let hit = self
                .phrases
                .iter()
                .find(|(p, _)| i + p.len() <= tokens.len() && cores[i..i + p.len()] == p[..]);
            match hit {
                Some((p, t)) => {
                    let lead = core_of(tokens[i]).0;
                    let trail = core_of(tokens[i + p.len() - 1]).2;
                    out.push(format!("{lead}{t}{trail}"));
                    i += p.len();
                }
                None => {
                    out.push(tokens[i].to_owned());
                    i += 1;
                }
            }
        }
        Ok(out.join(" "))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Signed feature hashing over the set of character trigrams of the
/// case-folded text.
pub struct HashingEmbedder {
    dim: usize,
    model_id: String,
    calls: AtomicUsize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        HashingEmbedder { dim, model_id: format!("hashing-trigram-{dim}"), calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Embedder for HashingEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let chars: Vec<char> = format!(" {} ", fold_collapse(text)).chars().collect();
        let grams: BTreeSet<String> = chars.windows(3).map(|w| w.iter().collect()).collect();
        let mut values = vec![0.0; self.dim];
        for g in grams {
            let h = fnv1a(g.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            values[(h % self.dim as u64) as usize] += sign;
        }
        Ok(EmbeddingVector { values, model_id: self.model_id.clone() })
    }
}

/// Fixed text-to-vector table, for constructing exact cosine cases.
pub struct TableEmbedder {
    pub table: HashMap<String, Vec<f64>>,
}

impl TableEmbedder {
    pub fn new(entries: impl IntoIterator<Item = (&'static str, Vec<f64>)>) -> Self {
        TableEmbedder { table: entries.into_iter().map(|(k, v)| (k.to_owned(), v)).collect() }
    }
}

impl Embedder for TableEmbedder {
    fn model_id(&self) -> &str {
        "table"
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        self.table
            .get(text)
            .map(|v| EmbeddingVector { values: v.clone(), model_id: "table".into() })
            .ok_or_else(|| ProviderError::Decode(format!("no table embedding for {text:?}")))
    }
}
