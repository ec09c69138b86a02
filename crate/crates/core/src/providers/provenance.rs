//! Append-only JSONL log of every provider request/response.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    DecodingParams, EmbeddingVector, Embedder, IntroPair, LlmProvider, PageStats, ProviderError, Translator,
    WikiProvider,
};
use crate::item::Lang;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEnvelope {
    pub seq: u64,
    pub provider: String,
    pub operation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    pub request: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct ProvenanceLog {
    file: Mutex<File>,
    seq: AtomicU64,
}

impl ProvenanceLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ProvenanceLog { file: Mutex::new(file), seq: AtomicU64::new(0) })
    }

    pub fn append(&self, mut env: ProvenanceEnvelope) {
        let mut file = self.file.lock().unwrap();
        env.seq = self.seq.fetch_add(1, Ordering::SeqCst);
        let mut line = match serde_json::to_vec(&env) {
            Ok(l) => l,
            Err(e) => {
                log::warn!("provenance serialization failed: {e}");
                return;
            }
        };
        line.push(b'\n');
        if let Err(e) = file.write_all(&line) {
            log::warn!("provenance write failed: {e}");
        }
    }

    pub fn read_all(path: &Path) -> Result<Vec<ProvenanceEnvelope>, crate::jsonl::JsonlError> {
        crate::jsonl::read_jsonl(path)
    }
}

/// Decorator that logs each call of the wrapped provider.
pub struct Logged<P> {
    inner: P,
    log: Arc<ProvenanceLog>,
}

impl<P> Logged<P> {
    pub fn new(inner: P, log: Arc<ProvenanceLog>) -> Self {
        Logged { inner, log }
    }

    fn record<T: Serialize>(
        &self,
        provider: &str,
        operation: &str,
        model_id: Option<&str>,
        request: Value,
        result: &Result<T, ProviderError>,
    ) {
        let (response, error) = match result {
            Ok(v) => (serde_json::to_value(v).ok(), None),
            Err(e) => (None, Some(e.to_string())),
        };
        self.log.append(ProvenanceEnvelope {
            seq: 0,
            provider: provider.into(),
            operation: operation.into(),
            model_id: model_id.map(str::to_owned),
            request,
            response,
            error,
        });
    }
}

impl<P: WikiProvider> WikiProvider for Logged<P> {
    fn fetch_intro_pair(&self, title: &str, source: &Lang, target: &Lang) -> Result<IntroPair, ProviderError> {
        let r = self.inner.fetch_intro_pair(title, source, target);
        self.record("wiki", "intro_pair", None, json!({"title": title, "source": source, "target": target}), &r);
        r
    }

    fn fetch_stats(&self, title: &str, lang: &Lang) -> Result<PageStats, ProviderError> {
        let r = self.inner.fetch_stats(title, lang);
        let req = json!({"title": title, "lang": lang, "window": self.inner.stats_window()});
        self.record("wiki", "stats", None, req, &r);
        r
    }

    fn category_members(&self, category: &str, lang: &Lang, limit: usize) -> Result<Vec<String>, ProviderError> {
        let r = self.inner.category_members(category, lang, limit);
        self.record("wiki", "category", None, json!({"category": category, "lang": lang, "limit": limit}), &r);
        r
    }

    fn stats_window(&self) -> String {
        self.inner.stats_window()
    }
}

impl<P: LlmProvider> LlmProvider for Logged<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, ProviderError> {
        let r = self.inner.complete(prompt, params);
        let req = json!({"prompt": prompt, "params": params});
        self.record("llm", "complete", Some(self.inner.model_id()), req, &r);
        r
    }
}

impl<P: Translator> Translator for Logged<P> {
    fn translate(&self, text: &str, source: &Lang, target: &Lang) -> Result<String, ProviderError> {
        let r = self.inner.translate(text, source, target);
        self.record("translate", "translate", None, json!({"text": text, "source": source, "target": target}), &r);
        r
    }
}

impl<P: Embedder> Embedder for Logged<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let r = self.inner.embed(text);
        self.record("embed", "embed", Some(self.inner.model_id()), json!({"text": text}), &r);
        r
    }
}
