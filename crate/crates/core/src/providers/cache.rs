//! Content-addressed disk cache and the [`Cached`] provider decorator.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    DecodingParams, EmbeddingVector, Embedder, IntroPair, LlmProvider, PageStats, ProviderError, Translator,
    WikiProvider,
};
use crate::item::Lang;
use crate::jsonl::{sha256_hex, write_atomic};

#[derive(Serialize, Deserialize)]
struct Entry<T> {
    key: String,
    value: T,
}

/// Files live at `<dir>/<hh>/<sha256(key)>.json`. Writes are atomic, and a
/// per-key lock makes concurrent identical lookups issue one fill.
pub struct DiskCache {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl DiskCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DiskCache { dir: dir.into(), locks: Mutex::new(HashMap::new()) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(&digest[..2]).join(format!("{digest}.json"))
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        let bytes = fs::read(self.path_for(&sha256_hex(key.as_bytes()))).ok()?;
        let entry: Entry<T> = serde_json::from_slice(&bytes).ok()?;
        (entry.key == key).then_some(entry.value)
    }

    pub fn put<T: Serialize>(&self, key: &str, value: &T) {
        let path = self.path_for(&sha256_hex(key.as_bytes()));
        let res = serde_json::to_vec(&Entry { key: key.to_owned(), value })
            .map_err(|e| e.to_string())
            .and_then(|bytes| write_atomic(&path, &bytes).map_err(|e| e.to_string()));
        if let Err(e) = res {
            log::warn!("cache write failed for {}: {e}", path.display());
        }
    }

    /// Returns the cached value or computes, stores and returns it. Errors are not cached.
    pub fn get_or_try<T, E>(&self, key: &str, fill: impl FnOnce() -> Result<T, E>) -> Result<T, E>
    where
        T: Serialize + DeserializeOwned,
    {
        let lock = {
            let mut locks = self.locks.lock().unwrap();
            locks.entry(key.to_owned()).or_default().clone()
        };
        let _guard = lock.lock().unwrap();
        if let Some(v) = self.get(key) {
            return Ok(v);
        }
        let v = fill()?;
        self.put(key, &v);
        Ok(v)
    }
}

/// Wraps any provider with a [`DiskCache`]. Only successful responses are stored.
pub struct Cached<P> {
    inner: P,
    cache: DiskCache,
}

impl<P> Cached<P> {
    pub fn new(inner: P, dir: impl Into<PathBuf>) -> Self {
        Cached { inner, cache: DiskCache::new(dir) }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: WikiProvider> WikiProvider for Cached<P> {
    fn fetch_intro_pair(&self, title: &str, source: &Lang, target: &Lang) -> Result<IntroPair, ProviderError> {
        let key = format!("wiki.intro\u{1f}{source}\u{1f}{target}\u{1f}{title}");
        self.cache.get_or_try(&key, || self.inner.fetch_intro_pair(title, source, target))
    }

    fn fetch_stats(&self, title: &str, lang: &Lang) -> Result<PageStats, ProviderError> {
        let key = format!("wiki.stats\u{1f}{lang}\u{1f}{}\u{1f}{title}", self.inner.stats_window());
        self.cache.get_or_try(&key, || self.inner.fetch_stats(title, lang))
    }

    fn category_members(&self, category: &str, lang: &Lang, limit: usize) -> Result<Vec<String>, ProviderError> {
        let key = format!("wiki.category\u{1f}{lang}\u{1f}{limit}\u{1f}{category}");
        self.cache.get_or_try(&key, || self.inner.category_members(category, lang, limit))
    }

    fn stats_window(&self) -> String {
        self.inner.stats_window()
    }
}

impl<P: LlmProvider> LlmProvider for Cached<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, ProviderError> {
        let key = format!(
            "llm\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{prompt}",
            self.inner.model_id(),
            params.temperature,
            params.max_tokens
        );
        self.cache.get_or_try(&key, || self.inner.complete(prompt, params))
    }
}

impl<P: Translator> Translator for Cached<P> {
    fn translate(&self, text: &str, source: &Lang, target: &Lang) -> Result<String, ProviderError> {
        let key = format!("translate\u{1f}{source}\u{1f}{target}\u{1f}{text}");
        self.cache.get_or_try(&key, || self.inner.translate(text, source, target))
    }
}

impl<P: Embedder> Embedder for Cached<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let key = format!("embed\u{1f}{}\u{1f}{text}", self.inner.model_id());
        self.cache.get_or_try(&key, || self.inner.embed(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::{FixtureWiki, GlossaryTranslator, HashingEmbedder};
    use crate::providers::translate_text;

    fn langs() -> (Lang, Lang) {
        (Lang::new("en").unwrap(), Lang::new("hy").unwrap())
    }

    #[test]
    fn translate_cache_hit_skips_provider() {
        let dir = tempfile::tempdir().unwrap();
        let (en, hy) = langs();
        let tr = Cached::new(GlossaryTranslator::new(vec![("dog".into(), "շուն".into())]), dir.path());
        assert_eq!(translate_text(&tr, "dog", &en, &hy).unwrap(), "շուն");
        assert_eq!(translate_text(&tr, "dog", &en, &hy).unwrap(), "շուն");
        assert_eq!(tr.inner().calls(), 1);
        translate_text(&tr, "cat", &en, &hy).unwrap();
        assert_eq!(tr.inner().calls(), 2);
    }

    #[test]
    fn cache_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let e1 = Cached::new(HashingEmbedder::new(16), dir.path());
        let v1 = e1.embed("hello").unwrap();
        let e2 = Cached::new(HashingEmbedder::new(16), dir.path());
        assert_eq!(e2.embed("hello").unwrap(), v1);
        assert_eq!(e2.inner().calls(), 0);
    }

    #[test]
    fn errors_are_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let (en, _) = langs();
        let wiki = Cached::new(FixtureWiki::default(), dir.path());
        assert!(wiki.fetch_stats("Missing", &en).is_err());
        assert!(wiki.fetch_stats("Missing", &en).is_err());
        assert_eq!(wiki.inner().calls(), 2);
    }

    #[test]
    fn concurrent_identical_calls_fill_once() {
        let dir = tempfile::tempdir().unwrap();
        let emb = Arc::new(Cached::new(HashingEmbedder::new(16), dir.path()));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let emb = emb.clone();
                std::thread::spawn(move || emb.embed("same text").unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(emb.inner().calls(), 1);
    }
}
