//! Contracts for the four external services the pipeline depends on (wiki,
//! LLM, translator, embedder), with caching, provenance logging, rate
//! limiting and deterministic offline implementations.
//!
//! Callers go through the free functions ([`llm_complete`],
//! [`translate_text`], [`embed_text`], ...) which enforce the pre- and
//! postconditions every implementation must satisfy.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::item::Lang;

pub mod cache;
pub mod clock;
pub mod http;
pub mod mock;
pub mod provenance;

pub use cache::{Cached, DiskCache};
pub use clock::{Clock, ConcurrencyLimit, FakeClock, RateLimiter, SystemClock};
pub use provenance::{Logged, ProvenanceEnvelope, ProvenanceLog};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("no {target} counterpart for {title:?}")]
    NotParallel { title: String, target: String },
    #[error("page {title:?} missing on {lang} wiki")]
    PageMissing { title: String, lang: String },
    #[error("network error after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("provider refused or returned empty output: {0}")]
    Refusal(String),
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
    #[error("malformed provider response: {0}")]
    Decode(String),
}

impl ProviderError {
    /// Errors that mark an item `provider_failed` rather than describing the input.
    pub fn is_provider_failure(&self) -> bool {
        matches!(self, ProviderError::Network { .. } | ProviderError::Refusal(_) | ProviderError::Decode(_))
    }
}

/// Popularity statistics for one wiki page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageStats {
    pub title: String,
    pub language: Lang,
    /// Views over the provider's trailing window.
    pub view_count: u64,
    /// Total revisions.
    pub edit_count: u64,
}

/// Intro paragraphs of the same article in two languages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntroPair {
    pub source_title: String,
    pub target_title: String,
    pub source_text: String,
    pub target_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_valid(&self) -> bool {
        !self.values.is_empty() && self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams { temperature: 0.7, max_tokens: 2048 }
    }
}

/// Transport-level settings shared by the HTTP clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub cache_dir: Option<std::path::PathBuf>,
    pub max_concurrent_requests: usize,
    pub requests_per_second: f64,
    pub retry_limit: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: String::new(),
            cache_dir: None,
            max_concurrent_requests: 4,
            requests_per_second: 5.0,
            retry_limit: 3,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_concurrent_requests < 1 {
            return Err("max_concurrent_requests must be >= 1".into());
        }
        if !(self.requests_per_second > 0.0 && self.requests_per_second.is_finite()) {
            return Err("requests_per_second must be positive".into());
        }
        Ok(())
    }
}

pub trait WikiProvider: Send + Sync {
    /// Intro paragraphs of `title` in `source` and of its `target` interlanguage counterpart.
    fn fetch_intro_pair(&self, title: &str, source: &Lang, target: &Lang) -> Result<IntroPair, ProviderError>;
    fn fetch_stats(&self, title: &str, lang: &Lang) -> Result<PageStats, ProviderError>;
    fn category_members(&self, category: &str, lang: &Lang, limit: usize) -> Result<Vec<String>, ProviderError>;
    /// Identifies the view-count window; part of the stats cache key.
    fn stats_window(&self) -> String {
        String::new()
    }
}

pub trait LlmProvider: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, ProviderError>;
}

pub trait Translator: Send + Sync {
    fn translate(&self, text: &str, source: &Lang, target: &Lang) -> Result<String, ProviderError>;
}

pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
}

macro_rules! forward_impls {
    ($($ptr:ident),*) => {$(
        impl<T: WikiProvider + ?Sized> WikiProvider for $ptr<T> {
            fn fetch_intro_pair(&self, title: &str, s: &Lang, t: &Lang) -> Result<IntroPair, ProviderError> {
                (**self).fetch_intro_pair(title, s, t)
            }
            fn fetch_stats(&self, title: &str, lang: &Lang) -> Result<PageStats, ProviderError> {
                (**self).fetch_stats(title, lang)
            }
            fn category_members(&self, c: &str, lang: &Lang, limit: usize) -> Result<Vec<String>, ProviderError> {
                (**self).category_members(c, lang, limit)
            }
            fn stats_window(&self) -> String {
                (**self).stats_window()
            }
        }
        impl<T: LlmProvider + ?Sized> LlmProvider for $ptr<T> {
            fn model_id(&self) -> &str {
                (**self).model_id()
            }
            fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, ProviderError> {
                (**self).complete(prompt, params)
            }
        }
        impl<T: Translator + ?Sized> Translator for $ptr<T> {
            fn translate(&self, text: &str, s: &Lang, t: &Lang) -> Result<String, ProviderError> {
                (**self).translate(text, s, t)
            }
        }
        impl<T: Embedder + ?Sized> Embedder for $ptr<T> {
            fn model_id(&self) -> &str {
                (**self).model_id()
            }
            fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
                (**self).embed(text)
            }
        }
    )*};
}

forward_impls!(Arc, Box);

pub fn wiki_fetch_intro_pair(
    wiki: &dyn WikiProvider,
    title: &str,
    source: &Lang,
    target: &Lang,
) -> Result<IntroPair, ProviderError> {
    if title.trim().is_empty() {
        return Err(ProviderError::Precondition("title must be nonempty"));
    }
    wiki.fetch_intro_pair(title.trim(), source, target)
}

pub fn wiki_fetch_stats(wiki: &dyn WikiProvider, title: &str, lang: &Lang) -> Result<PageStats, ProviderError> {
    if title.trim().is_empty() {
        return Err(ProviderError::Precondition("title must be nonempty"));
    }
    wiki.fetch_stats(title.trim(), lang)
}

pub fn llm_complete(llm: &dyn LlmProvider, prompt: &str, params: &DecodingParams) -> Result<String, ProviderError> {
    if prompt.trim().is_empty() {
        return Err(ProviderError::Precondition("prompt must be nonempty"));
    }
    let out = llm.complete(prompt, params)?;
    if out.trim().is_empty() {
        return Err(ProviderError::Refusal(format!("{} returned empty output", llm.model_id())));
    }
    Ok(out)
}

pub fn translate_text(tr: &dyn Translator, text: &str, source: &Lang, target: &Lang) -> Result<String, ProviderError> {
    if text.trim().is_empty() {
        return Err(ProviderError::Precondition("text must be nonempty"));
    }
    tr.translate(text, source, target)
}

pub fn embed_text(emb: &dyn Embedder, text: &str) -> Result<EmbeddingVector, ProviderError> {
    if text.trim().is_empty() {
        return Err(ProviderError::Precondition("text must be nonempty"));
    }
    let v = emb.embed(text)?;
    if !v.is_valid() {
        return Err(ProviderError::Decode(format!("{} returned an empty or non-finite embedding", emb.model_id())));
    }
    Ok(v)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::mock::*;
    use super::*;

    fn en() -> Lang {
        Lang::new("en").unwrap()
    }
    fn hy() -> Lang {
        Lang::new("hy").unwrap()
    }

    #[test]
    fn stats_passthrough() {
        let wiki = FixtureWiki::default().with_article(en(), "X", "text", 1500, 7);
        let s = wiki_fetch_stats(&wiki, "X", &en()).unwrap();
        assert_eq!((s.view_count, s.edit_count), (1500, 7));
        let wiki = FixtureWiki::default().with_article(en(), "Y", "text", 0, 0);
        let s = wiki_fetch_stats(&wiki, "Y", &en()).unwrap();
        assert_eq!((s.view_count, s.edit_count), (0, 0));
        assert!(matches!(wiki_fetch_stats(&wiki, "Z", &en()), Err(ProviderError::PageMissing { .. })));
    }

    #[test]
    fn intro_pair_mock_and_missing() {
        let wiki = FixtureWiki::default()
            .with_article(en(), "Same", "identical text", 2000, 10)
            .with_article(hy(), "Same-hy", "identical text", 2000, 10)
            .with_link(en(), "Same", hy(), "Same-hy");
        let p = wiki_fetch_intro_pair(&wiki, "Same", &en(), &hy()).unwrap();
        assert_eq!(p.source_text, p.target_text);
        let err = wiki_fetch_intro_pair(&wiki, "NoSuchArticleZZZ", &en(), &hy()).unwrap_err();
        assert!(matches!(err, ProviderError::NotParallel { .. }));
    }

    #[test]
    fn llm_preconditions() {
        let llm = ScriptedLlm::new("m").with_contains("hello", "canned");
        assert_eq!(llm_complete(&llm, "say hello", &DecodingParams::default()).unwrap(), "canned");
        assert_eq!(
            llm_complete(&llm, "  ", &DecodingParams::default()),
            Err(ProviderError::Precondition("prompt must be nonempty"))
        );
        assert!(matches!(llm_complete(&llm, "nothing matches", &DecodingParams::default()), Err(ProviderError::Refusal(_))));
    }

    #[test]
    fn translate_mocks() {
        assert_eq!(translate_text(&IdentityTranslator, "abc", &en(), &en()).unwrap(), "abc");
        let tr = GlossaryTranslator::new(vec![("dog".into(), "շուն".into())]);
        assert_eq!(translate_text(&tr, "dog", &en(), &hy()).unwrap(), "շուն");
        assert!(translate_text(&tr, "", &en(), &hy()).is_err());
    }

    #[test]
    fn hashing_embedder_determinism() {
        let e = HashingEmbedder::new(128);
        let a = embed_text(&e, "Visual-manual modality").unwrap();
        let b = embed_text(&e, "Visual-manual modality").unwrap();
        let c = embed_text(&e, "Auditory-vocal").unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().zip(&c.values).any(|(x, y)| x != y));
        assert!((cosine(&a.values, &b.values).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_edge_cases() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), Some(0.0));
        assert!((cosine(&[1.0, 2.0], &[-1.0, -2.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), None);
        assert_eq!(cosine(&[1.0], &[1.0, 0.0]), None);
    }
}
