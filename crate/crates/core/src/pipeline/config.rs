//! Declarative run configuration and provider construction.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::annotation::KappaMode;
use crate::item::Lang;
use crate::mining::MiningConfig;
use crate::providers::cache::Cached;
use crate::providers::http::{HttpClient, HttpEmbedder, HttpLlm, HttpTranslator, HttpWiki, ReplayTransport, Transport, WikiEndpoints};
use crate::providers::mock::{FixtureWiki, GlossaryTranslator, HashChooserLlm, HashingEmbedder, IdentityTranslator, ReplayLlm, ScriptedLlm};
use crate::providers::provenance::{Logged, ProvenanceLog};
use crate::providers::{DecodingParams, Embedder, LlmProvider, ProviderConfig, Translator, WikiProvider};
use crate::validation::ValidationConfig;

/// Every stochastic step has its own seed; none may be omitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub balance: u64,
    pub split: u64,
    pub bench: u64,
    pub annotation: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationSettings {
    pub batch_id: String,
    pub n_flagged: usize,
    pub data_dir: PathBuf,
    pub bind: String,
    pub kappa_mode: KappaMode,
}

impl Default for AnnotationSettings {
    fn default() -> Self {
        AnnotationSettings {
            batch_id: "batch1".into(),
            n_flagged: crate::annotation::DEFAULT_FLAGGED,
            data_dir: PathBuf::from("annotation"),
            bind: "127.0.0.1:8080".into(),
            kappa_mode: KappaMode::FiveWay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WikiSpec {
    Fixture { path: PathBuf },
    Http {
        #[serde(default)]
        endpoints: WikiEndpoints,
        /// Serve requests from recorded exchanges instead of the network.
        #[serde(default)]
        replay: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LlmSpec {
    Scripted { path: PathBuf },
    /// Replays a provenance log.
    Replay { path: PathBuf },
    HashChooser { model_id: String, seed: u64 },
    Http {
        endpoint: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        replay: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TranslatorSpec {
    Identity,
    Glossary { path: PathBuf },
    Http {
        #[serde(default)]
        endpoint: Option<String>,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        replay: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderSpec {
    Hashing { dim: usize },
    Http {
        endpoint: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        replay: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSpecs {
    pub wiki: WikiSpec,
    pub llm: LlmSpec,
    pub translator: TranslatorSpec,
    pub embedder: EmbedderSpec,
    /// Models evaluated by the bench stage, keyed by name.
    #[serde(default)]
    pub bench: std::collections::BTreeMap<String, LlmSpec>,
    /// Wraps every provider in a content-addressed disk cache.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub http: ProviderConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub workspace_dir: PathBuf,
    pub source_lang: Lang,
    pub target_lang: Lang,
    /// Article titles to mine, one per line.
    #[serde(default)]
    pub titles_file: Option<PathBuf>,
    #[serde(default)]
    pub titles: Vec<String>,
    pub prompt_pack: PathBuf,
    #[serde(default = "default_fraction")]
    pub test_fraction: f64,
    pub seeds: Seeds,
    #[serde(default)]
    pub mining: MiningConfig,
    #[serde(default)]
    pub decoding: DecodingParams,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub annotation: AnnotationSettings,
    pub providers: ProviderSpecs,
}

fn default_fraction() -> f64 {
    0.2
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, String> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.workspace_dir);
        resolve(base, &mut self.prompt_pack);
        if let Some(p) = &mut self.titles_file {
            resolve(base, p);
        }
        if self.annotation.data_dir.is_relative() {
            self.annotation.data_dir = self.workspace_dir.join(&self.annotation.data_dir);
        }
        let p = &mut self.providers;
        if let Some(c) = &mut p.cache_dir {
            resolve(base, c);
        }
        match &mut p.wiki {
            WikiSpec::Fixture { path } => resolve(base, path),
            WikiSpec::Http { replay, .. } => replay.iter_mut().for_each(|r| resolve(base, r)),
        }
        for spec in std::iter::once(&mut p.llm).chain(p.bench.values_mut()) {
            match spec {
                LlmSpec::Scripted { path } | LlmSpec::Replay { path } => resolve(base, path),
                LlmSpec::Http { replay, .. } => replay.iter_mut().for_each(|r| resolve(base, r)),
                LlmSpec::HashChooser { .. } => {}
            }
        }
        match &mut p.translator {
            TranslatorSpec::Glossary { path } => resolve(base, path),
            TranslatorSpec::Http { replay, .. } => replay.iter_mut().for_each(|r| resolve(base, r)),
            TranslatorSpec::Identity => {}
        }
        if let EmbedderSpec::Http { replay: Some(r), .. } = &mut p.embedder {
            resolve(base, r);
        }
    }

    fn referenced_files(&self) -> Vec<&Path> {
        let p = &self.providers;
        let mut files: Vec<&Path> = vec![&self.prompt_pack];
        files.extend(self.titles_file.as_deref());
        match &p.wiki {
            WikiSpec::Fixture { path } => files.push(path),
            WikiSpec::Http { replay, .. } => files.extend(replay.as_deref()),
        }
        for spec in std::iter::once(&p.llm).chain(p.bench.values()) {
            match spec {
                LlmSpec::Scripted { path } | LlmSpec::Replay { path } => files.push(path),
                LlmSpec::Http { replay, .. } => files.extend(replay.as_deref()),
                LlmSpec::HashChooser { .. } => {}
            }
        }
        match &p.translator {
            TranslatorSpec::Glossary { path } => files.push(path),
            TranslatorSpec::Http { replay, .. } => files.extend(replay.as_deref()),
            TranslatorSpec::Identity => {}
        }
        if let EmbedderSpec::Http { replay: Some(r), .. } = &p.embedder {
            files.push(r);
        }
        files
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(missing) = self.referenced_files().into_iter().find(|f| !f.is_file()) {
            return Err(format!("referenced file {} does not exist", missing.display()));
        }
        if self.titles_file.is_none() && self.titles.is_empty() {
            return Err("either titles_file or titles must be given".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(format!("test_fraction {} outside (0, 1)", self.test_fraction));
        }
        if let EmbedderSpec::Hashing { dim: 0 } = self.providers.embedder {
            return Err("hashing embedder needs dim >= 1".into());
        }
        self.validation.validate()?;
        self.providers.http.validate()?;
        Ok(())
    }

    /// Moves the workspace, carrying along an annotation directory that
    /// lived inside it.
    pub fn rebase_workspace(&mut self, dir: &Path) {
        if let Ok(rel) = self.annotation.data_dir.strip_prefix(&self.workspace_dir) {
            self.annotation.data_dir = dir.join(rel);
        }
        self.workspace_dir = dir.to_path_buf();
    }

    /// Titles from `titles` followed by the non-blank lines of `titles_file`.
    pub fn load_titles(&self) -> Result<Vec<String>, String> {
        let mut out = self.titles.clone();
        if let Some(f) = &self.titles_file {
            let text = std::fs::read_to_string(f).map_err(|e| format!("{}: {e}", f.display()))?;
            out.extend(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from));
        }
        Ok(out)
    }
}

macro_rules! wrap {
    ($self:ident, $inner:expr, $tr:ident, $sub:literal) => {{
        let inner: Box<dyn $tr> = $inner;
        let inner: Box<dyn $tr> = match $self.cache_dir($sub) {
            Some(dir) => Box::new(Cached::new(inner, dir)),
            None => inner,
        };
        Ok(Box::new(Logged::new(inner, $self.log.clone())) as Box<dyn $tr>)
    }};
}

/// Builds providers from their specs, adding the disk cache and the
/// provenance log.
pub struct ProviderFactory<'a> {
    specs: &'a ProviderSpecs,
    log: Arc<ProvenanceLog>,
}

/// Reads the key from the configured variable, else from `fallback`.
fn api_key(env: &Option<String>, fallback: &str) -> Option<String> {
    std::env::var(env.as_deref().unwrap_or(fallback)).ok()
}

impl<'a> ProviderFactory<'a> {
    pub fn new(specs: &'a ProviderSpecs, provenance: &Path) -> Result<Self, String> {
        let log = ProvenanceLog::open(provenance).map_err(|e| format!("{}: {e}", provenance.display()))?;
        Ok(ProviderFactory { specs, log: Arc::new(log) })
    }

    fn client(&self, replay: &Option<PathBuf>) -> Result<HttpClient, String> {
        let transport: Arc<dyn Transport> = match replay {
            Some(p) => Arc::new(ReplayTransport::load(p).map_err(|e| e.to_string())?),
            None => http_transport()?,
        };
        Ok(HttpClient::new(transport, &self.specs.http))
    }

    fn cache_dir(&self, sub: &str) -> Option<PathBuf> {
        self.specs.cache_dir.as_ref().map(|d| d.join(sub))
    }

    pub fn wiki(&self) -> Result<Box<dyn WikiProvider>, String> {
        let inner: Box<dyn WikiProvider> = match &self.specs.wiki {
            WikiSpec::Fixture { path } => Box::new(FixtureWiki::load(path).map_err(|e| e.to_string())?),
            WikiSpec::Http { endpoints, replay } => {
                let mut endpoints = endpoints.clone();
                if let Ok(api) = std::env::var("WIKI_API_URL") {
                    endpoints.api = api;
                }
                Box::new(HttpWiki::new(self.client(replay)?, endpoints).map_err(|e| e.to_string())?)
            }
        };
        wrap!(self, inner, WikiProvider, "wiki")
    }

    pub fn llm_from(&self, spec: &LlmSpec) -> Result<Box<dyn LlmProvider>, String> {
        let inner: Box<dyn LlmProvider> = match spec {
            LlmSpec::Scripted { path } => Box::new(ScriptedLlm::load(path).map_err(|e| e.to_string())?),
            LlmSpec::Replay { path } => Box::new(ReplayLlm::from_provenance(path).map_err(|e| e.to_string())?),
            LlmSpec::HashChooser { model_id, seed } => Box::new(HashChooserLlm::new(model_id, *seed)),
            LlmSpec::Http { endpoint, model, api_key_env, replay } => {
                Box::new(HttpLlm::new(self.client(replay)?, endpoint, model, api_key(api_key_env, "LLM_API_KEY")))
            }
        };
        wrap!(self, inner, LlmProvider, "llm")
    }

    pub fn llm(&self) -> Result<Box<dyn LlmProvider>, String> {
        self.llm_from(&self.specs.llm)
    }

    pub fn translator(&self) -> Result<Box<dyn Translator>, String> {
        let inner: Box<dyn Translator> = match &self.specs.translator {
            TranslatorSpec::Identity => Box::new(IdentityTranslator),
            TranslatorSpec::Glossary { path } => Box::new(GlossaryTranslator::load(path).map_err(|e| e.to_string())?),
            TranslatorSpec::Http { endpoint, api_key_env, replay } => Box::new(HttpTranslator::new(
                self.client(replay)?,
                endpoint.as_deref().unwrap_or(HttpTranslator::DEFAULT_ENDPOINT),
                api_key(api_key_env, "TRANSLATE_API_KEY"),
            )),
        };
        wrap!(self, inner, Translator, "translate")
    }

    pub fn embedder(&self) -> Result<Box<dyn Embedder>, String> {
        let inner: Box<dyn Embedder> = match &self.specs.embedder {
            EmbedderSpec::Hashing { dim } => Box::new(HashingEmbedder::new(*dim)),
            EmbedderSpec::Http { endpoint, model, api_key_env, replay } => {
                Box::new(HttpEmbedder::new(self.client(replay)?, endpoint, model, api_key(api_key_env, "EMBED_API_KEY")))
            }
        };
        wrap!(self, inner, Embedder, "embed")
    }
}

#[cfg(feature = "http")]
fn http_transport() -> Result<Arc<dyn Transport>, String> {
    Ok(Arc::new(crate::providers::http::ReqwestTransport::new(Duration::from_secs(60))?))
}

#[cfg(not(feature = "http"))]
fn http_transport() -> Result<Arc<dyn Transport>, String> {
    let _ = Duration::ZERO;
    Err("built without the `http` feature; use a replay fixture".into())
}
