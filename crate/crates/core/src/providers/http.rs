//! REST clients for the real services plus the transport abstraction that
//! lets them run against recorded fixtures.
//!
//! * wiki: MediaWiki action API (extracts + langlinks), the REST edit-count
//!   endpoint and the Wikimedia per-article pageviews API
//! * LLM: OpenAI-compatible `/chat/completions`
//! * translator: Google Translate v2
//! * embedder: OpenAI-compatible `/embeddings`

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::clock::{Clock, ConcurrencyLimit, RateLimiter, SystemClock};
use super::{
    DecodingParams, EmbeddingVector, Embedder, IntroPair, LlmProvider, PageStats, ProviderConfig, ProviderError,
    Translator, WikiProvider,
};
use crate::item::Lang;
use crate::jsonl::{read_json, JsonlError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GET")]
    Get,
    #[serde(rename = "POST")]
    Post,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Option<Value>,
}

impl HttpRequest {
    pub fn get(url: String) -> Self {
        HttpRequest { method: Method::Get, url, headers: Vec::new(), body: None }
    }

    pub fn post(url: String, body: Value) -> Self {
        HttpRequest { method: Method::Post, url, headers: Vec::new(), body: Some(body) }
    }

    pub fn bearer(mut self, key: Option<&str>) -> Self {
        if let Some(k) = key {
            self.headers.push(("Authorization".into(), format!("Bearer {k}")));
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

impl HttpResponse {
    pub fn json(&self) -> Result<Value, ProviderError> {
        serde_json::from_str(&self.body).map_err(|e| ProviderError::Decode(e.to_string()))
    }
}

pub trait Transport: Send + Sync {
    /// `Err` means the request never produced an HTTP response.
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, String>;
}

#[cfg(feature = "http")]
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

#[cfg(feature = "http")]
impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("lrqa/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(ReqwestTransport { client })
    }
}

#[cfg(feature = "http")]
impl Transport for ReqwestTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, String> {
        let mut rb = match req.method {
            Method::Get => self.client.get(&req.url),
            Method::Post => self.client.post(&req.url),
        };
        for (k, v) in &req.headers {
            rb = rb.header(k, v);
        }
        if let Some(b) = &req.body {
            rb = rb.json(b);
        }
        let resp = rb.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordedExchange {
    pub method: Method,
    pub url: String,
    #[serde(default)]
    pub body: Option<Value>,
    pub status: u16,
    pub response: Value,
}

/// Serves recorded exchanges matched on method, URL and body. Unknown
/// requests fail as transport errors.
pub struct ReplayTransport {
    exchanges: Vec<RecordedExchange>,
    hits: Mutex<usize>,
}

impl ReplayTransport {
    pub fn new(exchanges: Vec<RecordedExchange>) -> Self {
        ReplayTransport { exchanges, hits: Mutex::new(0) }
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        Ok(Self::new(read_json(path)?))
    }

    pub fn hits(&self) -> usize {
        *self.hits.lock().unwrap()
    }
}

impl Transport for ReplayTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, String> {
        let ex = self
            .exchanges
            .iter()
            .find(|e| e.method == req.method && e.url == req.url && e.body == req.body)
            .ok_or_else(|| format!("no recorded exchange for {:?} {}", req.method, req.url))?;
        *self.hits.lock().unwrap() += 1;
        let body = match &ex.response {
            Value::String(s) => s.clone(),
            v => v.to_string(),
        };
        Ok(HttpResponse { status: ex.status, body })
    }
}

/// Transport wrapper adding retries, a request-rate limit and an in-flight bound.
pub struct HttpClient {
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    limiter: RateLimiter,
    in_flight: ConcurrencyLimit,
    retry_limit: u32,
    backoff: Duration,
}

impl HttpClient {
    pub fn new(transport: Arc<dyn Transport>, cfg: &ProviderConfig) -> Self {
        Self::with_clock(transport, cfg, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(transport: Arc<dyn Transport>, cfg: &ProviderConfig, clock: Arc<dyn Clock>) -> Self {
        HttpClient {
            transport,
            limiter: RateLimiter::new(cfg.requests_per_second, clock.clone()),
            clock,
            in_flight: ConcurrencyLimit::new(cfg.max_concurrent_requests),
            retry_limit: cfg.retry_limit,
            backoff: Duration::from_millis(250),
        }
    }

    /// Returns any response that is not retryable (2xx and non-429 4xx included).
    pub fn send(&self, req: &HttpRequest) -> Result<HttpResponse, ProviderError> {
        let mut last = String::new();
        let attempts = self.retry_limit + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                self.clock.sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            let outcome = {
                let _permit = self.in_flight.acquire();
                self.limiter.acquire();
                self.transport.send(req)
            };
            match outcome {
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    last = format!("HTTP {} from {}", resp.status, req.url);
                }
                Ok(resp) => return Ok(resp),
                Err(e) => last = e,
            }
            log::debug!("attempt {}/{attempts} failed: {last}", attempt + 1);
        }
        Err(ProviderError::Network { attempts, message: last })
    }

    fn send_ok(&self, req: &HttpRequest) -> Result<Value, ProviderError> {
        let resp = self.send(req)?;
        if !(200..300).contains(&resp.status) {
            return Err(ProviderError::Decode(format!("HTTP {} from {}: {}", resp.status, req.url, resp.body)));
        }
        resp.json()
    }
}

fn url_with(base: &str, params: &[(&str, &str)]) -> Result<String, ProviderError> {
    url::Url::parse_with_params(base, params)
        .map(String::from)
        .map_err(|_| ProviderError::Precondition("endpoint must be an absolute URL"))
}

fn path_segment(title: &str) -> String {
    url::form_urlencoded::byte_serialize(title.replace(' ', "_").as_bytes()).collect::<String>().replace('+', "%20")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WikiEndpoints {
    /// Action API; `{lang}` is substituted.
    pub api: String,
    /// Core REST API root; `{lang}` is substituted.
    pub rest: String,
    pub pageviews: String,
    pub view_window_days: u64,
    /// Last day of the view window (`YYYYMMDD`); defaults to yesterday (UTC).
    pub window_end: Option<String>,
}

impl Default for WikiEndpoints {
    fn default() -> Self {
        WikiEndpoints {
            api: "https://{lang}.wikipedia.org/w/api.php".into(),
            rest: "https://{lang}.wikipedia.org/w/rest.php/v1".into(),
            pageviews: "https://wikimedia.org/api/rest_v1/metrics/pageviews/per-article".into(),
            view_window_days: 365,
            window_end: None,
        }
    }
}

pub struct HttpWiki {
    client: HttpClient,
    endpoints: WikiEndpoints,
    window: (String, String),
}

impl HttpWiki {
    pub fn new(client: HttpClient, endpoints: WikiEndpoints) -> Result<Self, ProviderError> {
        let end = match &endpoints.window_end {
            Some(s) => NaiveDate::parse_from_str(s, "%Y%m%d")
                .map_err(|_| ProviderError::Precondition("window_end must be YYYYMMDD"))?,
            None => chrono::Utc::now().date_naive() - Days::new(1),
        };
        let start = end - Days::new(endpoints.view_window_days.max(1) - 1);
        let window = (start.format("%Y%m%d").to_string(), end.format("%Y%m%d").to_string());
        Ok(HttpWiki { client, endpoints, window })
    }

    fn api(&self, lang: &Lang) -> String {
        self.endpoints.api.replace("{lang}", lang.as_str())
    }

    /// Returns `(title, extract, langlinks)` or `None` for a missing page.
    fn query_intro(&self, title: &str, lang: &Lang, link_lang: Option<&Lang>) -> Result<Option<(String, String, Vec<(String, String)>)>, ProviderError> {
        let mut params = vec![
            ("action", "query"),
            ("format", "json"),
            ("formatversion", "2"),
            ("redirects", "1"),
            ("prop", "extracts|langlinks"),
            ("exintro", "1"),
            ("explaintext", "1"),
            ("titles", title),
        ];
        if let Some(l) = link_lang {
            params.push(("lllang", l.as_str()));
        }
        let body = self.client.send_ok(&HttpRequest::get(url_with(&self.api(lang), &params)?))?;
        let page = body
            .pointer("/query/pages/0")
            .ok_or_else(|| ProviderError::Decode("query.pages missing".into()))?;
        if page.get("missing").is_some() || page.get("invalid").is_some() {
            return Ok(None);
        }
        let resolved = page.get("title").and_then(Value::as_str).unwrap_or(title).to_owned();
        let extract = page.get("extract").and_then(Value::as_str).unwrap_or_default().trim().to_owned();
        let links = page
            .get("langlinks")
            .and_then(Value::as_array)
            .map(|ls| {
                ls.iter()
                    .filter_map(|l| Some((l.get("lang")?.as_str()?.to_owned(), l.get("title")?.as_str()?.to_owned())))
                    .collect()
            })
            .unwrap_or_default();
        Ok(Some((resolved, extract, links)))
    }
}

impl WikiProvider for HttpWiki {
    fn fetch_intro_pair(&self, title: &str, source: &Lang, target: &Lang) -> Result<IntroPair, ProviderError> {
        let not_parallel = || ProviderError::NotParallel { title: title.into(), target: target.to_string() };
        let (src_title, src_text, links) = self.query_intro(title, source, Some(target))?.ok_or_else(not_parallel)?;
        let tgt_title = links.into_iter().find(|(l, _)| l == target.as_str()).map(|(_, t)| t).ok_or_else(not_parallel)?;
        let (tgt_title, tgt_text, _) = self.query_intro(&tgt_title, target, None)?.ok_or_else(not_parallel)?;
        if src_text.is_empty() || tgt_text.is_empty() {
            return Err(not_parallel());
        }
        Ok(IntroPair { source_title: src_title, target_title: tgt_title, source_text: src_text, target_text: tgt_text })
    }

    fn fetch_stats(&self, title: &str, lang: &Lang) -> Result<PageStats, ProviderError> {
        let seg = path_segment(title);
        let rest = self.endpoints.rest.replace("{lang}", lang.as_str());
        let resp = self.client.send(&HttpRequest::get(format!("{rest}/page/{seg}/history/counts/edits")))?;
        if resp.status == 404 {
            return Err(ProviderError::PageMissing { title: title.into(), lang: lang.to_string() });
        }
        if !(200..300).contains(&resp.status) {
            return Err(ProviderError::Decode(format!("HTTP {} from edit-count endpoint", resp.status)));
        }
        let edit_count = resp
            .json()?
            .get("count")
            .and_then(Value::as_u64)
            .ok_or_else(|| ProviderError::Decode("edit count missing".into()))?;

        let (start, end) = &self.window;
        let url = format!("{}/{lang}.wikipedia/all-access/user/{seg}/daily/{start}/{end}", self.endpoints.pageviews);
        let resp = self.client.send(&HttpRequest::get(url))?;
        // the pageviews API answers 404 when a page has no recorded views
        let view_count = match resp.status {
            404 => 0,
            s if (200..300).contains(&s) => resp
                .json()?
                .get("items")
                .and_then(Value::as_array)
                .map(|items| items.iter().filter_map(|i| i.get("views").and_then(Value::as_u64)).sum())
                .unwrap_or(0),
            s => return Err(ProviderError::Decode(format!("HTTP {s} from pageviews endpoint"))),
        };
        Ok(PageStats { title: title.into(), language: lang.clone(), view_count, edit_count })
    }

    fn category_members(&self, category: &str, lang: &Lang, limit: usize) -> Result<Vec<String>, ProviderError> {
        let cat = if category.starts_with("Category:") { category.to_owned() } else { format!("Category:{category}") };
        let limit_s = limit.min(500).to_string();
        let params = [
            ("action", "query"),
            ("format", "json"),
            ("formatversion", "2"),
            ("list", "categorymembers"),
            ("cmnamespace", "0"),
            ("cmtitle", cat.as_str()),
            ("cmlimit", limit_s.as_str()),
        ];
        let body = self.client.send_ok(&HttpRequest::get(url_with(&self.api(lang), &params)?))?;
        let members = body
            .pointer("/query/categorymembers")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Decode("categorymembers missing".into()))?;
        Ok(members.iter().filter_map(|m| m.get("title")?.as_str().map(str::to_owned)).take(limit).collect())
    }

    fn stats_window(&self) -> String {
        format!("{}-{}", self.window.0, self.window.1)
    }
}

pub struct HttpLlm {
    client: HttpClient,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl HttpLlm {
    pub fn new(client: HttpClient, endpoint: &str, model: &str, api_key: Option<String>) -> Self {
        HttpLlm { client, endpoint: endpoint.trim_end_matches('/').into(), model: model.into(), api_key }
    }
}

impl LlmProvider for HttpLlm {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let req = HttpRequest::post(format!("{}/chat/completions", self.endpoint), body).bearer(self.api_key.as_deref());
        let v = self.client.send_ok(&req)?;
        let choice = v.pointer("/choices/0").ok_or_else(|| ProviderError::Decode("no choices".into()))?;
        if choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter") {
            return Err(ProviderError::Refusal("content filtered".into()));
        }
        let text = choice.pointer("/message/content").and_then(Value::as_str).unwrap_or_default();
        if text.trim().is_empty() {
            return Err(ProviderError::Refusal("empty completion".into()));
        }
        Ok(text.to_owned())
    }
}

pub struct HttpTranslator {
    client: HttpClient,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpTranslator {
    pub const DEFAULT_ENDPOINT: &'static str = "https://translation.googleapis.com/language/translate/v2";

    pub fn new(client: HttpClient, endpoint: &str, api_key: Option<String>) -> Self {
        HttpTranslator { client, endpoint: endpoint.into(), api_key }
    }
}

impl Translator for HttpTranslator {
    fn translate(&self, text: &str, source: &Lang, target: &Lang) -> Result<String, ProviderError> {
        let url = match &self.api_key {
            Some(k) => url_with(&self.endpoint, &[("key", k.as_str())])?,
            None => self.endpoint.clone(),
        };
        let body = json!({"q": text, "source": source, "target": target, "format": "text"});
        let v = self.client.send_ok(&HttpRequest::post(url, body))?;
        v.pointer("/data/translations/0/translatedText")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::Decode("translatedText missing".into()))
    }
}

pub struct HttpEmbedder {
    client: HttpClient,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl HttpEmbedder {
    pub fn new(client: HttpClient, endpoint: &str, model: &str, api_key: Option<String>) -> Self {
        HttpEmbedder { client, endpoint: endpoint.trim_end_matches('/').into(), model: model.into(), api_key }
    }
}

impl Embedder for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let req = HttpRequest::post(format!("{}/embeddings", self.endpoint), json!({"model": self.model, "input": text}))
            .bearer(self.api_key.as_deref());
        let v = self.client.send_ok(&req)?;
        let values: Vec<f64> = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Decode("embedding missing".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| ProviderError::Decode("non-numeric embedding value".into())))
            .collect::<Result<_, _>>()?;
        Ok(EmbeddingVector { values, model_id: self.model.clone() })
    }
}
