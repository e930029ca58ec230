//! Text-completion gateway with per-token top-k log-probabilities.
//!
//! All network access to a language model goes through [`HttpProvider`].
//! [`FixtureProvider`] replays JSON Lines stores written by
//! [`RecordingProvider`], keyed by [`request_key`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no fixture recorded for request {key}")]
    FixtureMiss { key: String },
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("provider error: {0}")]
    Provider(String),
    #[error("fixture store {path}: {message}")]
    Store { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    /// Number of top candidates to report per generated token (at most 5).
    pub logprobs: u8,
    /// Resample counter. Part of the request key only when non-zero.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub attempt: u32,
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, sampling: &Sampling, max_tokens: u32) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            temperature: sampling.temperature,
            top_p: sampling.top_p,
            max_tokens,
            logprobs: 5,
            attempt: 0,
        }
    }

    pub fn with_attempt(mut self, attempt: u32) -> Self {
        self.attempt = attempt;
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::InvalidRequest(format!("top_p {}", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        if self.logprobs > 5 {
            return Err(LlmError::InvalidRequest(format!("logprobs {} > 5", self.logprobs)));
        }
        Ok(())
    }
}

/// Sampling parameters shared by every request of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            temperature: 0.7,
            top_p: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    /// One map per generated token: candidate token -> log-probability.
    #[serde(default)]
    pub token_logprobs: Vec<BTreeMap<String, f64>>,
}

impl CompletionResponse {
    pub fn text(text: impl Into<String>) -> Self {
        CompletionResponse {
            text: text.into(),
            token_logprobs: Vec::new(),
        }
    }
}

/// Stable hex digest of the fields that identify a request.
pub fn request_key(req: &CompletionRequest) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        prompt: &'a str,
        temperature: f64,
        top_p: f64,
        max_tokens: u32,
        logprobs: u8,
        #[serde(skip_serializing_if = "is_zero")]
        attempt: u32,
    }
    let key = Key {
        prompt: &req.prompt,
        temperature: req.temperature,
        top_p: req.top_p,
        max_tokens: req.max_tokens,
        logprobs: req.logprobs,
        attempt: req.attempt,
    };
    let bytes = serde_json::to_vec(&key).expect("key serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub trait Provider: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError>;
}

impl<P: Provider + ?Sized> Provider for &P {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        (**self).complete(req)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        (**self).complete(req)
    }
}

/// Adapts a closure into a provider.
pub struct FnProvider<F>(pub F);

impl<F> Provider for FnProvider<F>
where
    F: Fn(&CompletionRequest) -> Result<CompletionResponse, LlmError> + Send + Sync,
{
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        req.validate()?;
        (self.0)(req)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub key: String,
    pub request: CompletionRequest,
    pub response: CompletionResponse,
}

/// Replays recorded completions; unknown requests fail with `FixtureMiss`.
#[derive(Debug, Default)]
pub struct FixtureProvider {
    records: HashMap<String, CompletionResponse>,
}

impl FixtureProvider {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let store_err = |message: String| LlmError::Store {
            path: path.to_path_buf(),
            message,
        };
        let file = File::open(path).map_err(|e| store_err(e.to_string()))?;
        let mut records = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| store_err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureRecord =
                serde_json::from_str(&line).map_err(|e| store_err(format!("line {}: {e}", i + 1)))?;
            records.entry(rec.key).or_insert(rec.response);
        }
        Ok(FixtureProvider { records })
    }

    pub fn from_records(records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        let mut map = HashMap::new();
        for r in records {
            map.entry(r.key).or_insert(r.response);
        }
        FixtureProvider { records: map }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Provider for FixtureProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        req.validate()?;
        let key = request_key(req);
        self.records.get(&key).cloned().ok_or(LlmError::FixtureMiss { key })
    }
}

/// Passes requests through to `inner` and appends each new
/// `(key, request, response)` to a JSON Lines store.
pub struct RecordingProvider<P> {
    inner: P,
    path: PathBuf,
    sink: Mutex<(File, HashSet<String>)>,
}

impl<P: Provider> RecordingProvider<P> {
    pub fn new(inner: P, store: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = store.as_ref().to_path_buf();
        let mut seen = HashSet::new();
        if path.exists() {
            if let Ok(existing) = FixtureProvider::open(&path) {
                seen.extend(existing.records.into_keys());
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| LlmError::Store {
                path: path.clone(),
                message: e.to_string(),
            })?;
        Ok(RecordingProvider {
            inner,
            path,
            sink: Mutex::new((file, seen)),
        })
    }
}

impl<P: Provider> Provider for RecordingProvider<P> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let response = self.inner.complete(req)?;
        let key = request_key(req);
        let mut sink = self.sink.lock().expect("recording lock poisoned");
        if sink.1.insert(key.clone()) {
            let rec = FixtureRecord {
                key,
                request: req.clone(),
                response: response.clone(),
            };
            let mut line = serde_json::to_string(&rec).expect("record serializes");
            line.push('\n');
            sink.0.write_all(line.as_bytes()).map_err(|e| LlmError::Store {
                path: self.path.clone(),
                message: e.to_string(),
            })?;
        }
        Ok(response)
    }
}

/// Process-wide request pacing shared by every HTTP provider.
struct RateLimiter {
    next_slot: Mutex<Option<Instant>>,
}

fn global_limiter() -> &'static RateLimiter {
    static LIMITER: OnceLock<RateLimiter> = OnceLock::new();
    LIMITER.get_or_init(|| RateLimiter {
        next_slot: Mutex::new(None),
    })
}

impl RateLimiter {
    fn acquire(&self, requests_per_minute: u32) {
        if requests_per_minute == 0 {
            return;
        }
        let interval = Duration::from_secs_f64(60.0 / f64::from(requests_per_minute));
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let start = match *slot {
                Some(t) if t > now => t,
                _ => now,
            };
            *slot = Some(start + interval);
            start.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    /// Base URL of an OpenAI-compatible completions API.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub max_attempts: u32,
    /// First retry delay; doubles on every further retry.
    pub initial_backoff_ms: u64,
    /// 0 disables pacing.
    pub requests_per_minute: u32,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "text-davinci-003".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_attempts: 5,
            initial_backoff_ms: 1000,
            requests_per_minute: 0,
            timeout_secs: 120,
        }
    }
}

pub struct HttpProvider {
    cfg: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ApiRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<u8>,
}

#[derive(Deserialize)]
struct ApiResponse {
    choices: Vec<ApiChoice>,
}

#[derive(Deserialize)]
struct ApiChoice {
    text: String,
    #[serde(default)]
    logprobs: Option<ApiLogprobs>,
}

#[derive(Deserialize)]
struct ApiLogprobs {
    #[serde(default)]
    top_logprobs: Vec<Option<BTreeMap<String, f64>>>,
}

enum Failure {
    Transient(String),
    Fatal(String),
}

impl HttpProvider {
    pub fn new(cfg: HttpConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| LlmError::Provider(e.to_string()))?;
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(HttpProvider { cfg, api_key, client })
    }

    fn attempt(&self, req: &CompletionRequest) -> Result<CompletionResponse, Failure> {
        let url = format!("{}/completions", self.cfg.base_url.trim_end_matches('/'));
        let body = ApiRequest {
            model: &self.cfg.model,
            prompt: &req.prompt,
            temperature: req.temperature,
            top_p: req.top_p,
            max_tokens: req.max_tokens,
            logprobs: (req.logprobs > 0).then_some(req.logprobs),
        };
        let mut builder = self.client.post(url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Failure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Failure::Fatal(format!("HTTP {status}: {text}")));
        }
        let parsed: ApiResponse = resp.json().map_err(|e| Failure::Fatal(format!("bad response body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Failure::Fatal("response has no choices".into()))?;
        let token_logprobs = choice
            .logprobs
            .map(|lp| lp.top_logprobs.into_iter().map(Option::unwrap_or_default).collect())
            .unwrap_or_default();
        Ok(CompletionResponse {
            text: choice.text,
            token_logprobs,
        })
    }
}

impl Provider for HttpProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        req.validate()?;
        let mut delay = Duration::from_millis(self.cfg.initial_backoff_ms);
        let mut last = String::new();
        let attempts = self.cfg.max_attempts.max(1);
        for i in 0..attempts {
            if i > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            global_limiter().acquire(self.cfg.requests_per_minute);
            match self.attempt(req) {
                Ok(r) => return Ok(r),
                Err(Failure::Fatal(msg)) => return Err(LlmError::Provider(msg)),
                Err(Failure::Transient(msg)) => last = msg,
            }
        }
        Err(LlmError::RetriesExhausted { attempts, last })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(prompt: &str) -> CompletionRequest {
        CompletionRequest::new(prompt, &Sampling::default(), 8)
    }

    fn echo() -> FnProvider<impl Fn(&CompletionRequest) -> Result<CompletionResponse, LlmError>> {
        FnProvider(|r: &CompletionRequest| Ok(CompletionResponse::text(format!("{}#{}", r.prompt, r.attempt))))
    }

    #[test]
    fn key_depends_on_every_field() {
        let base = req("p");
        let k = request_key(&base);
        assert_eq!(k, request_key(&base.clone()));
        let mut variants = vec![base.clone(), base.clone(), base.clone(), base.clone(), base.clone()];
        variants[0].prompt.push('!');
        variants[1].temperature = 0.0;
        variants[2].top_p = 0.5;
        variants[3].max_tokens = 9;
        variants[4].logprobs = 1;
        for v in variants {
            assert_ne!(request_key(&v), k);
        }
        assert_ne!(request_key(&base.clone().with_attempt(1)), k);
    }

    #[test]
    fn invalid_requests_rejected() {
        let mut r = req("p");
        r.top_p = 0.0;
        assert!(matches!(echo().complete(&r), Err(LlmError::InvalidRequest(_))));
        let mut r = req("p");
        r.logprobs = 6;
        assert!(echo().complete(&r).is_err());
    }

    #[test]
    fn empty_fixture_store_misses_with_key() {
        let p = FixtureProvider::default();
        let r = req("hello");
        match p.complete(&r) {
            Err(LlmError::FixtureMiss { key }) => assert_eq!(key, request_key(&r)),
            other => panic!("expected miss, got {other:?}"),
        }
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("fx.jsonl");
        let rec = RecordingProvider::new(echo(), &store).unwrap();
        let reqs = [req("a"), req("b"), req("c").with_attempt(2)];
        let live: Vec<_> = reqs.iter().map(|r| rec.complete(r).unwrap()).collect();
        // Repeats are not re-appended.
        rec.complete(&reqs[0]).unwrap();
        drop(rec);

        let lines = std::fs::read_to_string(&store).unwrap();
        assert_eq!(lines.lines().count(), 3);

        let replay = FixtureProvider::open(&store).unwrap();
        for (r, expected) in reqs.iter().zip(&live) {
            assert_eq!(&replay.complete(r).unwrap(), expected);
            assert_eq!(replay.complete(r).unwrap(), replay.complete(r).unwrap());
        }
        assert!(matches!(replay.complete(&req("zzz")), Err(LlmError::FixtureMiss { .. })));
    }

    #[test]
    fn replay_ignores_record_order() {
        let records: Vec<FixtureRecord> = ["x", "y", "z"]
            .iter()
            .map(|p| {
                let r = req(p);
                FixtureRecord {
                    key: request_key(&r),
                    request: r,
                    response: CompletionResponse::text(*p),
                }
            })
            .collect();
        let fwd = FixtureProvider::from_records(records.clone());
        let rev = FixtureProvider::from_records(records.into_iter().rev());
        for p in ["x", "y", "z"] {
            assert_eq!(fwd.complete(&req(p)).unwrap(), rev.complete(&req(p)).unwrap());
        }
    }
}
