//! Chat-completion gateway.
//!
//! [`ChatProvider`] makes one attempt at one request; [`Gateway`] adds the
//! in-flight limit, retries with exponential backoff, exchange logging and
//! [`FeedbackRecord`] bookkeeping. [`MockProvider`] and [`MockEmbedder`]
//! answer offline and deterministically.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::{Message, PromptBundle, PromptStrategy, Role};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("API key environment variable {var} is not set")]
    MissingKey { var: String },

    /// A failure worth retrying (HTTP 429, 5xx, transport errors).
    #[error("transient provider failure{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transient {
        status: Option<u16>,
        message: String,
    },

    #[error("exhausted retries after {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: u32, last: String },

    #[error("malformed provider response: {0}")]
    Malformed(String),

    #[error("provider rejected the request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },

    #[error("failed to write exchange log: {0}")]
    Log(String),
}

/// Connection and sampling settings for a chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    pub embedding_url: String,
    pub model_name: String,
    pub embedding_model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_parallel: usize,
    pub temperature: f64,
    /// First backoff delay; doubles after every failed attempt.
    pub backoff_base_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            embedding_url: "https://api.openai.com/v1/embeddings".into(),
            model_name: "gpt-4o".into(),
            embedding_model: "text-embedding-3-small".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
            max_retries: 3,
            max_parallel: 4,
            temperature: 0.0,
            backoff_base_ms: 1000,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.timeout_secs == 0 {
            return Err("timeout must be positive".into());
        }
        if self.max_parallel == 0 {
            return Err("max_parallel must be >= 1".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(format!("invalid temperature {}", self.temperature));
        }
        Ok(())
    }

    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        Duration::from_millis(self.backoff_base_ms.saturating_mul(1u64 << retry.min(20)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
}

impl ChatRequest {
    pub fn from_bundle(bundle: &PromptBundle) -> Self {
        Self {
            messages: bundle.messages.clone(),
        }
    }

    /// A single text-only user turn.
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            messages: vec![Message {
                role: Role::User,
                text: text.into(),
                images: Vec::new(),
            }],
        }
    }

    pub fn last_text(&self) -> &str {
        self.messages.last().map(|m| m.text.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub model: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

/// One attempt at one chat request.
pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Deterministic providers get fixed timestamps and zero latency so
    /// their outputs are reproducible byte for byte.
    fn is_deterministic(&self) -> bool {
        false
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

/// Text embedding backend.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError>;
}

fn api_key(var: &str) -> Result<String, GatewayError> {
    match std::env::var(var) {
        Ok(k) if !k.is_empty() => Ok(k),
        _ => Err(GatewayError::MissingKey {
            var: var.to_string(),
        }),
    }
}

fn agent(timeout_secs: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(timeout_secs)))
        .http_status_as_error(false)
        .build()
        .into()
}

fn post_json(
    agent: &ureq::Agent,
    url: &str,
    key: &str,
    body: &Value,
) -> Result<Value, GatewayError> {
    let mut resp = agent
        .post(url)
        .header("Authorization", &format!("Bearer {key}"))
        .header("Content-Type", "application/json")
        .send(body.to_string())
        .map_err(|e| GatewayError::Transient {
            status: None,
            message: e.to_string(),
        })?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| GatewayError::Transient {
            status: Some(status),
            message: format!("reading body: {e}"),
        })?;
    if status == 429 || status >= 500 {
        return Err(GatewayError::Transient {
            status: Some(status),
            message: truncate(&text, 200),
        });
    }
    if !(200..300).contains(&status) {
        return Err(GatewayError::Rejected {
            status,
            body: truncate(&text, 500),
        });
    }
    serde_json::from_str(&text).map_err(|e| GatewayError::Malformed(format!("invalid JSON: {e}")))
}

fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}...", &s[..end])
}

/// OpenAI-compatible chat-completion endpoint.
pub struct HttpProvider {
    config: ProviderConfig,
    key: String,
    agent: ureq::Agent,
}

impl HttpProvider {
    /// Reads the API key from the configured environment variable.
    pub fn new(config: ProviderConfig) -> Result<Self, GatewayError> {
        let key = api_key(&config.api_key_env)?;
        let agent = agent(config.timeout_secs);
        Ok(Self { config, key, agent })
    }

    /// The key in use, so callers can scrub it from anything they persist.
    pub fn secret(&self) -> &str {
        &self.key
    }
}

/// Wire form of one message: text part followed by base64 image parts.
pub fn wire_messages(messages: &[Message]) -> Value {
    Value::Array(
        messages
            .iter()
            .map(|m| {
                let mut parts = vec![json!({"type": "text", "text": m.text})];
                for img in &m.images {
                    parts.push(json!({
                        "type": "image_url",
                        "image_url": {"url": format!("data:image/png;base64,{}", img.to_base64())}
                    }));
                }
                json!({"role": m.role, "content": parts})
            })
            .collect(),
    )
}

impl ChatProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let body = json!({
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": wire_messages(&request.messages),
        });
        let v = post_json(&self.agent, &self.config.endpoint_url, &self.key, &body)?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::Malformed("missing choices[0].message.content".into()))?;
        if text.trim().is_empty() {
            return Err(GatewayError::Malformed("empty completion".into()));
        }
        Ok(ChatResponse {
            text: text.to_string(),
            model: v
                .get("model")
                .and_then(Value::as_str)
                .unwrap_or(&self.config.model_name)
                .to_string(),
            prompt_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
            completion_tokens: v
                .pointer("/usage/completion_tokens")
                .and_then(Value::as_u64),
        })
    }
}

/// OpenAI-compatible embeddings endpoint.
pub struct HttpEmbedder {
    config: ProviderConfig,
    key: String,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(config: ProviderConfig) -> Result<Self, GatewayError> {
        let key = api_key(&config.api_key_env)?;
        let agent = agent(config.timeout_secs);
        Ok(Self { config, key, agent })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let body = json!({"model": self.config.embedding_model, "input": text});
        let mut last = None;
        for attempt in 0..=self.config.max_retries {
            match post_json(&self.agent, &self.config.embedding_url, &self.key, &body) {
                Ok(v) => {
                    return v
                        .pointer("/data/0/embedding")
                        .and_then(Value::as_array)
                        .and_then(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
                        .ok_or_else(|| GatewayError::Malformed("missing data[0].embedding".into()))
                }
                Err(e @ GatewayError::Transient { .. }) => {
                    last = Some(e.to_string());
                    if attempt < self.config.max_retries {
                        std::thread::sleep(self.config.backoff(attempt));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(GatewayError::ExhaustedRetries {
            attempts: self.config.max_retries + 1,
            last: last.unwrap_or_default(),
        })
    }
}

// ---------------------------------------------------------------------------
// Mock backends
// ---------------------------------------------------------------------------

/// Header line that opens every judge prompt: `TASK: <name>`.
pub const TASK_HEADER: &str = "TASK: ";

const FEEDBACK_OPENERS: [&str; 6] = [
    "Your sketch follows the outline of the object closely.",
    "The red sketch encloses most of the object.",
    "The labeling leaves a visible gap between the sketch and the object boundary.",
    "Some red strokes overlay the object instead of tracing its edge.",
    "The sketch stays inside the image boundary.",
    "The strokes do not fully enclose the object.",
];
const FEEDBACK_ADVICE: [&str; 6] = [
    "Try to close the gaps between strokes so the outline is continuous.",
    "Keep your strokes just outside the object edge rather than on top of it.",
    "Slow down around corners to stay closer to the boundary.",
    "Keep doing the good work and stay consistent.",
    "Draw the outline in fewer, longer strokes to keep it enclosed.",
    "Compare your outline with the object edge and tighten the loose parts.",
];

fn digest(seed: u64, parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// Lowercase alphanumeric words of at least four characters.
pub fn content_words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 4)
        .map(str::to_lowercase)
        .collect()
}

/// Split text into sentences on `.`, `!` and `?`.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        cur.push(ch);
        if matches!(ch, '.' | '!' | '?') {
            let s = cur.trim();
            if s.chars().any(char::is_alphanumeric) {
                out.push(s.to_string());
            }
            cur.clear();
        }
    }
    let s = cur.trim();
    if s.chars().any(char::is_alphanumeric) {
        out.push(s.to_string());
    }
    out
}

/// Text between `label` (a line of its own, e.g. `CONTEXT:`) and the next
/// all-caps label line or the end of the prompt.
pub fn section<'a>(prompt: &'a str, label: &str) -> &'a str {
    let Some(start) = prompt.find(&format!("\n{label}\n")) else {
        return "";
    };
    let body = &prompt[start + label.len() + 2..];
    let end = body
        .match_indices('\n')
        .find(|(i, _)| {
            let line = body[i + 1..].lines().next().unwrap_or("");
            line.ends_with(':')
                && line.len() > 1
                && line[..line.len() - 1]
                    .chars()
                    .all(|c| c.is_ascii_uppercase() || c == '_')
        })
        .map(|(i, _)| i)
        .unwrap_or(body.len());
    body[..end].trim()
}

fn overlap(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.intersection(b).count() as f64 / a.len() as f64
}

/// Offline provider that answers feedback prompts with canned sentences
/// chosen by content hash, and judge prompts with simple word-overlap rules.
#[derive(Debug, Clone)]
pub struct MockProvider {
    seed: u64,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn feedback(&self, request: &ChatRequest) -> String {
        let canon = serde_json::to_vec(request).expect("request serializes");
        let h = digest(self.seed, &[&canon]);
        let a = FEEDBACK_OPENERS[h[0] as usize % FEEDBACK_OPENERS.len()];
        let b = FEEDBACK_ADVICE[h[1] as usize % FEEDBACK_ADVICE.len()];
        let score = 1 + h[2] % 4;
        format!("{a} {b} I would rate this labeling {score} out of 4.")
    }

    fn judge(&self, task: &str, prompt: &str) -> String {
        match task {
            "extract_statements" => sentences(section(prompt, "ANSWER:")).join("\n"),
            "verify_statement" => {
                let ctx = content_words(section(prompt, "CONTEXT:"));
                let st = content_words(section(prompt, "STATEMENT:"));
                if overlap(&st, &ctx) >= 0.6 {
                    "yes"
                } else {
                    "no"
                }
                .into()
            }
            "context_relevance" => {
                let item = content_words(section(prompt, "CONTEXT_ITEM:"));
                let mut reference = content_words(section(prompt, "QUESTION:"));
                reference.extend(content_words(section(prompt, "GROUND_TRUTH:")));
                if item.intersection(&reference).count() >= 2 {
                    "yes"
                } else {
                    "no"
                }
                .into()
            }
            "generate_questions" => {
                let k: usize = section(prompt, "COUNT:").parse().unwrap_or(1);
                let answer = section(prompt, "ANSWER:");
                let words: Vec<String> = content_words(answer).into_iter().collect();
                let h = digest(self.seed, &[answer.as_bytes()]);
                (0..k)
                    .map(|i| {
                        let pick = |j: usize| -> &str {
                            if words.is_empty() {
                                "labeling"
                            } else {
                                &words[h[(2 * i + j) % 32] as usize % words.len()]
                            }
                        };
                        format!(
                            "How can I improve my sketch labeling {} and {}?",
                            pick(0),
                            pick(1)
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            other => format!("unsupported task {other}"),
        }
    }
}

impl ChatProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let prompt = request.last_text();
        let text = match prompt.strip_prefix(TASK_HEADER) {
            Some(rest) => {
                let task = rest.lines().next().unwrap_or("").trim();
                self.judge(task, prompt)
            }
            None => self.feedback(request),
        };
        let words = |s: &str| s.split_whitespace().count() as u64;
        Ok(ChatResponse {
            prompt_tokens: Some(request.messages.iter().map(|m| words(&m.text)).sum()),
            completion_tokens: Some(words(&text)),
            text,
            model: format!("mock-{}", self.seed),
        })
    }
}

/// Hashed bag-of-words embedding: every content word adds ±1 to one of
/// `dims` coordinates; the result is unit length (or zero for no words).
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dims: usize,
}

impl MockEmbedder {
    pub fn new(dims: usize) -> Self {
        Self { dims: dims.max(1) }
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let mut v = vec![0.0; self.dims];
        for w in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
        {
            let h = digest(0, &[w.to_lowercase().as_bytes()]);
            let idx = u64::from_le_bytes(h[..8].try_into().unwrap()) as usize % self.dims;
            v[idx] += if h[8] & 1 == 0 { 1.0 } else { -1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeedbackKey {
    pub image_id: String,
    pub object_id: u32,
    pub strategy: PromptStrategy,
}

impl FeedbackKey {
    pub fn stem(&self) -> String {
        format!("{}_{}_{}", self.image_id, self.object_id, self.strategy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderMetadata {
    pub provider: String,
    pub model: String,
    pub latency_ms: u64,
    pub attempts: u32,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub image_id: String,
    pub object_id: u32,
    pub strategy: PromptStrategy,
    pub feedback_text: String,
    pub provider_metadata: ProviderMetadata,
    /// Seconds since the Unix epoch; 0 under deterministic providers.
    pub timestamp: u64,
}

impl FeedbackRecord {
    pub fn key(&self) -> FeedbackKey {
        FeedbackKey {
            image_id: self.image_id.clone(),
            object_id: self.object_id,
            strategy: self.strategy,
        }
    }
}

/// Shareable front end to a provider.
pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    config: ProviderConfig,
    slots: Slots,
    log_dir: Option<PathBuf>,
    secrets: Vec<String>,
}

/// Outcome of a retried call.
pub struct Completed {
    pub response: ChatResponse,
    pub attempts: u32,
    pub latency: Duration,
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>, config: ProviderConfig) -> Self {
        let slots = Slots::new(config.max_parallel.max(1));
        Self {
            provider,
            config,
            slots,
            log_dir: None,
            secrets: Vec::new(),
        }
    }

    /// Write every exchange as JSON under `dir`.
    pub fn with_log_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.log_dir = Some(dir.into());
        self
    }

    /// Values to scrub from anything logged.
    pub fn with_secret(mut self, secret: impl Into<String>) -> Self {
        let s = secret.into();
        if !s.is_empty() {
            self.secrets.push(s);
        }
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn is_deterministic(&self) -> bool {
        self.provider.is_deterministic()
    }

    /// Send one request, retrying transient failures with backoff.
    pub fn chat(&self, request: &ChatRequest) -> Result<Completed, GatewayError> {
        let _slot = self.slots.acquire();
        let started = Instant::now();
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let delay = self.config.backoff(attempt - 1);
                debug!("retry {attempt} after {delay:?}");
                std::thread::sleep(delay);
            }
            match self.provider.complete(request) {
                Ok(response) => {
                    let latency = if self.provider.is_deterministic() {
                        Duration::ZERO
                    } else {
                        started.elapsed()
                    };
                    return Ok(Completed {
                        response,
                        attempts: attempt + 1,
                        latency,
                    });
                }
                Err(e @ GatewayError::Transient { .. }) => {
                    warn!("provider attempt {} failed: {e}", attempt + 1);
                    last = e.to_string();
                }
                Err(e) => return Err(e),
            }
        }
        Err(GatewayError::ExhaustedRetries {
            attempts: self.config.max_retries + 1,
            last,
        })
    }

    /// Text of a retried single-turn call; used by the judges.
    pub fn ask(&self, prompt: &str) -> Result<String, GatewayError> {
        Ok(self.chat(&ChatRequest::user(prompt))?.response.text)
    }

    /// Send a prompt bundle and record the feedback.
    pub fn send_chat(
        &self,
        key: &FeedbackKey,
        bundle: &PromptBundle,
    ) -> Result<FeedbackRecord, GatewayError> {
        let request = ChatRequest::from_bundle(bundle);
        let result = self.chat(&request);
        if let Some(dir) = &self.log_dir {
            self.log_exchange(dir, key, &request, &result)?;
        }
        let done = result?;
        if done.response.text.trim().is_empty() {
            return Err(GatewayError::Malformed("empty feedback text".into()));
        }
        let timestamp = if self.provider.is_deterministic() {
            0
        } else {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        };
        Ok(FeedbackRecord {
            image_id: key.image_id.clone(),
            object_id: key.object_id,
            strategy: key.strategy,
            feedback_text: done.response.text,
            provider_metadata: ProviderMetadata {
                provider: self.provider.name().to_string(),
                model: done.response.model,
                latency_ms: done.latency.as_millis() as u64,
                attempts: done.attempts,
                prompt_tokens: done.response.prompt_tokens,
                completion_tokens: done.response.completion_tokens,
            },
            timestamp,
        })
    }

    fn scrub(&self, s: &str) -> String {
        self.secrets.iter().fold(s.to_string(), |acc, k| {
            acc.replace(k.as_str(), "[REDACTED]")
        })
    }

    fn log_exchange(
        &self,
        dir: &Path,
        key: &FeedbackKey,
        request: &ChatRequest,
        result: &Result<Completed, GatewayError>,
    ) -> Result<(), GatewayError> {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let images: Vec<String> = m
                    .images
                    .iter()
                    .map(|p| format!("png sha256:{}", hex::encode(Sha256::digest(&p.0))))
                    .collect();
                json!({"role": m.role, "text": m.text, "images": images})
            })
            .collect();
        let outcome = match result {
            Ok(c) => json!({"ok": true, "text": c.response.text, "attempts": c.attempts}),
            Err(e) => json!({"ok": false, "error": e.to_string()}),
        };
        let entry = json!({
            "provider": self.provider.name(),
            "endpoint": if self.provider.is_deterministic() { "mock" } else { self.config.endpoint_url.as_str() },
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "headers": {"authorization": "Bearer [REDACTED]"},
            "request": messages,
            "response": outcome,
        });
        let text = self.scrub(&serde_json::to_string_pretty(&entry).expect("json"));
        std::fs::create_dir_all(dir).map_err(|e| GatewayError::Log(e.to_string()))?;
        std::fs::write(dir.join(format!("{}.json", key.stem())), text)
            .map_err(|e| GatewayError::Log(e.to_string()))
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
