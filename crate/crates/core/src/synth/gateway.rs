//! Text-completion backends.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::dataset::derive_seed;
use crate::dsl::library::NamedProgram;
use crate::grid::Action;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: "assistant".into(), content: content.into() }
    }
}

/// What a call is for. Backends may ignore it; the mock uses it to decide
/// what kind of text to return.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Program,
    Revision,
    Summary,
    FsmDescription,
    Action,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub kind: CallKind,
    pub messages: Vec<Message>,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Which of the requested samples this call belongs to.
    pub sample_index: usize,
    /// 0 for the first try, then one more per repair.
    pub attempt: u32,
    /// Distinguishes otherwise identical requests (e.g. rejuvenation rounds).
    pub salt: u64,
}

impl CompletionRequest {
    pub fn new(kind: CallKind, messages: Vec<Message>) -> Self {
        CompletionRequest { kind, messages, max_tokens: 2000, temperature: 1.0, sample_index: 0, attempt: 0, salt: 0 }
    }

    fn key(&self) -> String {
        let body: String = self.messages.iter().map(|m| format!("{}\u{1}{}\u{2}", m.role, m.content)).collect();
        format!("{:?}|{}|{}|{}|{}", self.kind, self.sample_index, self.attempt, self.salt, body)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    /// Per-token log-probabilities, when the backend reports them.
    pub logprobs: Option<Vec<f64>>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Completion { text: text.into(), logprobs: None }
    }

    pub fn logprob_sum(&self) -> Option<f64> {
        self.logprobs.as_ref().map(|v| v.iter().sum())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {0}: {1}")]
    Status(u16, String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("not configured: {0}")]
    NotConfigured(String),
    #[error("no recorded completion for this request")]
    NotRecorded,
}

impl GatewayError {
    fn retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) => true,
            GatewayError::Status(code, _) => *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

pub trait LlmGateway: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError>;

    /// Completed calls so far, successful or not.
    fn calls(&self) -> u64;
}

impl<G: LlmGateway + ?Sized> LlmGateway for Arc<G> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        (**self).complete(req)
    }

    fn calls(&self) -> u64 {
        (**self).calls()
    }
}

/// Counting semaphore bounding concurrent requests.
pub struct InFlight {
    limit: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    pub fn new(limit: usize) -> Self {
        InFlight { limit: limit.max(1), used: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut used = self.used.lock().unwrap();
        while *used >= self.limit {
            used = self.freed.wait(used).unwrap();
        }
        *used += 1;
        drop(used);
        let out = f();
        *self.used.lock().unwrap() -= 1;
        self.freed.notify_one();
        out
    }
}

/// Connection settings for [`ChatCompletionsGateway`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

pub const ENV_ENDPOINT: &str = "ROTE_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "ROTE_LLM_API_KEY";
pub const ENV_MODEL: &str = "ROTE_LLM_MODEL";

impl LiveConfig {
    /// Reads endpoint, key and model from the environment.
    pub fn from_env() -> Result<LiveConfig, GatewayError> {
        let endpoint = std::env::var(ENV_ENDPOINT).map_err(|_| GatewayError::NotConfigured(ENV_ENDPOINT.into()))?;
        let model = std::env::var(ENV_MODEL).map_err(|_| GatewayError::NotConfigured(ENV_MODEL.into()))?;
        Ok(LiveConfig {
            endpoint,
            api_key: std::env::var(ENV_API_KEY).ok(),
            model,
            timeout_secs: 120,
            max_attempts: 4,
            backoff_ms: 500,
            max_in_flight: 32,
        })
    }

    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Client for an OpenAI-style `/chat/completions` endpoint.
pub struct ChatCompletionsGateway {
    config: LiveConfig,
    agent: ureq::Agent,
    in_flight: InFlight,
    calls: AtomicU64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    logprobs: Option<ChatLogprobs>,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatLogprobs {
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    logprob: f64,
}

impl ChatCompletionsGateway {
    pub fn new(config: LiveConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let in_flight = InFlight::new(config.max_in_flight);
        ChatCompletionsGateway { config, agent, in_flight, calls: AtomicU64::new(0) }
    }

    fn once(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": req.messages,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            "logprobs": true,
        });
        let mut call = self.agent.post(self.config.url()).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = call.send_json(&body).map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 400 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(GatewayError::Status(status, text.chars().take(500).collect()));
        }
        let parsed: ChatResponse =
            resp.body_mut().read_json().map_err(|e| GatewayError::Malformed(e.to_string()))?;
        let choice =
            parsed.choices.into_iter().next().ok_or_else(|| GatewayError::Malformed("no choices".into()))?;
        let logprobs = choice.logprobs.and_then(|l| l.content).map(|v| v.into_iter().map(|t| t.logprob).collect());
        Ok(Completion { text: choice.message.content.unwrap_or_default(), logprobs })
    }
}

impl LlmGateway for ChatCompletionsGateway {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        self.in_flight.run(|| {
            let mut delay = Duration::from_millis(self.config.backoff_ms);
            let mut tries = 0;
            loop {
                tries += 1;
                self.calls.fetch_add(1, Ordering::Relaxed);
                match self.once(req) {
                    Err(e) if e.retryable() && tries < self.config.max_attempts => {
                        log::warn!("gateway call failed ({e}); retrying in {delay:?}");
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                    other => return other,
                }
            }
        })
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Offline backend answering from a program library.
///
/// Program requests return a library entry chosen by a seeded permutation
/// indexed by sample, attempt and salt; action requests return an action
/// word; summaries and FSM descriptions return canned text. An optional
/// latency is slept on every call.
pub struct MockGateway {
    library: Vec<NamedProgram>,
    seed: u64,
    latency: Duration,
    summary: String,
    calls: AtomicU64,
}

pub const CANNED_SUMMARY: &str = "The agent moves steadily in one direction until it meets a wall, \
then turns and continues along a new direction. It never picks up blocks.";

const CANNED_FSM: &str = "States: moving, turning. In moving, step forward unless a wall is ahead; \
then switch to turning, which picks the next direction and returns to moving.";

impl MockGateway {
    pub fn new(library: Vec<NamedProgram>, seed: u64) -> Self {
        MockGateway { library, seed, latency: Duration::ZERO, summary: CANNED_SUMMARY.into(), calls: AtomicU64::new(0) }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_summary(mut self, summary: impl Into<String>) -> Self {
        self.summary = summary.into();
        self
    }

    fn pick(&self, req: &CompletionRequest) -> usize {
        let n = self.library.len();
        let round = (req.sample_index / n) as u64;
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[req.salt, round, req.attempt as u64]));
        order.shuffle(&mut rng);
        order[req.sample_index % n]
    }
}

impl LlmGateway for MockGateway {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let text = match req.kind {
            CallKind::Program | CallKind::Revision => {
                if self.library.is_empty() {
                    return Err(GatewayError::NotConfigured("empty mock library".into()));
                }
                let p = &self.library[self.pick(req)];
                format!("Here is the program.\n```rote\n{}```\n", p.program.source())
            }
            CallKind::Summary => self.summary.clone(),
            CallKind::FsmDescription => CANNED_FSM.to_string(),
            CallKind::Action => {
                let k = derive_seed(self.seed, &[req.salt, req.sample_index as u64, req.messages.len() as u64]);
                Action::ALL[(k % Action::COUNT as u64) as usize].name().to_string()
            }
        };
        Ok(Completion::text(text))
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Returns pre-loaded completions in order; for fault-injection tests.
pub struct QueueGateway {
    queue: Mutex<VecDeque<Result<Completion, GatewayError>>>,
    calls: AtomicU64,
}

impl QueueGateway {
    pub fn new(items: impl IntoIterator<Item = Result<Completion, GatewayError>>) -> Self {
        QueueGateway { queue: Mutex::new(items.into_iter().collect()), calls: AtomicU64::new(0) }
    }

    pub fn texts<S: Into<String>>(items: impl IntoIterator<Item = S>) -> Self {
        Self::new(items.into_iter().map(|s| Ok(Completion::text(s))))
    }
}

impl LlmGateway for QueueGateway {
    fn complete(&self, _req: &CompletionRequest) -> Result<Completion, GatewayError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.queue.lock().unwrap().pop_front().unwrap_or(Err(GatewayError::NotRecorded))
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// One request/response pair as persisted for audit and replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: CompletionRequest,
    pub response: Result<Completion, String>,
}

/// Wraps a gateway and keeps every exchange.
pub struct RecordingGateway<G> {
    inner: G,
    log: Mutex<Vec<Exchange>>,
}

impl<G: LlmGateway> RecordingGateway<G> {
    pub fn new(inner: G) -> Self {
        RecordingGateway { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().unwrap().clone()
    }

    /// Writes the exchanges as JSON lines.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::new();
        for e in self.log.lock().unwrap().iter() {
            out.push_str(&serde_json::to_string(e).map_err(std::io::Error::other)?);
            out.push('\n');
        }
        std::fs::write(path, out)
    }
}

impl<G: LlmGateway> LlmGateway for RecordingGateway<G> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        let r = self.inner.complete(req);
        let response = r.clone().map_err(|e| e.to_string());
        self.log.lock().unwrap().push(Exchange { request: req.clone(), response });
        r
    }

    fn calls(&self) -> u64 {
        self.inner.calls()
    }
}

/// Answers from a saved transcript; unknown requests fail.
pub struct ReplayGateway {
    table: HashMap<String, Result<Completion, String>>,
    calls: AtomicU64,
}

impl ReplayGateway {
    pub fn from_exchanges(exchanges: impl IntoIterator<Item = Exchange>) -> Self {
        let table = exchanges.into_iter().map(|e| (e.request.key(), e.response)).collect();
        ReplayGateway { table, calls: AtomicU64::new(0) }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut ex = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            ex.push(serde_json::from_str(line).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?);
        }
        Ok(Self::from_exchanges(ex))
    }
}

impl LlmGateway for ReplayGateway {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        match self.table.get(&req.key()) {
            Some(Ok(c)) => Ok(c.clone()),
            Some(Err(e)) => Err(GatewayError::Transport(e.clone())),
            None => Err(GatewayError::NotRecorded),
        }
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}
