//! Generation and embedding backends.
//!
//! Wire protocol: `POST generation_url` with
//! `{"id","prompt","max_new_tokens","stop","layout"?}` answered by
//! `{"text","token_count"}`; `POST embedding_url` with `{"texts","model"}`
//! answered by `{"vectors"}`. A URL with the `mock:` scheme selects the
//! in-process [`MockBackend`] instead.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::promptkit::{PromptLayout, TokenCounter};
use crate::retrieval::EmbeddingVector;

pub const DEFAULT_EMBEDDING_MODEL: &str = "paraphrase-mpnet-base-v2";
pub const DEFAULT_MAX_NEW_TOKENS: usize = 100;
pub const MOCK_EMBEDDING_DIM: usize = 32;
const MARKER: &str = "Paraphrase:";
const INPUT_MARKER: &str = "Input:";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("backend rejected a prompt of {n} tokens as over budget")]
    OverBudget { n: usize },
    #[error("backend rejected request: {0}")]
    Rejected(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// Only failures to reach the service are retried.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Timeout(_) | BackendError::Transport(_))
    }
}

type BResult<T> = std::result::Result<T, BackendError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub generation_url: String,
    pub embedding_url: String,
    pub embedding_model: String,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub retry_limit: usize,
    /// Sent as a bearer token when set. Never written to snapshots.
    #[serde(skip_serializing)]
    pub api_token: Option<String>,
    /// Seed for the mock backend.
    pub seed: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            generation_url: "mock:echo".into(),
            embedding_url: "mock:hash".into(),
            embedding_model: DEFAULT_EMBEDDING_MODEL.into(),
            timeout_ms: 30_000,
            max_in_flight: 4,
            retry_limit: 2,
            api_token: None,
            seed: 0,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> BResult<()> {
        if self.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be at least 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::Config("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    /// Applies `RAPT_GENERATION_URL`, `RAPT_EMBEDDING_URL` and `RAPT_API_TOKEN`.
    pub fn with_env_overrides(mut self, var: impl Fn(&str) -> Option<String>) -> Self {
        if let Some(v) = var("RAPT_GENERATION_URL") {
            self.generation_url = v;
        }
        if let Some(v) = var("RAPT_EMBEDDING_URL") {
            self.embedding_url = v;
        }
        if let Some(v) = var("RAPT_API_TOKEN") {
            self.api_token = Some(v);
        }
        self
    }

    pub fn with_process_env(self) -> Self {
        self.with_env_overrides(|k| std::env::var(k).ok())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub id: String,
    pub prompt: String,
    pub max_new_tokens: usize,
    pub stop: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<PromptLayout>,
    /// Prompt length in backend tokens; reported on over-budget rejection.
    #[serde(skip)]
    pub prompt_n: usize,
}

impl GenerationRequest {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            prompt: prompt.into(),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            stop: vec!["\n".into()],
            layout: None,
            prompt_n: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub token_count: usize,
    #[serde(skip)]
    pub latency: Duration,
}

/// Cuts `text` at the earliest occurrence of any stop string.
pub fn truncate_at_stop<'a>(text: &'a str, stop: &[String]) -> &'a str {
    let cut = stop
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    &text[..cut]
}

pub trait Generator: Send + Sync {
    /// Raw completion, before stop truncation.
    fn complete(&self, req: &GenerationRequest) -> BResult<GenerationResponse>;

    /// Tokens of `text` as the backend counts them.
    fn count_tokens(&self, text: &str) -> BResult<usize> {
        Ok(text.split_whitespace().count())
    }

    fn generate(&self, req: &GenerationRequest) -> BResult<GenerationResponse> {
        if req.prompt.is_empty() {
            return Err(BackendError::Rejected("empty prompt".into()));
        }
        let start = Instant::now();
        let mut resp = self.complete(req)?;
        let cut = truncate_at_stop(&resp.text, &req.stop).len();
        resp.text.truncate(cut);
        resp.latency = start.elapsed();
        Ok(resp)
    }
}

pub trait Embedder: Send + Sync {
    fn embed_batch(&self, texts: &[String]) -> BResult<Vec<EmbeddingVector>>;

    /// Embeds `texts` and checks alignment and a common dimension.
    fn embed(&self, texts: &[String]) -> BResult<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(BackendError::Rejected("no texts to embed".into()));
        }
        let out = self.embed_batch(texts)?;
        if out.len() != texts.len() {
            return Err(BackendError::Malformed(format!(
                "{} vectors for {} texts",
                out.len(),
                texts.len()
            )));
        }
        let dim = out[0].dim();
        if dim == 0 || out.iter().any(|v| v.dim() != dim) {
            return Err(BackendError::Malformed("vector dimensions disagree within a batch".into()));
        }
        Ok(out)
    }
}

/// Token counts from a generator, for prompt length accounting.
pub struct GeneratorCounter<'a>(pub &'a dyn Generator);

impl TokenCounter for GeneratorCounter<'_> {
    fn count_tokens(&self, text: &str) -> crate::Result<usize> {
        Ok(self.0.count_tokens(text)?)
    }
}

/// Embeds `texts` in chunks of at most `batch` texts.
pub fn embed_all(embedder: &dyn Embedder, texts: &[String], batch: usize) -> BResult<Vec<EmbeddingVector>> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch.max(1)) {
        let part = embedder.embed(chunk)?;
        if let (Some(a), Some(b)) = (out.first(), part.first()) {
            if EmbeddingVector::dim(a) != b.dim() {
                return Err(BackendError::Malformed("vector dimensions disagree across batches".into()));
            }
        }
        out.extend(part);
    }
    Ok(out)
}

/// Runs `reqs` with at most `max_in_flight` outstanding; results keep
/// submission order.
pub fn generate_batch(
    gen: &dyn Generator,
    reqs: &[GenerationRequest],
    max_in_flight: usize,
) -> Vec<BResult<GenerationResponse>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<BResult<GenerationResponse>>>> = Mutex::new(vec![None; reqs.len()]);
    let workers = max_in_flight.max(1).min(reqs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(req) = reqs.get(i) else { break };
                let r = gen.generate(req);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every request ran"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MockGen {
    Echo,
}

/// Deterministic in-process backend.
///
/// Echo generation returns the first line after the final `Paraphrase:`
/// marker (minus a parenthesized class tag); when that is blank, as it is
/// for any prompt ending in the marker, it returns the last `Input:` line.
/// Embeddings sum a seeded random vector per lowercase word and normalize,
/// so texts sharing words land close together.
#[derive(Debug)]
pub struct MockBackend {
    mode: MockGen,
    seed: u64,
    dim: usize,
    delay: Duration,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            mode: MockGen::Echo,
            seed,
            dim: MOCK_EMBEDDING_DIM,
            delay: Duration::ZERO,
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    /// Parses `mock:echo`, `mock:hash` or `mock:hash/<dim>`.
    pub fn from_url(url: &str, seed: u64) -> BResult<Self> {
        let rest = url
            .strip_prefix("mock:")
            .ok_or_else(|| BackendError::Config(format!("not a mock url: {url}")))?;
        let mut m = Self::new(seed);
        match rest.split_once('/') {
            None if matches!(rest, "" | "echo" | "hash") => {}
            Some(("hash", d)) => {
                m.dim = d
                    .parse()
                    .ok()
                    .filter(|&d| d > 0)
                    .ok_or_else(|| BackendError::Config(format!("bad mock dimension in {url}")))?;
            }
            _ => return Err(BackendError::Config(format!("unknown mock backend {url}"))),
        }
        Ok(m)
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim.max(1);
        self
    }

    /// Sleeps this long inside each generation call.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest number of simultaneous generation calls observed.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn echo(prompt: &str) -> String {
        let after = prompt
            .rfind(MARKER)
            .map(|i| &prompt[i + MARKER.len()..])
            .unwrap_or("");
        let mut line = after.lines().next().unwrap_or("").trim();
        if line.starts_with('(') {
            if let Some(close) = line.find(')') {
                if !line[1..close].contains(char::is_whitespace) {
                    line = line[close + 1..].trim();
                }
            }
        }
        if !line.is_empty() {
            return format!(" {line}");
        }
        let query = prompt
            .rfind(INPUT_MARKER)
            .map(|i| &prompt[i + INPUT_MARKER.len()..])
            .unwrap_or(prompt);
        format!(" {}", query.lines().next().unwrap_or("").trim())
    }

    fn word_vector(&self, word: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.as_bytes()) ^ self.seed);
        (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0.0f64; self.dim];
        let lower = text.to_lowercase();
        let mut words: Vec<&str> = lower.split_whitespace().collect();
        if words.is_empty() {
            words.push("");
        }
        for w in words {
            for (a, x) in acc.iter_mut().zip(self.word_vector(w)) {
                *a += x;
            }
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            acc[0] = 1.0;
        } else {
            acc.iter_mut().for_each(|x| *x /= norm);
        }
        EmbeddingVector(acc.into_iter().map(|x| x as f32).collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl Generator for MockBackend {
    fn complete(&self, req: &GenerationRequest) -> BResult<GenerationResponse> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let text = match self.mode {
            MockGen::Echo => Self::echo(&req.prompt),
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        let token_count = text.split_whitespace().count();
        Ok(GenerationResponse {
            text,
            token_count,
            latency: Duration::ZERO,
        })
    }
}

impl Embedder for MockBackend {
    fn embed_batch(&self, texts: &[String]) -> BResult<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// JSON-over-HTTP client.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    cfg: BackendConfig,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

impl HttpBackend {
    pub fn new(cfg: BackendConfig) -> BResult<Self> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { client, cfg })
    }

    fn post_once<B: Serialize, R: serde::de::DeserializeOwned>(
        &self,
        url: &str,
        body: &B,
        prompt_n: usize,
    ) -> BResult<R> {
        let mut req = self.client.post(url).json(body);
        if let Some(tok) = &self.cfg.api_token {
            req = req.bearer_auth(tok);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout(self.cfg.timeout())
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if status == reqwest::StatusCode::PAYLOAD_TOO_LARGE {
            return Err(BackendError::OverBudget { n: prompt_n });
        }
        if status.is_server_error() {
            return Err(BackendError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(BackendError::Rejected(format!("HTTP {status}: {text}")));
        }
        let bytes = resp.bytes().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout(self.cfg.timeout())
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        serde_json::from_slice(&bytes).map_err(|e| BackendError::Malformed(e.to_string()))
    }

    fn post<B: Serialize, R: serde::de::DeserializeOwned>(&self, url: &str, body: &B, prompt_n: usize) -> BResult<R> {
        let mut attempt = 0;
        loop {
            match self.post_once(url, body, prompt_n) {
                Err(e) if e.is_retryable() && attempt < self.cfg.retry_limit => {
                    attempt += 1;
                    log::warn!("{url}: {e}; retry {attempt}/{}", self.cfg.retry_limit);
                }
                other => return other,
            }
        }
    }
}

impl Generator for HttpBackend {
    fn complete(&self, req: &GenerationRequest) -> BResult<GenerationResponse> {
        self.post(&self.cfg.generation_url, req, req.prompt_n)
    }
}

impl Embedder for HttpBackend {
    fn embed_batch(&self, texts: &[String]) -> BResult<Vec<EmbeddingVector>> {
        let body = serde_json::json!({ "texts": texts, "model": self.cfg.embedding_model });
        let r: EmbedResponse = self.post(&self.cfg.embedding_url, &body, 0)?;
        Ok(r.vectors.into_iter().map(EmbeddingVector).collect())
    }
}

/// A generator and an embedder resolved from a config.
pub struct Backend {
    pub generator: Box<dyn Generator>,
    pub embedder: Box<dyn Embedder>,
}

impl Backend {
    pub fn connect(cfg: &BackendConfig) -> BResult<Self> {
        cfg.validate()?;
        let generator: Box<dyn Generator> = if cfg.generation_url.starts_with("mock:") {
            Box::new(MockBackend::from_url(&cfg.generation_url, cfg.seed)?)
        } else {
            Box::new(HttpBackend::new(cfg.clone())?)
        };
        let embedder: Box<dyn Embedder> = if cfg.embedding_url.starts_with("mock:") {
            Box::new(MockBackend::from_url(&cfg.embedding_url, cfg.seed)?)
        } else {
            Box::new(HttpBackend::new(cfg.clone())?)
        };
        Ok(Self { generator, embedder })
    }
}
