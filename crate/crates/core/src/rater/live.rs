use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::Value;

use super::backend::{BackendError, RaterBackend, RatingCall};
use super::RaterError;

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const ENDPOINT_ENV: &str = "DEMFEED_CHAT_URL";
pub const TOKEN_ENVS: [&str; 2] = ["DEMFEED_API_KEY", "OPENAI_API_KEY"];

/// Token bucket limiting request starts to `per_minute`, with bursts up to
/// `burst`.
#[derive(Debug)]
pub struct TokenBucket {
    rate_per_sec: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(per_minute: u32, burst: u32) -> Self {
        let burst = f64::from(burst.max(1));
        Self {
            rate_per_sec: f64::from(per_minute.max(1)) / 60.0,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    /// Time to wait before a token is available, taking it if none.
    fn try_take(&self) -> Option<Duration> {
        let mut state = self.state.lock().expect("bucket lock");
        let now = Instant::now();
        let refill = now.duration_since(state.1).as_secs_f64() * self.rate_per_sec;
        state.0 = (state.0 + refill).min(self.burst);
        state.1 = now;
        if state.0 >= 1.0 {
            state.0 -= 1.0;
            None
        } else {
            Some(Duration::from_secs_f64((1.0 - state.0) / self.rate_per_sec))
        }
    }

    /// Block until a request may start.
    pub fn acquire(&self) {
        while let Some(wait) = self.try_take() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub endpoint: String,
    pub token: String,
    pub requests_per_minute: u32,
    pub timeout: Duration,
}

impl LiveConfig {
    /// Endpoint from `DEMFEED_CHAT_URL` (default: OpenAI), token from
    /// `DEMFEED_API_KEY` or `OPENAI_API_KEY`.
    pub fn from_env(requests_per_minute: u32) -> Result<Self, RaterError> {
        let token = TOKEN_ENVS
            .iter()
            .find_map(|k| std::env::var(k).ok().filter(|v| !v.is_empty()))
            .ok_or_else(|| RaterError::Config(format!("set one of {}", TOKEN_ENVS.join(" / "))))?;
        Ok(Self {
            endpoint: std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| DEFAULT_ENDPOINT.to_string()),
            token,
            requests_per_minute,
            timeout: Duration::from_secs(120),
        })
    }
}

/// Chat-completions over HTTP.
pub struct LiveBackend {
    config: LiveConfig,
    agent: ureq::Agent,
    limiter: TokenBucket,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = TokenBucket::new(config.requests_per_minute, config.requests_per_minute.clamp(1, 10));
        Self { config, agent, limiter }
    }
}

/// First choice's message content from a chat-completions response body.
pub(crate) fn extract_content(body: &Value) -> Option<String> {
    body.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

impl RaterBackend for LiveBackend {
    fn complete(&self, call: &RatingCall) -> Result<String, BackendError> {
        self.limiter.acquire();
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.config.token))
            .send_json(&call.request)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            408 | 409 | 429 | 500..=599 => {
                return Err(BackendError::Transport(format!("HTTP {status}: {text}")));
            }
            _ => return Err(BackendError::Fatal(format!("HTTP {status}: {text}"))),
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| BackendError::Fatal(format!("bad JSON: {e}")))?;
        extract_content(&body).ok_or_else(|| BackendError::Fatal("response has no choices[0].message.content".into()))
    }
}
