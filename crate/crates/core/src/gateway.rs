//! LLM dispatch: an OpenAI-compatible chat-completions client with retry,
//! and a deterministic mock provider for offline runs.

use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use tracing::{debug, warn};

use crate::cost::{estimate_image_tokens, heuristic_text_tokens};
use crate::prompt::SimplificationPrompt;
use crate::PathMode;

pub const MAX_RETRIES_LIMIT: u32 = 5;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
/// Characters of source text echoed by the mock provider.
pub const MOCK_ECHO_CHARS: usize = 40;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("provider misconfigured: {0}")]
    Misconfigured(String),
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("provider {model:?} does not accept image input")]
    CapabilityMismatch { model: String },
    #[error("gave up after {attempts} attempts: {last_error}")]
    ExhaustedRetries { attempts: u32, last_error: String },
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("provider rejected request ({status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("cannot read slide image: {0}")]
    Image(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    OpenaiCompatible,
    Mock,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::OpenaiCompatible => "openai_compatible",
            ProviderKind::Mock => "mock",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider_kind: ProviderKind,
    /// Base URL; requests go to `<endpoint_url>/chat/completions`.
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub temperature: f32,
    /// Whether the model accepts image content parts.
    pub supports_images: bool,
}

impl ProviderConfig {
    pub fn mock() -> Self {
        Self {
            provider_kind: ProviderKind::Mock,
            endpoint_url: String::new(),
            model_name: "mock".to_string(),
            api_key_env: String::new(),
            timeout_s: 30.0,
            max_retries: 0,
            temperature: 0.0,
            supports_images: true,
        }
    }

    /// Checks the static invariants and, for real providers, that the
    /// credential variable is set.
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(GatewayError::Misconfigured(format!(
                "timeout_s must be positive, got {}",
                self.timeout_s
            )));
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(GatewayError::Misconfigured(format!(
                "max_retries must be at most {MAX_RETRIES_LIMIT}, got {}",
                self.max_retries
            )));
        }
        if self.provider_kind == ProviderKind::OpenaiCompatible {
            if self.model_name.trim().is_empty() {
                return Err(GatewayError::Misconfigured("model name is empty".into()));
            }
            reqwest::Url::parse(&self.endpoint_url).map_err(|e| {
                GatewayError::Misconfigured(format!("endpoint {:?}: {e}", self.endpoint_url))
            })?;
            self.api_key()?;
        }
        Ok(())
    }

    fn api_key(&self) -> Result<String, GatewayError> {
        match std::env::var(&self.api_key_env) {
            Ok(key) if !key.trim().is_empty() => Ok(key),
            _ => Err(GatewayError::AuthFailure(format!(
                "credential variable {:?} is not set",
                self.api_key_env
            ))),
        }
    }

    fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.endpoint_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub latency_ms: u64,
    pub provider_kind: ProviderKind,
}

/// Deterministic stand-in provider. The reply echoes the first 40 characters
/// of the source text (or the image size) and reports the cost-model
/// estimate as prompt tokens.
pub fn mock_complete(prompt: &SimplificationPrompt) -> ChatResponse {
    let (echo, prompt_tokens) = match (prompt.mode, &prompt.source_text, &prompt.image_ref) {
        (PathMode::ImagePath, _, Some(img)) => (
            format!("IMAGE:{}x{}", img.width_px, img.height_px),
            estimate_image_tokens(img.width_px, img.height_px)
                .ok()
                .map(|e| e.tokens),
        ),
        (_, Some(src), _) => (
            src.chars().take(MOCK_ECHO_CHARS).collect(),
            Some(heuristic_text_tokens(src)),
        ),
        _ => (String::new(), None),
    };
    ChatResponse {
        text: format!("SIMPLIFIED({echo})"),
        prompt_tokens,
        completion_tokens: None,
        latency_ms: 0,
        provider_kind: ProviderKind::Mock,
    }
}

/// Exponential backoff `base * 2^attempt` with symmetric jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub jitter: f64,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_millis(500),
            jitter: 0.2,
        }
    }
}

impl Backoff {
    /// Delay before retry number `attempt` (0-based), without jitter.
    pub fn nominal(&self, attempt: u32) -> Duration {
        self.base.saturating_mul(1u32 << attempt.min(16))
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1.0 + rand::rng().random_range(-self.jitter..=self.jitter);
        self.nominal(attempt).mul_f64(factor.max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: MessageContent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MessageContent {
    Text(String),
    Parts(Vec<ContentPart>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

/// Builds the chat-completions body: the preamble as the system message and
/// the payload (source text, or the slide as a base64 data URL) as the user
/// message, both copied unchanged from the prompt.
pub fn build_request(
    prompt: &SimplificationPrompt,
    model: &str,
    temperature: f32,
) -> Result<ChatRequest, GatewayError> {
    let user = match (prompt.mode, &prompt.source_text, &prompt.image_ref) {
        (PathMode::TextPath, Some(src), _) => MessageContent::Text(src.clone()),
        (PathMode::ImagePath, _, Some(img)) => {
            let bytes = std::fs::read(&img.path)
                .map_err(|e| GatewayError::Image(format!("{}: {e}", img.path.display())))?;
            MessageContent::Parts(vec![ContentPart::ImageUrl {
                image_url: ImageUrl {
                    url: format!(
                        "data:{};base64,{}",
                        img.media_type.content_type(),
                        STANDARD.encode(bytes)
                    ),
                },
            }])
        }
        _ => {
            return Err(GatewayError::Misconfigured(format!(
                "{} prompt without its payload",
                prompt.mode
            )))
        }
    };
    Ok(ChatRequest {
        model: model.to_string(),
        messages: vec![
            ChatMessage {
                role: "system".into(),
                content: MessageContent::Text(prompt.preamble.clone()),
            },
            ChatMessage {
                role: "user".into(),
                content: user,
            },
        ],
        temperature,
    })
}

#[derive(Debug, Deserialize)]
struct CompletionBody {
    #[serde(default)]
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

enum Attempt {
    Done(ChatResponse),
    Transient(String),
}

/// Shared dispatcher. Cloning is cheap; clones share the HTTP connection
/// pool and the in-flight limit.
#[derive(Debug, Clone)]
pub struct Gateway {
    client: reqwest::Client,
    permits: Arc<Semaphore>,
    max_in_flight: usize,
    backoff: Backoff,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_IN_FLIGHT)
    }
}

impl Gateway {
    pub fn new(max_in_flight: usize) -> Self {
        let max_in_flight = max_in_flight.max(1);
        Self {
            client: reqwest::Client::new(),
            permits: Arc::new(Semaphore::new(max_in_flight)),
            max_in_flight,
            backoff: Backoff::default(),
        }
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    pub async fn complete(
        &self,
        prompt: &SimplificationPrompt,
        config: &ProviderConfig,
    ) -> Result<ChatResponse, GatewayError> {
        config.validate()?;
        if prompt.mode == PathMode::ImagePath && !config.supports_images {
            return Err(GatewayError::CapabilityMismatch {
                model: config.model_name.clone(),
            });
        }
        match config.provider_kind {
            ProviderKind::Mock => Ok(mock_complete(prompt)),
            ProviderKind::OpenaiCompatible => self.complete_http(prompt, config).await,
        }
    }

    async fn complete_http(
        &self,
        prompt: &SimplificationPrompt,
        config: &ProviderConfig,
    ) -> Result<ChatResponse, GatewayError> {
        let key = config.api_key()?;
        let body = build_request(prompt, &config.model_name, config.temperature)?;
        let url = config.completions_url();
        let timeout = Duration::from_secs_f64(config.timeout_s);
        let started = Instant::now();
        let attempts = config.max_retries + 1;
        let mut last_error = String::new();

        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.backoff.delay(attempt - 1);
                debug!(attempt, ?delay, "retrying chat completion");
                tokio::time::sleep(delay).await;
            }
            match self.attempt(&url, &key, &body, timeout, started).await? {
                Attempt::Done(resp) => return Ok(resp),
                Attempt::Transient(err) => {
                    warn!(attempt = attempt + 1, error = %err, "transient provider failure");
                    last_error = err;
                }
            }
        }
        Err(GatewayError::ExhaustedRetries {
            attempts,
            last_error,
        })
    }

    async fn attempt(
        &self,
        url: &str,
        key: &str,
        body: &ChatRequest,
        timeout: Duration,
        started: Instant,
    ) -> Result<Attempt, GatewayError> {
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|e| GatewayError::Misconfigured(e.to_string()))?;
        let sent = self
            .client
            .post(url)
            .bearer_auth(key)
            .timeout(timeout)
            .json(body)
            .send()
            .await;
        let resp = match sent {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Err(GatewayError::Timeout(timeout)),
            Err(e) => return Ok(Attempt::Transient(format!("network error: {e}"))),
        };
        let status = resp.status();
        if status.is_success() {
            let parsed: CompletionBody = match resp.json().await {
                Ok(b) => b,
                Err(e) if e.is_timeout() => return Err(GatewayError::Timeout(timeout)),
                Err(e) => return Err(GatewayError::MalformedResponse(e.to_string())),
            };
            let text = parsed
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .filter(|t| !t.trim().is_empty())
                .ok_or_else(|| GatewayError::MalformedResponse("no message content".into()))?;
            let usage = parsed.usage;
            return Ok(Attempt::Done(ChatResponse {
                text,
                prompt_tokens: usage.as_ref().and_then(|u| u.prompt_tokens),
                completion_tokens: usage.as_ref().and_then(|u| u.completion_tokens),
                latency_ms: started.elapsed().as_millis() as u64,
                provider_kind: ProviderKind::OpenaiCompatible,
            }));
        }
        let code = status.as_u16();
        let text = resp.text().await.unwrap_or_default();
        match code {
            401 | 403 => Err(GatewayError::AuthFailure(format!("HTTP {code}: {text}"))),
            429 | 500..=599 => Ok(Attempt::Transient(format!("HTTP {code}: {text}"))),
            _ => Err(GatewayError::Rejected { status: code, body: text }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deck::MediaType;
    use crate::prompt::{ImageRef, DEFAULT_PREAMBLE};

    fn text_prompt(src: &str) -> SimplificationPrompt {
        SimplificationPrompt {
            mode: PathMode::TextPath,
            preamble: DEFAULT_PREAMBLE.into(),
            source_text: Some(src.into()),
            image_ref: None,
            truncated: false,
        }
    }

    fn image_prompt(w: u32, h: u32) -> SimplificationPrompt {
        SimplificationPrompt {
            mode: PathMode::ImagePath,
            preamble: DEFAULT_PREAMBLE.into(),
            source_text: None,
            image_ref: Some(ImageRef {
                slide_id: "d-000".into(),
                path: "/nonexistent.png".into(),
                media_type: MediaType::Png,
                width_px: w,
                height_px: h,
            }),
            truncated: false,
        }
    }

    #[test]
    fn mock_echoes_short_source() {
        let r = mock_complete(&text_prompt("abc"));
        assert_eq!(r.text, "SIMPLIFIED(abc)");
        assert_eq!(r.prompt_tokens, Some(1));
        assert_eq!(r.latency_ms, 0);
    }

    #[test]
    fn mock_truncates_echo_at_forty_chars() {
        let src = "0123456789".repeat(6);
        let r = mock_complete(&text_prompt(&src));
        assert_eq!(r.text, format!("SIMPLIFIED({})", &src[..40]));
    }

    #[test]
    fn mock_image_reports_tiling_cost() {
        let r = mock_complete(&image_prompt(1500, 844));
        assert_eq!(r.text, "SIMPLIFIED(IMAGE:1500x844)");
        assert_eq!(r.prompt_tokens, Some(1105));
    }

    #[test]
    fn mock_is_deterministic() {
        let p = text_prompt("Step 4: Find VM2 IP Address");
        assert_eq!(mock_complete(&p), mock_complete(&p));
    }

    #[tokio::test]
    async fn image_prompt_to_text_only_provider_is_rejected() {
        let cfg = ProviderConfig {
            supports_images: false,
            ..ProviderConfig::mock()
        };
        let err = Gateway::default()
            .complete(&image_prompt(512, 512), &cfg)
            .await
            .unwrap_err();
        assert!(matches!(err, GatewayError::CapabilityMismatch { .. }));
    }

    #[test]
    fn config_invariants() {
        let mut cfg = ProviderConfig::mock();
        assert!(cfg.validate().is_ok());
        cfg.timeout_s = 0.0;
        assert!(matches!(cfg.validate(), Err(GatewayError::Misconfigured(_))));
        cfg.timeout_s = 1.0;
        cfg.max_retries = 6;
        assert!(matches!(cfg.validate(), Err(GatewayError::Misconfigured(_))));
    }

    #[test]
    fn missing_credential_is_auth_failure() {
        let cfg = ProviderConfig {
            provider_kind: ProviderKind::OpenaiCompatible,
            endpoint_url: "http://127.0.0.1:9".into(),
            model_name: "gpt-4".into(),
            api_key_env: "SLIDEWISE_TEST_UNSET_KEY_VAR".into(),
            ..ProviderConfig::mock()
        };
        assert!(matches!(cfg.validate(), Err(GatewayError::AuthFailure(_))));
    }

    #[test]
    fn backoff_doubles_within_jitter() {
        let b = Backoff::default();
        assert_eq!(b.nominal(0), Duration::from_millis(500));
        assert_eq!(b.nominal(2), Duration::from_millis(2000));
        for attempt in 0..4 {
            let d = b.delay(attempt).as_secs_f64();
            let n = b.nominal(attempt).as_secs_f64();
            assert!(d >= n * 0.8 - 1e-9 && d <= n * 1.2 + 1e-9, "{d} vs {n}");
        }
    }

    #[test]
    fn text_request_carries_prompt_fields_unchanged() {
        let p = text_prompt("ifconfig\n  eth0");
        let req = build_request(&p, "gpt-4", 0.0).unwrap();
        let json = serde_json::to_value(&req).unwrap();
        assert_eq!(json["model"], "gpt-4");
        assert_eq!(json["temperature"], 0.0);
        assert_eq!(json["messages"][0]["role"], "system");
        assert_eq!(json["messages"][0]["content"], DEFAULT_PREAMBLE);
        assert_eq!(json["messages"][1]["role"], "user");
        assert_eq!(json["messages"][1]["content"], "ifconfig\n  eth0");
    }
}
