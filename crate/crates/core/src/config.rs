//! TOML configuration.
//!
//! ```toml
//! data_dir = "./data"
//!
//! [provider]
//! kind = "openai_compatible"        # or "mock"
//! endpoint = "https://api.openai.com/v1"
//! text_model = "gpt-4"
//! image_model = "gpt-4o-mini"
//! api_key_env = "OPENAI_API_KEY"
//!
//! [prompt]
//! preamble = "..."
//!
//! [cost]
//! tokenizer_vocab = "cl100k_base.tiktoken"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ProviderConfig, ProviderKind, DEFAULT_MAX_IN_FLIGHT};
use crate::prompt::PromptConfig;
use crate::PathMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {reason}")]
    Parse { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub data_dir: PathBuf,
    pub provider: ProviderSettings,
    pub prompt: PromptConfig,
    pub cost: CostSettings,
    pub ocr: OcrSettings,
    pub server: ServerSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            provider: ProviderSettings::default(),
            prompt: PromptConfig::default(),
            cost: CostSettings::default(),
            ocr: OcrSettings::default(),
            server: ServerSettings::default(),
        }
    }
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut settings = Self::from_toml(&text).map_err(|reason| ConfigError::Parse {
            path: path.display().to_string(),
            reason,
        })?;
        // Relative paths in the file are relative to the file itself.
        if let Some(base) = path.parent() {
            settings.data_dir = base.join(&settings.data_dir);
            if let Some(vocab) = settings.cost.tokenizer_vocab.take() {
                settings.cost.tokenizer_vocab = Some(base.join(vocab));
            }
        }
        Ok(settings)
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub text_model: String,
    pub image_model: String,
    pub api_key_env: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub temperature: f32,
    /// Whether `image_model` accepts image input.
    pub image_capable: bool,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: "https://api.openai.com/v1".to_string(),
            text_model: "gpt-4".to_string(),
            image_model: "gpt-4o-mini".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            timeout_s: 60.0,
            max_retries: 3,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            temperature: 0.0,
            image_capable: true,
        }
    }
}

impl ProviderSettings {
    pub fn mock() -> Self {
        Self::default()
    }

    /// Provider configuration for one pipeline path. The text model is
    /// treated as text-only.
    pub fn for_path(&self, mode: PathMode) -> ProviderConfig {
        let (model_name, supports_images) = match mode {
            PathMode::TextPath => (self.text_model.clone(), false),
            PathMode::ImagePath => (self.image_model.clone(), self.image_capable),
        };
        let model_name = match self.kind {
            ProviderKind::Mock => format!("mock:{model_name}"),
            ProviderKind::OpenaiCompatible => model_name,
        };
        ProviderConfig {
            provider_kind: self.kind,
            endpoint_url: self.endpoint.clone(),
            model_name,
            api_key_env: self.api_key_env.clone(),
            timeout_s: self.timeout_s,
            max_retries: self.max_retries,
            temperature: self.temperature,
            supports_images,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostSettings {
    /// tiktoken-format vocabulary enabling exact text token counts.
    pub tokenizer_vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcrSettings {
    /// Engine binary; `OCR_ENGINE_PATH` takes precedence when set.
    pub engine_path: Option<PathBuf>,
    pub timeout_s: f64,
}

impl Default for OcrSettings {
    fn default() -> Self {
        Self {
            engine_path: None,
            timeout_s: 30.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerSettings {
    /// When set, names an environment variable whose value every request
    /// must present as `Authorization: Bearer <token>`.
    pub bearer_token_env: Option<String>,
}
