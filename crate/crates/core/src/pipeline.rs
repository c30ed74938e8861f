//! One slide through one path: OCR, prompt, estimate, completion.

use std::time::Duration;

use thiserror::Error;

use crate::config::{ProviderSettings, Settings};
use crate::cost::{estimate_image_tokens, CostError, TextEstimateMode, TextTokenEstimator, TokenEstimate};
use crate::deck::Slide;
use crate::gateway::{ChatResponse, Gateway, GatewayError};
use crate::ocr::{normalize_text, OcrEngine, OcrError, ENGINE_ENV_VAR};
use crate::prompt::{build_image_prompt, build_text_prompt, PromptConfig, PromptError};
use crate::PathMode;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("ocr: {0}")]
    Ocr(#[from] OcrError),
    #[error("prompt: {0}")]
    Prompt(#[from] PromptError),
    #[error("cost: {0}")]
    Cost(#[from] CostError),
    #[error("provider: {0}")]
    Gateway(#[from] GatewayError),
    #[error("config: {0}")]
    Config(String),
}

/// Everything learned while running one path, including partial results
/// when a later stage failed.
#[derive(Debug)]
pub struct PathRun {
    pub mode: PathMode,
    pub ocr_char_count: Option<usize>,
    pub estimate: Option<TokenEstimate>,
    pub result: Result<ChatResponse, PipelineError>,
}

#[derive(Default)]
struct Partial {
    ocr_char_count: Option<usize>,
    estimate: Option<TokenEstimate>,
}

pub struct Pipeline {
    pub gateway: Gateway,
    pub ocr: OcrEngine,
    pub prompt: PromptConfig,
    pub provider: ProviderSettings,
    pub estimator: TextTokenEstimator,
    pub text_mode: TextEstimateMode,
}

impl Pipeline {
    /// Pipeline with the given provider, heuristic text estimates, default
    /// prompt and an OCR engine taken from the environment.
    pub fn new(provider: ProviderSettings) -> Self {
        Self {
            gateway: Gateway::new(provider.max_in_flight),
            ocr: OcrEngine::from_env(),
            prompt: PromptConfig::default(),
            provider,
            estimator: TextTokenEstimator::heuristic_only(),
            text_mode: TextEstimateMode::Heuristic,
        }
    }

    /// Pipeline as described by a loaded configuration. Exact text counts
    /// are used when a tokenizer vocabulary is configured.
    pub fn from_settings(settings: &Settings) -> Result<Self, PipelineError> {
        let timeout = Duration::try_from_secs_f64(settings.ocr.timeout_s)
            .ok()
            .filter(|t| !t.is_zero())
            .ok_or_else(|| {
                PipelineError::Config(format!("ocr.timeout_s must be positive, got {}", settings.ocr.timeout_s))
            })?;
        let estimator = TextTokenEstimator::from_vocab(settings.cost.tokenizer_vocab.as_deref())?;
        let ocr = match (&settings.ocr.engine_path, std::env::var_os(ENGINE_ENV_VAR)) {
            (Some(path), None) => OcrEngine::new(path),
            _ => OcrEngine::from_env(),
        };
        Ok(Self {
            gateway: Gateway::new(settings.provider.max_in_flight),
            ocr: ocr.with_timeout(timeout),
            prompt: settings.prompt.clone(),
            provider: settings.provider.clone(),
            text_mode: if estimator.has_exact() {
                TextEstimateMode::Exact
            } else {
                TextEstimateMode::Heuristic
            },
            estimator,
        })
    }

    pub async fn run(&self, slide: &Slide, mode: PathMode) -> PathRun {
        let mut partial = Partial::default();
        let result = match mode {
            PathMode::TextPath => self.run_text(slide, &mut partial).await,
            PathMode::ImagePath => self.run_image(slide, &mut partial).await,
        };
        PathRun {
            mode,
            ocr_char_count: partial.ocr_char_count,
            estimate: partial.estimate,
            result,
        }
    }

    async fn run_text(&self, slide: &Slide, run: &mut Partial) -> Result<ChatResponse, PipelineError> {
        let ocr = self.ocr.extract_text(slide).await?;
        run.ocr_char_count = Some(ocr.char_count);
        let prompt = build_text_prompt(&ocr, &self.prompt)?;
        let source = prompt
            .source_text
            .clone()
            .unwrap_or_else(|| normalize_text(&ocr.raw_text));
        run.estimate = Some(self.estimator.estimate(&source, self.text_mode)?);
        let config = self.provider.for_path(PathMode::TextPath);
        Ok(self.gateway.complete(&prompt, &config).await?)
    }

    async fn run_image(&self, slide: &Slide, run: &mut Partial) -> Result<ChatResponse, PipelineError> {
        run.estimate = Some(estimate_image_tokens(slide.width_px, slide.height_px)?);
        let prompt = build_image_prompt(slide, &self.prompt)?;
        let config = self.provider.for_path(PathMode::ImagePath);
        Ok(self.gateway.complete(&prompt, &config).await?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_select_engine_prompt_and_estimator() {
        let mut settings = Settings::default();
        settings.ocr.timeout_s = 7.5;
        settings.prompt.preamble = "Be brief.".into();
        let p = Pipeline::from_settings(&settings).unwrap();
        assert_eq!(p.ocr.timeout(), Duration::from_millis(7500));
        assert_eq!(p.prompt.preamble, "Be brief.");
        assert_eq!(p.text_mode, TextEstimateMode::Heuristic);
    }

    #[test]
    fn non_positive_ocr_timeout_is_rejected() {
        for bad in [0.0, -1.0, f64::NAN] {
            let mut settings = Settings::default();
            settings.ocr.timeout_s = bad;
            assert!(matches!(Pipeline::from_settings(&settings), Err(PipelineError::Config(_))));
        }
    }

    #[test]
    fn missing_vocab_file_is_an_error() {
        let mut settings = Settings::default();
        settings.cost.tokenizer_vocab = Some("/nonexistent/vocab.tiktoken".into());
        assert!(matches!(Pipeline::from_settings(&settings), Err(PipelineError::Cost(_))));
    }
}
