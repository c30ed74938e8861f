//! Zero-shot simplification prompts.
//!
//! A prompt is a fixed instruction preamble plus exactly one payload: the
//! normalized OCR text (text path) or a reference to the slide image (image
//! path). No examples, history or feedback are ever embedded.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deck::{MediaType, Slide};
use crate::ocr::{normalize_text, OcrResult};
use crate::PathMode;

pub const DEFAULT_PREAMBLE: &str = "You are an instructional assistant. Explain the following slide content from a cybersecurity lab in simpler terms for a student. Keep commands exact.";
pub const DEFAULT_MAX_CHARS: usize = 8000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("OCR produced no text for slide {0}; try the image path")]
    EmptySourceText(String),
    #[error("slide image unreadable ({path}): {reason}")]
    ImageUnreadable { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub preamble: String,
    /// Cap on source characters; `None` disables truncation.
    pub max_chars: Option<usize>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            preamble: DEFAULT_PREAMBLE.to_string(),
            max_chars: Some(DEFAULT_MAX_CHARS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub slide_id: String,
    pub path: PathBuf,
    pub media_type: MediaType,
    pub width_px: u32,
    pub height_px: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplificationPrompt {
    pub mode: PathMode,
    pub preamble: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<ImageRef>,
    /// Set when the source text hit the character cap.
    #[serde(default)]
    pub truncated: bool,
}

impl SimplificationPrompt {
    /// Full text of the prompt: preamble, blank line, source text. Image
    /// prompts render as the preamble alone.
    pub fn body(&self) -> String {
        match &self.source_text {
            Some(src) => format!("{}\n\n{}", self.preamble, src),
            None => self.preamble.clone(),
        }
    }
}

fn truncation_marker(omitted: usize) -> String {
    format!("\n[truncated: {omitted} characters omitted]")
}

pub fn build_text_prompt(
    ocr: &OcrResult,
    config: &PromptConfig,
) -> Result<SimplificationPrompt, PromptError> {
    let normalized = normalize_text(&ocr.raw_text);
    if normalized.is_empty() {
        return Err(PromptError::EmptySourceText(ocr.slide_id.clone()));
    }
    let total = normalized.chars().count();
    let (source_text, truncated) = match config.max_chars {
        Some(cap) if total > cap => {
            let mut kept: String = normalized.chars().take(cap).collect();
            kept.push_str(&truncation_marker(total - cap));
            (kept, true)
        }
        _ => (normalized, false),
    };
    Ok(SimplificationPrompt {
        mode: PathMode::TextPath,
        preamble: config.preamble.clone(),
        source_text: Some(source_text),
        image_ref: None,
        truncated,
    })
}

pub fn build_image_prompt(
    slide: &Slide,
    config: &PromptConfig,
) -> Result<SimplificationPrompt, PromptError> {
    image::image_dimensions(&slide.image_ref).map_err(|e| PromptError::ImageUnreadable {
        path: slide.image_ref.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(SimplificationPrompt {
        mode: PathMode::ImagePath,
        preamble: config.preamble.clone(),
        source_text: None,
        image_ref: Some(ImageRef {
            slide_id: slide.slide_id.clone(),
            path: slide.image_ref.clone(),
            media_type: slide.media_type,
            width_px: slide.width_px,
            height_px: slide.height_px,
        }),
        truncated: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ocr(text: &str) -> OcrResult {
        OcrResult {
            slide_id: "deck-000".into(),
            raw_text: text.into(),
            char_count: text.chars().count(),
            engine_name: "tesseract".into(),
            engine_version: "5".into(),
            duration_ms: 1,
        }
    }

    #[test]
    fn ocr_text_follows_preamble_verbatim() {
        let text = "Step 4: Find VM2 IP Address\nifconfig eth0";
        let p = build_text_prompt(&ocr(text), &PromptConfig::default()).unwrap();
        assert_eq!(p.mode, PathMode::TextPath);
        assert!(p.image_ref.is_none());
        let body = p.body();
        assert!(body.starts_with(DEFAULT_PREAMBLE));
        let at = body.find(text).expect("source text missing");
        assert!(at >= DEFAULT_PREAMBLE.len());
    }

    #[test]
    fn empty_or_blank_ocr_is_rejected() {
        for raw in ["", "  \n\t \n"] {
            assert_eq!(
                build_text_prompt(&ocr(raw), &PromptConfig::default()),
                Err(PromptError::EmptySourceText("deck-000".into()))
            );
        }
    }

    #[test]
    fn custom_preamble_is_used() {
        let cfg = PromptConfig {
            preamble: "Summarize.".into(),
            ..Default::default()
        };
        let p = build_text_prompt(&ocr("x"), &cfg).unwrap();
        assert_eq!(p.body(), "Summarize.\n\nx");
    }

    #[test]
    fn cap_truncates_with_marker() {
        let cfg = PromptConfig {
            max_chars: Some(5),
            ..Default::default()
        };
        let p = build_text_prompt(&ocr("abcdefgh"), &cfg).unwrap();
        assert!(p.truncated);
        assert_eq!(
            p.source_text.unwrap(),
            "abcde\n[truncated: 3 characters omitted]"
        );
    }

    #[test]
    fn no_cap_keeps_everything() {
        let long = "word ".repeat(3000);
        let cfg = PromptConfig {
            max_chars: None,
            ..Default::default()
        };
        let p = build_text_prompt(&ocr(&long), &cfg).unwrap();
        assert!(!p.truncated);
        assert_eq!(p.source_text.unwrap(), normalize_text(&long));
    }

    proptest! {
        #[test]
        fn body_contains_normalized_source(raw in "[a-zA-Z0-9 \t\n:$@./-]{1,400}") {
            let p = build_text_prompt(&ocr(&raw), &PromptConfig::default());
            let normalized = normalize_text(&raw);
            match p {
                Ok(p) => {
                    prop_assert!(p.body().contains(&normalized));
                    prop_assert!(p.body().chars().count() >= normalized.chars().count());
                }
                Err(_) => prop_assert!(normalized.is_empty()),
            }
        }

        #[test]
        fn construction_is_pure(raw in "\\PC{1,200}") {
            let a = build_text_prompt(&ocr(&raw), &PromptConfig::default());
            let b = build_text_prompt(&ocr(&raw), &PromptConfig::default());
            prop_assert_eq!(a, b);
        }
    }
}
