//! Slide-instruction simplification pipeline.
//!
//! Slides are ingested into a [`deck::DeckStore`], turned into text by an
//! external OCR engine ([`ocr`]), wrapped into zero-shot prompts
//! ([`prompt`]) and dispatched to an LLM provider ([`gateway`]). The image
//! path skips OCR and sends the slide image itself to a multimodal model.
//! [`cost`] estimates token usage for both paths, [`feedback`] stores 1-10
//! usefulness ratings, and [`bench`] runs both paths over a deck and renders
//! comparison reports.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod bench;
pub mod config;
pub mod cost;
pub mod deck;
pub mod feedback;
pub mod gateway;
pub mod ocr;
pub mod pipeline;
pub mod prompt;
pub mod tokenizer;

/// The two pipeline variants: OCR text to a text model, or the slide image
/// to a multimodal model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    TextPath,
    ImagePath,
}

impl PathMode {
    pub const ALL: [PathMode; 2] = [PathMode::TextPath, PathMode::ImagePath];

    pub fn as_str(self) -> &'static str {
        match self {
            PathMode::TextPath => "text_path",
            PathMode::ImagePath => "image_path",
        }
    }
}

impl fmt::Display for PathMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown path mode {0:?} (expected text_path or image_path)")]
pub struct ParsePathModeError(pub String);

impl FromStr for PathMode {
    type Err = ParsePathModeError;

    /// Accepts the canonical names plus the short forms `text` and `image`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "text_path" | "text" => Ok(PathMode::TextPath),
            "image_path" | "image" => Ok(PathMode::ImagePath),
            other => Err(ParsePathModeError(other.to_string())),
        }
    }
}
