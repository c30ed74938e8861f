//! Token cost estimates for the two pipeline paths.
//!
//! Image path: tile-based cost on the rescaled image,
//! `85 + 170 * tiles` where tiles are 512 px squares after fitting the image
//! into 2048x2048 and then shrinking the short side to 768 (never
//! enlarging). A 1500x844 slide costs 1105 tokens.
//!
//! Text path: `ceil(chars / 4)` by default. Noisy OCR output tends to run
//! closer to 2.9 characters per token, so heuristic numbers understate the
//! real count; every estimate carries its method tag so heuristic and exact
//! figures are never mixed up.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::{BpeTokenizer, TokenizerError};
use crate::PathMode;

pub const BASE_TOKENS: u64 = 85;
pub const TOKENS_PER_TILE: u64 = 170;
pub const TILE_PX: u32 = 512;
pub const MAX_SIDE_PX: u32 = 2048;
pub const SHORT_SIDE_PX: u32 = 768;
pub const HEURISTIC_CHARS_PER_TOKEN: u64 = 4;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    NonPositiveDimension { width: u32, height: u32 },
    #[error("exact token counting needs a configured tokenizer vocabulary")]
    ExactOracleUnavailable,
    #[error("text estimate is zero tokens; cost ratio undefined")]
    ZeroTextTokens,
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    ImageTiling,
    TextHeuristic,
    TextExact,
}

impl EstimateMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateMethod::ImageTiling => "image_tiling",
            EstimateMethod::TextHeuristic => "text_heuristic",
            EstimateMethod::TextExact => "text_exact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingDetail {
    pub scaled_width: u32,
    pub scaled_height: u32,
    pub tiles_wide: u32,
    pub tiles_high: u32,
}

impl TilingDetail {
    pub fn tiles(&self) -> u64 {
        u64::from(self.tiles_wide) * u64::from(self.tiles_high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEstimate {
    pub tokens: u64,
    pub method: EstimateMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<TilingDetail>,
}

/// `round(value * num / den)` with halves rounded up, never below 1.
fn scale_round(value: u32, num: u32, den: u32) -> u32 {
    let (v, n, d) = (u64::from(value), u64::from(num), u64::from(den));
    let rounded = (2 * v * n + d) / (2 * d);
    rounded.max(1) as u32
}

/// Scaled dimensions the provider would tile.
pub fn scaled_dimensions(width: u32, height: u32) -> (u32, u32) {
    let (mut w, mut h) = (width, height);
    let longest = w.max(h);
    if longest > MAX_SIDE_PX {
        w = scale_round(w, MAX_SIDE_PX, longest);
        h = scale_round(h, MAX_SIDE_PX, longest);
    }
    let shortest = w.min(h);
    if shortest > SHORT_SIDE_PX {
        w = scale_round(w, SHORT_SIDE_PX, shortest);
        h = scale_round(h, SHORT_SIDE_PX, shortest);
    }
    (w, h)
}

pub fn estimate_image_tokens(width_px: u32, height_px: u32) -> Result<TokenEstimate, CostError> {
    if width_px == 0 || height_px == 0 {
        return Err(CostError::NonPositiveDimension {
            width: width_px,
            height: height_px,
        });
    }
    let (w, h) = scaled_dimensions(width_px, height_px);
    let detail = TilingDetail {
        scaled_width: w,
        scaled_height: h,
        tiles_wide: w.div_ceil(TILE_PX),
        tiles_high: h.div_ceil(TILE_PX),
    };
    Ok(TokenEstimate {
        tokens: BASE_TOKENS + TOKENS_PER_TILE * detail.tiles(),
        method: EstimateMethod::ImageTiling,
        detail: Some(detail),
    })
}

pub fn heuristic_text_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(HEURISTIC_CHARS_PER_TOKEN)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextEstimateMode {
    #[default]
    Heuristic,
    Exact,
}

/// Text token estimator with an optional exact BPE tokenizer.
#[derive(Debug, Clone, Default)]
pub struct TextTokenEstimator {
    oracle: Option<Arc<BpeTokenizer>>,
}

impl TextTokenEstimator {
    pub fn heuristic_only() -> Self {
        Self { oracle: None }
    }

    pub fn with_tokenizer(tokenizer: BpeTokenizer) -> Self {
        Self {
            oracle: Some(Arc::new(tokenizer)),
        }
    }

    /// Loads the tokenizer vocabulary from `vocab` when given.
    pub fn from_vocab(vocab: Option<&Path>) -> Result<Self, CostError> {
        match vocab {
            Some(path) => Ok(Self::with_tokenizer(BpeTokenizer::from_file(path)?)),
            None => Ok(Self::heuristic_only()),
        }
    }

    pub fn has_exact(&self) -> bool {
        self.oracle.is_some()
    }

    pub fn estimate(&self, text: &str, mode: TextEstimateMode) -> Result<TokenEstimate, CostError> {
        match mode {
            TextEstimateMode::Heuristic => Ok(TokenEstimate {
                tokens: heuristic_text_tokens(text),
                method: EstimateMethod::TextHeuristic,
                detail: None,
            }),
            TextEstimateMode::Exact => {
                let oracle = self.oracle.as_ref().ok_or(CostError::ExactOracleUnavailable)?;
                Ok(TokenEstimate {
                    tokens: oracle.count(text) as u64,
                    method: EstimateMethod::TextExact,
                    detail: None,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheaperPath {
    TextPath,
    ImagePath,
    Tie,
}

impl CheaperPath {
    pub fn as_str(self) -> &'static str {
        match self {
            CheaperPath::TextPath => PathMode::TextPath.as_str(),
            CheaperPath::ImagePath => PathMode::ImagePath.as_str(),
            CheaperPath::Tie => "tie",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub text_estimate: TokenEstimate,
    pub image_estimate: TokenEstimate,
    pub cheaper_path: CheaperPath,
    /// Image tokens divided by text tokens.
    pub ratio: f64,
}

pub fn compare_costs(
    text_est: &TokenEstimate,
    image_est: &TokenEstimate,
) -> Result<CostComparison, CostError> {
    if text_est.tokens == 0 {
        return Err(CostError::ZeroTextTokens);
    }
    let cheaper_path = match text_est.tokens.cmp(&image_est.tokens) {
        std::cmp::Ordering::Less => CheaperPath::TextPath,
        std::cmp::Ordering::Greater => CheaperPath::ImagePath,
        std::cmp::Ordering::Equal => CheaperPath::Tie,
    };
    Ok(CostComparison {
        text_estimate: *text_est,
        image_estimate: *image_est,
        cheaper_path,
        ratio: image_est.tokens as f64 / text_est.tokens as f64,
    })
}
