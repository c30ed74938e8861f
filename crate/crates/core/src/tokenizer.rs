//! Byte-pair-encoding token counter over a tiktoken-style vocabulary file
//! (`<base64 token> <rank>` per line, lower rank merges first).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use fancy_regex::Regex;
use thiserror::Error;

/// Pre-tokenization pattern used by the cl100k vocabulary family.
pub const CL100K_PATTERN: &str = r"(?i:'s|'t|'re|'ve|'m|'ll|'d)|[^\r\n\p{L}\p{N}]?\p{L}+|\p{N}{1,3}| ?[^\s\p{L}\p{N}]+[\r\n]*|\s*[\r\n]+|\s+(?!\S)|\s+";

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot read vocabulary {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("vocabulary line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid pre-tokenization pattern: {0}")]
    Pattern(String),
}

#[derive(Debug)]
pub struct BpeTokenizer {
    ranks: HashMap<Vec<u8>, u32>,
    splitter: Regex,
}

impl BpeTokenizer {
    pub fn from_file(path: &Path) -> Result<Self, TokenizerError> {
        let text = fs::read_to_string(path).map_err(|source| TokenizerError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_vocab_text(&text, CL100K_PATTERN)
    }

    pub fn from_vocab_text(text: &str, pattern: &str) -> Result<Self, TokenizerError> {
        let mut ranks = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |reason: String| TokenizerError::Parse { line: i + 1, reason };
            let (token, rank) = line
                .split_once(' ')
                .ok_or_else(|| parse_err("expected `<base64> <rank>`".into()))?;
            let bytes = STANDARD.decode(token).map_err(|e| parse_err(e.to_string()))?;
            let rank: u32 = rank.trim().parse().map_err(|e| parse_err(format!("{e}")))?;
            ranks.insert(bytes, rank);
        }
        let splitter = Regex::new(pattern).map_err(|e| TokenizerError::Pattern(e.to_string()))?;
        Ok(Self { ranks, splitter })
    }

    pub fn vocab_size(&self) -> usize {
        self.ranks.len()
    }

    /// Number of tokens `text` encodes to.
    pub fn count(&self, text: &str) -> usize {
        let mut total = 0;
        let mut start = 0;
        // A regex error (backtrack limit) falls back to counting the rest
        // of the input as one piece.
        for m in self.splitter.find_iter(text) {
            match m {
                Ok(m) => {
                    total += self.count_piece(m.as_str().as_bytes());
                    start = m.end();
                }
                Err(_) => {
                    total += self.count_piece(&text.as_bytes()[start..]);
                    return total;
                }
            }
        }
        total
    }

    fn count_piece(&self, piece: &[u8]) -> usize {
        if piece.is_empty() {
            return 0;
        }
        if self.ranks.contains_key(piece) {
            return 1;
        }
        merge_parts(piece, &self.ranks).len()
    }
}

/// Greedy lowest-rank pair merging. Returns the byte ranges of the final
/// tokens; bytes absent from the vocabulary stay as single-byte tokens.
fn merge_parts(piece: &[u8], ranks: &HashMap<Vec<u8>, u32>) -> Vec<(usize, usize)> {
    let mut parts: Vec<(usize, usize)> = (0..piece.len()).map(|i| (i, i + 1)).collect();
    loop {
        let best = parts
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| ranks.get(&piece[w[0].0..w[1].1]).map(|&r| (r, i)))
            .min();
        let Some((_, i)) = best else {
            return parts;
        };
        parts[i].1 = parts[i + 1].1;
        parts.remove(i + 1);
    }
}
