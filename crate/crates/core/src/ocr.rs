//! OCR through an external engine subprocess.
//!
//! The engine is invoked as `<engine> <image> stdout --psm 3 -l eng`; text is
//! read from stdout and diagnostics from stderr. `OCR_ENGINE_PATH` overrides
//! the binary location.

use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::process::Command;
use tokio::sync::OnceCell;

use crate::deck::Slide;

pub const ENGINE_ENV_VAR: &str = "OCR_ENGINE_PATH";
pub const DEFAULT_ENGINE: &str = "tesseract";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("OCR engine not found: {}", .0.display())]
    EngineNotFound(PathBuf),
    #[error("OCR engine failed ({status}): {stderr}")]
    EngineFailure { status: String, stderr: String },
    #[error("OCR timed out after {0:?}")]
    Timeout(Duration),
    #[error("slide image unreadable: {}", .0.display())]
    ImageUnreadable(PathBuf),
    #[error("cannot run OCR engine: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcrResult {
    pub slide_id: String,
    /// Engine stdout, with NUL characters removed.
    pub raw_text: String,
    pub char_count: usize,
    pub engine_name: String,
    pub engine_version: String,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct EngineIdentity {
    name: String,
    version: String,
}

/// Handle on an OCR engine binary. Each extraction spawns its own process,
/// so one handle can serve concurrent callers.
#[derive(Debug)]
pub struct OcrEngine {
    program: PathBuf,
    timeout: Duration,
    psm: u8,
    language: String,
    identity: OnceCell<EngineIdentity>,
}

impl OcrEngine {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            timeout: DEFAULT_TIMEOUT,
            psm: 3,
            language: "eng".to_string(),
            identity: OnceCell::new(),
        }
    }

    /// Engine from `OCR_ENGINE_PATH`, falling back to `tesseract` on `PATH`.
    pub fn from_env() -> Self {
        match std::env::var_os(ENGINE_ENV_VAR) {
            Some(p) if !p.is_empty() => Self::new(p),
            _ => Self::new(DEFAULT_ENGINE),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn program(&self) -> &Path {
        &self.program
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Whether the engine binary can be located.
    pub fn is_available(&self) -> bool {
        resolve_program(&self.program).is_some()
    }

    /// Engine name and version from `<engine> --version`, cached per handle.
    pub async fn identify(&self) -> Result<(String, String), OcrError> {
        let id = self
            .identity
            .get_or_try_init(|| async {
                let output = self.run(&[std::ffi::OsStr::new("--version")]).await?;
                let text = if output.stdout.trim().is_empty() {
                    output.stderr
                } else {
                    output.stdout
                };
                Ok::<_, OcrError>(parse_version(&text, &self.program))
            })
            .await?;
        Ok((id.name.clone(), id.version.clone()))
    }

    pub async fn extract_text(&self, slide: &Slide) -> Result<OcrResult, OcrError> {
        self.extract_path(&slide.slide_id, &slide.image_ref).await
    }

    pub async fn extract_path(&self, slide_id: &str, image: &Path) -> Result<OcrResult, OcrError> {
        if !image.is_file() {
            return Err(OcrError::ImageUnreadable(image.to_path_buf()));
        }
        let (engine_name, engine_version) = self.identify().await?;
        let psm = self.psm.to_string();
        let started = Instant::now();
        let output = self
            .run(&[
                image.as_os_str(),
                "stdout".as_ref(),
                "--psm".as_ref(),
                psm.as_ref(),
                "-l".as_ref(),
                self.language.as_ref(),
            ])
            .await?;
        let raw_text: String = output.stdout.chars().filter(|&c| c != '\0').collect();
        Ok(OcrResult {
            slide_id: slide_id.to_string(),
            char_count: raw_text.chars().count(),
            raw_text,
            engine_name,
            engine_version,
            duration_ms: started.elapsed().as_millis() as u64,
        })
    }

    async fn run(&self, args: &[&std::ffi::OsStr]) -> Result<ProcessOutput, OcrError> {
        let child = Command::new(&self.program)
            .args(args)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .kill_on_drop(true)
            .spawn()
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
                    OcrError::EngineNotFound(self.program.clone())
                }
                _ => OcrError::Io(e),
            })?;
        let output = tokio::time::timeout(self.timeout, child.wait_with_output())
            .await
            .map_err(|_| OcrError::Timeout(self.timeout))??;
        let stdout = String::from_utf8_lossy(&output.stdout).into_owned();
        let stderr = String::from_utf8_lossy(&output.stderr).into_owned();
        if !output.status.success() {
            return Err(OcrError::EngineFailure {
                status: output.status.to_string(),
                stderr: stderr.trim().to_string(),
            });
        }
        Ok(ProcessOutput { stdout, stderr })
    }
}

struct ProcessOutput {
    stdout: String,
    stderr: String,
}

fn resolve_program(program: &Path) -> Option<PathBuf> {
    if program.components().count() > 1 {
        return program.is_file().then(|| program.to_path_buf());
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(program))
        .find(|candidate| candidate.is_file())
}

/// First line of `--version` output, e.g. `tesseract 5.3.0`.
fn parse_version(text: &str, program: &Path) -> EngineIdentity {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let fallback_name = || {
        program
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| DEFAULT_ENGINE.to_string())
    };
    let mut parts = first.split_whitespace();
    match (parts.next(), parts.next()) {
        (Some(name), Some(version)) => EngineIdentity {
            name: name.to_string(),
            version: version.trim_start_matches('v').to_string(),
        },
        (Some(version), None) => EngineIdentity {
            name: fallback_name(),
            version: version.to_string(),
        },
        _ => EngineIdentity {
            name: fallback_name(),
            version: "unknown".to_string(),
        },
    }
}

/// Transport hygiene only: collapses horizontal whitespace runs to a single
/// space, drops control characters other than newline, strips trailing
/// spaces from each line and trims blank lines at both ends. Words are never
/// altered.
pub fn normalize_text(raw: &str) -> String {
    let mut collapsed = String::with_capacity(raw.len());
    let mut in_space = false;
    for c in raw.chars() {
        if c == '\n' {
            collapsed.push('\n');
            in_space = false;
        } else if c.is_whitespace() {
            if !in_space {
                collapsed.push(' ');
                in_space = true;
            }
        } else if c.is_control() {
            continue;
        } else {
            collapsed.push(c);
            in_space = false;
        }
    }

    let lines: Vec<&str> = collapsed.split('\n').map(str::trim_end).collect();
    let is_blank = |l: &&str| l.trim().is_empty();
    let Some(first) = lines.iter().position(|l| !is_blank(l)) else {
        return String::new();
    };
    let last = lines.iter().rposition(|l| !is_blank(l)).unwrap_or(first);
    lines[first..=last].join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn collapses_tabs() {
        assert_eq!(normalize_text("a\t\tb"), "a b");
    }

    #[test]
    fn empty_stays_empty() {
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text(" \n\t\n \u{c}\n"), "");
    }

    #[test]
    fn trims_blank_lines_and_controls() {
        assert_eq!(
            normalize_text("\n\n  Step 4:\r\n ifconfig \u{7}eth0\n\n\n"),
            " Step 4:\n ifconfig eth0"
        );
    }

    #[test]
    fn keeps_interior_blank_lines_and_garbled_tokens() {
        let noisy = "eth@: flags-4163\n\nSstudent@yvm2:7S ifconfig";
        assert_eq!(normalize_text(noisy), noisy);
    }

    #[test]
    fn version_line_parsing() {
        let id = parse_version("tesseract 5.3.0\n leptonica-1.82.0\n", Path::new("tesseract"));
        assert_eq!((id.name.as_str(), id.version.as_str()), ("tesseract", "5.3.0"));
        let id = parse_version("v4.1.1", Path::new("/opt/ocr/tess4"));
        assert_eq!((id.name.as_str(), id.version.as_str()), ("tess4", "v4.1.1"));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "[ -~\t\r\n\u{0}-\u{1f}\u{a0}\u{2028}é]{0,80}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once.clone());
        }

        #[test]
        fn normalize_never_grows(s in any::<String>()) {
            prop_assert!(normalize_text(&s).chars().count() <= s.chars().count());
        }

        #[test]
        fn normalize_output_has_no_controls_but_newline(s in any::<String>()) {
            let out = normalize_text(&s);
            prop_assert!(out.chars().all(|c| c == '\n' || !c.is_control()));
            prop_assert!(!out.contains("  "));
        }
    }
}
