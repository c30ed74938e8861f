//! Slide deck storage.
//!
//! A deck enters the system as a directory holding `deck.json` plus the
//! slide images it lists. Ingestion validates the manifest, decodes every
//! image to read its real pixel dimensions, and copies the images into a
//! content-addressed layout under `<data_dir>/decks/<deck_id>/`. Decks are
//! immutable once ingested.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

/// Manifest file name, both in the ingest source and in the stored copy.
pub const MANIFEST_FILE: &str = "deck.json";
/// Resolved slide index written next to the stored manifest.
const INDEX_FILE: &str = "slides.json";
const STAGING_PREFIX: &str = ".staging-";

#[derive(Debug, Error)]
pub enum DeckError {
    #[error("manifest not found: {}", .0.display())]
    ManifestNotFound(PathBuf),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("cannot decode image {file}: {reason}")]
    ImageDecode { file: String, reason: String },
    #[error("deck {0:?} already exists")]
    DuplicateDeckId(String),
    #[error("unknown deck {0:?}")]
    UnknownDeck(String),
    #[error("slide index {index} out of range for deck {deck_id:?} with {len} slides")]
    IndexOutOfRange {
        deck_id: String,
        index: usize,
        len: usize,
    },
    #[error("corrupt stored deck {deck_id:?}: {reason}")]
    CorruptStore { deck_id: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The six slide categories used to stratify benchmark results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlideCategory {
    CleanTextTerminal,
    ResultSummary,
    GuiScreenshot,
    DenseAnnotation,
    CliWithOutput,
    TextOverview,
}

impl SlideCategory {
    pub const ALL: [SlideCategory; 6] = [
        SlideCategory::CleanTextTerminal,
        SlideCategory::ResultSummary,
        SlideCategory::GuiScreenshot,
        SlideCategory::DenseAnnotation,
        SlideCategory::CliWithOutput,
        SlideCategory::TextOverview,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SlideCategory::CleanTextTerminal => "clean_text_terminal",
            SlideCategory::ResultSummary => "result_summary",
            SlideCategory::GuiScreenshot => "gui_screenshot",
            SlideCategory::DenseAnnotation => "dense_annotation",
            SlideCategory::CliWithOutput => "cli_with_output",
            SlideCategory::TextOverview => "text_overview",
        }
    }

    /// Categories whose slides are mostly text.
    pub fn is_text_dense(self) -> bool {
        matches!(
            self,
            SlideCategory::CleanTextTerminal
                | SlideCategory::ResultSummary
                | SlideCategory::TextOverview
        )
    }
}

impl fmt::Display for SlideCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SlideCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SlideCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown slide category {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaType {
    Png,
    Jpeg,
}

impl MediaType {
    pub fn content_type(self) -> &'static str {
        match self {
            MediaType::Png => "image/png",
            MediaType::Jpeg => "image/jpeg",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MediaType::Png => "png",
            MediaType::Jpeg => "jpg",
        }
    }

    fn image_format(self) -> image::ImageFormat {
        match self {
            MediaType::Png => image::ImageFormat::Png,
            MediaType::Jpeg => image::ImageFormat::Jpeg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slide {
    pub slide_id: String,
    pub deck_id: String,
    pub index: usize,
    /// Absolute path of the stored image.
    pub image_ref: PathBuf,
    pub width_px: u32,
    pub height_px: u32,
    pub media_type: MediaType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<SlideCategory>,
    /// Terms the slide author expects a good explanation to keep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub key_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlideDeck {
    pub deck_id: String,
    pub title: String,
    pub slides: Vec<Slide>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeckSummary {
    pub deck_id: String,
    pub title: String,
    pub slide_count: usize,
}

/// `deck.json` as written by deck authors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeckManifest {
    pub deck_id: String,
    pub title: String,
    pub slides: Vec<ManifestSlide>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestSlide {
    pub file: String,
    #[serde(default)]
    pub category: Option<SlideCategory>,
    #[serde(default)]
    pub key_terms: Vec<String>,
}

/// What is persisted in `slides.json`: slide metadata with store-relative
/// image names, so the data directory can be moved.
#[derive(Debug, Serialize, Deserialize)]
struct StoredIndex {
    deck_id: String,
    title: String,
    slides: Vec<StoredSlide>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredSlide {
    file: String,
    width_px: u32,
    height_px: u32,
    media_type: MediaType,
    #[serde(default)]
    category: Option<SlideCategory>,
    #[serde(default)]
    key_terms: Vec<String>,
}

pub fn slide_id(deck_id: &str, index: usize) -> String {
    format!("{deck_id}-{index:03}")
}

fn validate_deck_id(id: &str) -> Result<(), DeckError> {
    if id.is_empty() {
        return Err(DeckError::MalformedManifest("deck_id is empty".into()));
    }
    let ok_chars = id
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if !ok_chars || id.starts_with('.') || id.len() > 128 {
        return Err(DeckError::MalformedManifest(format!(
            "deck_id {id:?} must be 1-128 characters of [A-Za-z0-9._-] not starting with '.'"
        )));
    }
    Ok(())
}

/// Directory-backed deck store.
///
/// Reads go through an in-memory index guarded by an `RwLock`; ingestion is
/// serialized by a separate writer lock and publishes a deck only after its
/// directory has been fully written and renamed into place.
pub struct DeckStore {
    root: PathBuf,
    decks: RwLock<BTreeMap<String, Arc<SlideDeck>>>,
    writer: Mutex<()>,
}

impl DeckStore {
    /// Opens (creating if needed) the store rooted at `<data_dir>/decks` and
    /// loads every previously ingested deck.
    pub fn open(data_dir: &Path) -> Result<Self, DeckError> {
        let root = data_dir.join("decks");
        fs::create_dir_all(&root)?;
        let mut decks = BTreeMap::new();
        for entry in fs::read_dir(&root)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with(STAGING_PREFIX) {
                warn!(dir = %entry.path().display(), "removing leftover staging directory");
                let _ = fs::remove_dir_all(entry.path());
                continue;
            }
            if !entry.file_type()?.is_dir() {
                continue;
            }
            let deck = load_stored_deck(&entry.path())?;
            decks.insert(deck.deck_id.clone(), Arc::new(deck));
        }
        Ok(Self {
            root,
            decks: RwLock::new(decks),
            writer: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Validates and stores the deck described by `manifest_path`. On any
    /// error the store is left unchanged.
    pub fn ingest_deck(&self, manifest_path: &Path) -> Result<Arc<SlideDeck>, DeckError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());

        let manifest_bytes = match fs::read(manifest_path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(DeckError::ManifestNotFound(manifest_path.to_path_buf()))
            }
            Err(e) => return Err(e.into()),
        };
        let manifest: DeckManifest = serde_json::from_slice(&manifest_bytes)
            .map_err(|e| DeckError::MalformedManifest(e.to_string()))?;
        validate_deck_id(&manifest.deck_id)?;
        if self.read().contains_key(&manifest.deck_id) {
            return Err(DeckError::DuplicateDeckId(manifest.deck_id));
        }
        let final_dir = self.root.join(&manifest.deck_id);
        if final_dir.exists() {
            return Err(DeckError::DuplicateDeckId(manifest.deck_id));
        }

        let source_dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let mut decoded = Vec::with_capacity(manifest.slides.len());
        for entry in &manifest.slides {
            if entry.file.trim().is_empty() {
                return Err(DeckError::MalformedManifest("slide entry with empty file".into()));
            }
            decoded.push(decode_image(&source_dir.join(&entry.file), &entry.file)?);
        }

        let staging = self.root.join(format!(
            "{STAGING_PREFIX}{}-{:016x}",
            manifest.deck_id,
            rand::random::<u64>()
        ));
        let result = write_deck_dir(&staging, &manifest, &manifest_bytes, &decoded)
            .and_then(|()| fs::rename(&staging, &final_dir).map_err(DeckError::from));
        if let Err(e) = result {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }

        let deck = Arc::new(load_stored_deck(&final_dir)?);
        self.decks
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(deck.deck_id.clone(), Arc::clone(&deck));
        info!(deck_id = %deck.deck_id, slides = deck.slides.len(), "ingested deck");
        Ok(deck)
    }

    pub fn get_deck(&self, deck_id: &str) -> Result<Arc<SlideDeck>, DeckError> {
        self.read()
            .get(deck_id)
            .cloned()
            .ok_or_else(|| DeckError::UnknownDeck(deck_id.to_string()))
    }

    pub fn get_slide(&self, deck_id: &str, index: usize) -> Result<Slide, DeckError> {
        let deck = self.get_deck(deck_id)?;
        deck.slides
            .get(index)
            .cloned()
            .ok_or(DeckError::IndexOutOfRange {
                deck_id: deck_id.to_string(),
                index,
                len: deck.slides.len(),
            })
    }

    /// All decks ordered by `deck_id`.
    pub fn list_decks(&self) -> Vec<DeckSummary> {
        self.read()
            .values()
            .map(|d| DeckSummary {
                deck_id: d.deck_id.clone(),
                title: d.title.clone(),
                slide_count: d.slides.len(),
            })
            .collect()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, BTreeMap<String, Arc<SlideDeck>>> {
        self.decks.read().unwrap_or_else(|e| e.into_inner())
    }
}

struct DecodedImage {
    bytes: Vec<u8>,
    media_type: MediaType,
    width: u32,
    height: u32,
}

fn decode_image(path: &Path, name: &str) -> Result<DecodedImage, DeckError> {
    let fail = |reason: String| DeckError::ImageDecode {
        file: name.to_string(),
        reason,
    };
    let bytes = fs::read(path).map_err(|e| fail(e.to_string()))?;
    let media_type = match image::guess_format(&bytes) {
        Ok(image::ImageFormat::Png) => MediaType::Png,
        Ok(image::ImageFormat::Jpeg) => MediaType::Jpeg,
        Ok(other) => return Err(fail(format!("unsupported format {other:?}, expected PNG or JPEG"))),
        Err(e) => return Err(fail(e.to_string())),
    };
    let img = image::load_from_memory_with_format(&bytes, media_type.image_format())
        .map_err(|e| fail(e.to_string()))?;
    Ok(DecodedImage {
        bytes,
        media_type,
        width: img.width(),
        height: img.height(),
    })
}

fn content_name(img: &DecodedImage) -> String {
    let digest = Sha256::digest(&img.bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("{hex}.{}", img.media_type.extension())
}

fn write_deck_dir(
    dir: &Path,
    manifest: &DeckManifest,
    manifest_bytes: &[u8],
    images: &[DecodedImage],
) -> Result<(), DeckError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(MANIFEST_FILE), manifest_bytes)?;
    let mut slides = Vec::with_capacity(images.len());
    for (entry, img) in manifest.slides.iter().zip(images) {
        let name = content_name(img);
        let target = dir.join(&name);
        if !target.exists() {
            fs::write(&target, &img.bytes)?;
        }
        slides.push(StoredSlide {
            file: name,
            width_px: img.width,
            height_px: img.height,
            media_type: img.media_type,
            category: entry.category,
            key_terms: entry.key_terms.clone(),
        });
    }
    let index = StoredIndex {
        deck_id: manifest.deck_id.clone(),
        title: manifest.title.clone(),
        slides,
    };
    let json = serde_json::to_vec_pretty(&index).map_err(io::Error::other)?;
    fs::write(dir.join(INDEX_FILE), json)?;
    Ok(())
}

fn load_stored_deck(dir: &Path) -> Result<SlideDeck, DeckError> {
    let corrupt = |reason: String| DeckError::CorruptStore {
        deck_id: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        reason,
    };
    let bytes = fs::read(dir.join(INDEX_FILE)).map_err(|e| corrupt(e.to_string()))?;
    let index: StoredIndex = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
    let slides = index
        .slides
        .into_iter()
        .enumerate()
        .map(|(i, s)| Slide {
            slide_id: slide_id(&index.deck_id, i),
            deck_id: index.deck_id.clone(),
            index: i,
            image_ref: dir.join(&s.file),
            width_px: s.width_px,
            height_px: s.height_px,
            media_type: s.media_type,
            category: s.category,
            key_terms: s.key_terms,
        })
        .collect();
    Ok(SlideDeck {
        deck_id: index.deck_id,
        title: index.title,
        slides,
    })
}
