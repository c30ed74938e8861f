//! Usefulness ratings (1-10) tied to simplification events.
//!
//! Two append-only JSONL logs live in the data directory: `events.jsonl`
//! records every issued simplification event, `feedback.jsonl` every
//! accepted rating. Both are replayed on open, so event ids and ratings
//! survive restarts. Statistics are computed by scanning the ratings.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::PathMode;

pub const RATINGS_FILE: &str = "feedback.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const MIN_RATING: i64 = 1;
pub const MAX_RATING: i64 = 10;

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("rating {0} is outside 1..=10")]
    OutOfRange(i64),
    #[error("event {0} already has a rating")]
    DuplicateEvent(String),
    #[error("unknown event {0}")]
    UnknownEvent(String),
    #[error("rating for event {event_id} does not match the event's {field}")]
    EventMismatch { event_id: String, field: &'static str },
    #[error("corrupt log {file}:{line}: {reason}")]
    CorruptLog {
        file: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One accepted rating, as stored in `feedback.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRating {
    pub event_id: String,
    pub slide_id: String,
    pub mode: PathMode,
    pub rating: u8,
    #[serde(rename = "ts", with = "rfc3339")]
    pub timestamp: DateTime<Utc>,
}

/// One issued simplification response that may receive a rating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplificationEvent {
    pub event_id: String,
    pub deck_id: String,
    pub slide_id: String,
    pub mode: PathMode,
    #[serde(rename = "ts", with = "rfc3339")]
    pub timestamp: DateTime<Utc>,
}

mod rfc3339 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&raw)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsFilter {
    #[serde(default)]
    pub deck_id: Option<String>,
    #[serde(default)]
    pub mode: Option<PathMode>,
    /// Inclusive lower bound.
    #[serde(default)]
    pub since: Option<DateTime<Utc>>,
    /// Exclusive upper bound.
    #[serde(default)]
    pub until: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackStats {
    pub count: u64,
    pub sum: u64,
    /// `sum / count`; absent when there are no ratings.
    pub mean: Option<f64>,
    /// Mean rounded half-up to two decimals, computed from the exact sum.
    pub mean_display: Option<String>,
    /// Counts for ratings 1 through 10.
    pub histogram: [u64; 10],
}

impl FeedbackStats {
    pub fn from_ratings<I: IntoIterator<Item = u8>>(ratings: I) -> Self {
        let mut histogram = [0u64; 10];
        let mut count = 0u64;
        let mut sum = 0u64;
        for r in ratings {
            if (1..=10).contains(&r) {
                histogram[usize::from(r) - 1] += 1;
                count += 1;
                sum += u64::from(r);
            }
        }
        let (mean, mean_display) = if count == 0 {
            (None, None)
        } else {
            (
                Some(sum as f64 / count as f64),
                Some(format_hundredths(sum, count)),
            )
        };
        Self {
            count,
            sum,
            mean,
            mean_display,
            histogram,
        }
    }
}

/// `sum / count` rounded half-up to two decimals using integer arithmetic.
pub fn format_hundredths(sum: u64, count: u64) -> String {
    let hundredths = (200 * sum + count) / (2 * count);
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

#[derive(Debug, Default)]
struct State {
    events: HashMap<String, SimplificationEvent>,
    rated: HashSet<String>,
    ratings: Vec<FeedbackRating>,
}

/// Rating and event store backed by the two JSONL logs.
#[derive(Debug)]
pub struct FeedbackStore {
    dir: PathBuf,
    state: RwLock<State>,
    appender: Mutex<Appenders>,
}

#[derive(Debug)]
struct Appenders {
    events: File,
    ratings: File,
}

impl FeedbackStore {
    pub fn open(data_dir: &Path) -> Result<Self, FeedbackError> {
        fs::create_dir_all(data_dir)?;
        let events_path = data_dir.join(EVENTS_FILE);
        let ratings_path = data_dir.join(RATINGS_FILE);
        let events: Vec<SimplificationEvent> = replay(&events_path)?;
        let ratings: Vec<FeedbackRating> = replay(&ratings_path)?;

        let mut state = State::default();
        for e in events {
            state.events.insert(e.event_id.clone(), e);
        }
        for r in ratings {
            if !state.rated.insert(r.event_id.clone()) {
                return Err(FeedbackError::CorruptLog {
                    file: ratings_path.display().to_string(),
                    line: state.ratings.len() + 1,
                    reason: format!("second rating for event {}", r.event_id),
                });
            }
            state.ratings.push(r);
        }
        Ok(Self {
            dir: data_dir.to_path_buf(),
            state: RwLock::new(state),
            appender: Mutex::new(Appenders {
                events: open_append(&events_path)?,
                ratings: open_append(&ratings_path)?,
            }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Registers a new rateable event with a fresh 128-bit random id.
    pub fn issue_event(
        &self,
        deck_id: &str,
        slide_id: &str,
        mode: PathMode,
    ) -> Result<SimplificationEvent, FeedbackError> {
        let event = SimplificationEvent {
            event_id: new_event_id(),
            deck_id: deck_id.to_string(),
            slide_id: slide_id.to_string(),
            mode,
            timestamp: Utc::now(),
        };
        let mut appenders = self.appender.lock().unwrap_or_else(|e| e.into_inner());
        append_line(&mut appenders.events, &event)?;
        self.write_state()
            .events
            .insert(event.event_id.clone(), event.clone());
        Ok(event)
    }

    pub fn event(&self, event_id: &str) -> Option<SimplificationEvent> {
        self.read_state().events.get(event_id).cloned()
    }

    /// Builds and records a rating for `event_id`, taking slide and mode from
    /// the event.
    pub fn rate_event(&self, event_id: &str, rating: i64) -> Result<FeedbackRating, FeedbackError> {
        check_range(rating)?;
        let event = self
            .event(event_id)
            .ok_or_else(|| FeedbackError::UnknownEvent(event_id.to_string()))?;
        let record = FeedbackRating {
            event_id: event.event_id,
            slide_id: event.slide_id,
            mode: event.mode,
            rating: rating as u8,
            timestamp: Utc::now(),
        };
        self.record_rating(record.clone())?;
        Ok(record)
    }

    pub fn record_rating(&self, rating: FeedbackRating) -> Result<(), FeedbackError> {
        check_range(i64::from(rating.rating))?;
        let mut appenders = self.appender.lock().unwrap_or_else(|e| e.into_inner());
        {
            let state = self.read_state();
            let event = state
                .events
                .get(&rating.event_id)
                .ok_or_else(|| FeedbackError::UnknownEvent(rating.event_id.clone()))?;
            if state.rated.contains(&rating.event_id) {
                return Err(FeedbackError::DuplicateEvent(rating.event_id.clone()));
            }
            let mismatch = if event.slide_id != rating.slide_id {
                Some("slide_id")
            } else if event.mode != rating.mode {
                Some("mode")
            } else {
                None
            };
            if let Some(field) = mismatch {
                return Err(FeedbackError::EventMismatch {
                    event_id: rating.event_id.clone(),
                    field,
                });
            }
        }
        append_line(&mut appenders.ratings, &rating)?;
        let mut state = self.write_state();
        state.rated.insert(rating.event_id.clone());
        state.ratings.push(rating);
        Ok(())
    }

    pub fn aggregate_stats(&self, filter: &StatsFilter) -> FeedbackStats {
        let state = self.read_state();
        FeedbackStats::from_ratings(
            state
                .ratings
                .iter()
                .filter(|r| matches_filter(r, filter, &state.events))
                .map(|r| r.rating),
        )
    }

    /// All ratings in append order.
    pub fn ratings(&self) -> Vec<FeedbackRating> {
        self.read_state().ratings.clone()
    }

    fn read_state(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write_state(&self) -> std::sync::RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }
}

fn check_range(rating: i64) -> Result<(), FeedbackError> {
    if (MIN_RATING..=MAX_RATING).contains(&rating) {
        Ok(())
    } else {
        Err(FeedbackError::OutOfRange(rating))
    }
}

fn matches_filter(
    r: &FeedbackRating,
    filter: &StatsFilter,
    events: &HashMap<String, SimplificationEvent>,
) -> bool {
    if filter.mode.is_some_and(|m| m != r.mode) {
        return false;
    }
    if filter.since.is_some_and(|t| r.timestamp < t) {
        return false;
    }
    if filter.until.is_some_and(|t| r.timestamp >= t) {
        return false;
    }
    if let Some(deck) = &filter.deck_id {
        return events.get(&r.event_id).is_some_and(|e| &e.deck_id == deck);
    }
    true
}

pub fn new_event_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

fn open_append(path: &Path) -> io::Result<File> {
    OpenOptions::new().create(true).append(true).open(path)
}

fn append_line<T: Serialize>(file: &mut File, value: &T) -> Result<(), FeedbackError> {
    let mut line = serde_json::to_vec(value).map_err(io::Error::other)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.sync_data()?;
    Ok(())
}

/// Reads every complete line of a JSONL log. A trailing fragment without a
/// newline (an interrupted append) is cut off so later appends start clean.
fn replay<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FeedbackError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let complete = match bytes.iter().rposition(|&b| b == b'\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < bytes.len() {
        tracing::warn!(file = %path.display(), "dropping incomplete trailing log line");
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(complete as u64)?;
    }
    let text = std::str::from_utf8(&bytes[..complete]).map_err(|e| FeedbackError::CorruptLog {
        file: path.display().to_string(),
        line: 0,
        reason: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| FeedbackError::CorruptLog {
                file: path.display().to_string(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
