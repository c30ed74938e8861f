#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use slidewise::api::{router, AppState};
use slidewise_core::config::ProviderSettings;
use slidewise_core::deck::DeckStore;
use slidewise_core::feedback::FeedbackStore;
use slidewise_core::ocr::OcrEngine;
use slidewise_core::pipeline::Pipeline;

pub const DECK: &str = "lab1";
pub const BLANK_DECK: &str = "blank";

pub struct Corpus {
    _dir: tempfile::TempDir,
    /// Fixture deck manifest.
    pub manifest: PathBuf,
    /// One-slide deck holding a blank 512x512 image.
    pub blank_manifest: PathBuf,
    /// Installed OCR engine, or the transcript stand-in.
    pub engine: PathBuf,
    pub real_engine: bool,
}

/// Rendered once per test binary.
pub fn corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let dir = tempfile::TempDir::new().unwrap();
        let corpus = dir.path().join("corpus");
        let manifest = slidewise_fixtures::write_corpus(&corpus, DECK, "Lab 1").unwrap();

        let blank = dir.path().join("blank");
        std::fs::create_dir_all(&blank).unwrap();
        slidewise_fixtures::write_blank(&blank.join("blank.png"), 512, 512).unwrap();
        let blank_manifest = blank.join("deck.json");
        std::fs::write(
            &blank_manifest,
            format!(r#"{{"deck_id": "{BLANK_DECK}", "title": "Blank", "slides": [{{"file": "blank.png"}}]}}"#),
        )
        .unwrap();

        let real = OcrEngine::from_env();
        let real_engine = real.is_available();
        let engine = if real_engine {
            real.program().to_path_buf()
        } else {
            eprintln!("OCR engine not installed; using transcript stand-in");
            slidewise_fixtures::write_transcript_engine(&dir.path().join("engine"), &corpus).unwrap()
        };
        Corpus {
            _dir: dir,
            manifest,
            blank_manifest,
            engine,
            real_engine,
        }
    })
}

/// Data directory with both fixture decks ingested.
pub fn data_dir() -> tempfile::TempDir {
    let dir = tempfile::TempDir::new().unwrap();
    let store = DeckStore::open(dir.path()).unwrap();
    store.ingest_deck(&corpus().manifest).unwrap();
    store.ingest_deck(&corpus().blank_manifest).unwrap();
    dir
}

pub fn state(data: &Path, provider: ProviderSettings, bearer_token: Option<&str>) -> AppState {
    let mut pipeline = Pipeline::new(provider);
    pipeline.ocr = OcrEngine::new(&corpus().engine);
    AppState {
        decks: DeckStore::open(data).unwrap(),
        feedback: FeedbackStore::open(data).unwrap(),
        pipeline,
        bearer_token: bearer_token.map(str::to_string),
    }
}

/// Serves `state` on an ephemeral port and returns the base URL.
pub async fn spawn(state: AppState) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(Arc::new(state));
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

pub struct Server {
    pub url: String,
    pub data: tempfile::TempDir,
    pub client: reqwest::Client,
}

/// Fresh data directory served with the mock provider.
pub async fn mock_server() -> Server {
    let data = data_dir();
    let url = spawn(state(data.path(), ProviderSettings::mock(), None)).await;
    Server {
        url,
        data,
        client: reqwest::Client::new(),
    }
}

impl Server {
    pub async fn get(&self, path: &str) -> reqwest::Response {
        self.client.get(format!("{}{path}", self.url)).send().await.unwrap()
    }

    pub async fn post(&self, path: &str, body: serde_json::Value) -> reqwest::Response {
        self.client
            .post(format!("{}{path}", self.url))
            .json(&body)
            .send()
            .await
            .unwrap()
    }

    pub async fn simplify(&self, index: usize, mode: &str) -> serde_json::Value {
        let resp = self
            .post(
                "/simplify",
                serde_json::json!({"deck_id": DECK, "slide_index": index, "mode": mode}),
            )
            .await;
        assert_eq!(resp.status(), 200);
        resp.json().await.unwrap()
    }

    pub async fn rate(&self, event_id: &str, rating: i64) -> reqwest::Response {
        self.post("/feedback", serde_json::json!({"event_id": event_id, "rating": rating}))
            .await
    }
}

/// Asserts the status and JSON error code of a failed response.
pub async fn assert_error(resp: reqwest::Response, status: u16, code: &str) -> serde_json::Value {
    assert_eq!(resp.status(), status);
    let body: serde_json::Value = resp.json().await.unwrap();
    assert_eq!(body["error"]["code"], code, "{body}");
    assert!(body["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
    body
}
