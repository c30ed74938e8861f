//! OCR adapter behaviour against scripted stand-in engines.

use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use slidewise_core::ocr::{OcrEngine, OcrError};

const VERSION: &str = r#"if [ "$1" = "--version" ]; then echo "fakeocr 1.2.3"; echo "  leptonica-1.84"; exit 0; fi"#;

const SCRIPTS: &[(&str, &str)] = &[
    ("args", "printf '%s|' \"$@\""),
    ("nul", r"printf 'hel\000lo\n wor\000ld\n'"),
    ("fail", "echo 'cannot read image' >&2; exit 3"),
    ("slow", "sleep 5; echo late"),
    ("empty", "exit 0"),
];

/// Writes every script once, before any test spawns a process.
fn engines() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::TempDir::new().unwrap();
        for (name, body) in SCRIPTS {
            let path = dir.path().join(name);
            std::fs::write(&path, format!("#!/bin/sh\n{VERSION}\n{body}\n")).unwrap();
            std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
        }
        let stderr_version = dir.path().join("stderr_version");
        std::fs::write(&stderr_version, "#!/bin/sh\necho 'otherocr 9.0' >&2\n").unwrap();
        std::fs::set_permissions(&stderr_version, std::fs::Permissions::from_mode(0o755)).unwrap();
        dir
    })
    .path()
}

fn engine(name: &str) -> OcrEngine {
    OcrEngine::new(engines().join(name))
}

fn image() -> PathBuf {
    static IMG: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    IMG.get_or_init(|| {
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("slide.png");
        slidewise_fixtures::write_blank(&path, 16, 16).unwrap();
        (dir, path)
    })
    .1
    .clone()
}

#[tokio::test]
async fn invocation_uses_stdout_auto_layout_and_english() {
    let img = image();
    let r = engine("args").extract_path("d-000", &img).await.unwrap();
    assert_eq!(r.raw_text, format!("{}|stdout|--psm|3|-l|eng|", img.display()));
    assert_eq!(r.slide_id, "d-000");
}

#[tokio::test]
async fn version_is_taken_from_first_line() {
    let r = engine("args").extract_path("d-000", &image()).await.unwrap();
    assert_eq!(r.engine_name, "fakeocr");
    assert_eq!(r.engine_version, "1.2.3");
}

#[tokio::test]
async fn version_falls_back_to_stderr() {
    let (name, version) = engine("stderr_version").identify().await.unwrap();
    assert_eq!((name.as_str(), version.as_str()), ("otherocr", "9.0"));
}

#[tokio::test]
async fn nul_bytes_are_stripped() {
    let r = engine("nul").extract_path("d-000", &image()).await.unwrap();
    assert_eq!(r.raw_text, "hello\n world\n");
    assert_eq!(r.char_count, r.raw_text.chars().count());
}

#[tokio::test]
async fn nonzero_exit_is_engine_failure_with_stderr() {
    let err = engine("fail").extract_path("d-000", &image()).await.unwrap_err();
    match err {
        OcrError::EngineFailure { stderr, .. } => assert_eq!(stderr, "cannot read image"),
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn hung_engine_times_out() {
    let started = Instant::now();
    let err = engine("slow")
        .with_timeout(Duration::from_millis(300))
        .extract_path("d-000", &image())
        .await
        .unwrap_err();
    assert!(matches!(err, OcrError::Timeout(_)), "{err:?}");
    assert!(started.elapsed() < Duration::from_secs(3));
}

#[tokio::test]
async fn empty_output_is_not_an_error() {
    let r = engine("empty").extract_path("d-000", &image()).await.unwrap();
    assert_eq!(r.raw_text, "");
    assert_eq!(r.char_count, 0);
}

#[tokio::test]
async fn missing_binary_is_engine_not_found() {
    let e = OcrEngine::new(engines().join("no-such-engine"));
    assert!(!e.is_available());
    let err = e.extract_path("d-000", &image()).await.unwrap_err();
    assert!(matches!(err, OcrError::EngineNotFound(_)), "{err:?}");
}

#[tokio::test]
async fn missing_image_is_reported_before_spawning() {
    let err = engine("args")
        .extract_path("d-000", Path::new("/nonexistent/slide.png"))
        .await
        .unwrap_err();
    assert!(matches!(err, OcrError::ImageUnreadable(_)), "{err:?}");
}
