mod common;

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_slidewise");

fn slidewise(data: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--data-dir")
        .arg(data)
        .args(args)
        .env("OCR_ENGINE_PATH", &common::corpus().engine)
        .env_remove("SLIDEWISE_CONFIG")
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn fixtures_ingest_and_list() {
    let dir = tempfile::TempDir::new().unwrap();
    let data = dir.path().join("data");
    let out = slidewise(&data, &["fixtures", dir.path().join("deck").to_str().unwrap(), "--deck-id", "demo"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = stdout(&out).trim().to_string();
    assert!(manifest.ends_with("deck.json"));

    let out = slidewise(&data, &["ingest", &manifest]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "ingested demo (6 slides)\n");

    let out = slidewise(&data, &["ingest", &manifest]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("already exists"), "{}", stderr(&out));

    let out = slidewise(&data, &["decks"]);
    assert_eq!(stdout(&out), "demo\t6\tFixture lab\n");
}

#[test]
fn bench_with_mock_writes_csv() {
    let data = common::data_dir();
    let out_dir = tempfile::TempDir::new().unwrap();
    let report = out_dir.path().join("report");
    let out = slidewise(
        data.path(),
        &[
            "bench",
            common::DECK,
            "--paths",
            "text,image",
            "--provider",
            "mock",
            "--out",
            report.to_str().unwrap(),
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("12 records (0 errors)"), "{}", stdout(&out));
    let csv = std::fs::read_to_string(report.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(report.join("report.md").is_file());
    assert!(report.join("outputs").join("lab1-000.image_path.txt").is_file());
}

#[test]
fn simplify_prints_mock_output() {
    let data = common::data_dir();
    let out = slidewise(data.path(), &["simplify", common::DECK, "0", "--mode", "image"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "SIMPLIFIED(IMAGE:1500x844)\n");

    let out = slidewise(data.path(), &["simplify", common::DECK, "0", "--mode", "image_path", "--json"]);
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(body["estimated_tokens"], 1105);

    let out = slidewise(data.path(), &["simplify", common::DECK, "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("SIMPLIFIED("));
}

#[test]
fn simplify_unknown_deck_exits_1() {
    let data = common::data_dir();
    let out = slidewise(data.path(), &["simplify", "missing", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown deck"), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_2() {
    let data = tempfile::TempDir::new().unwrap();
    let out = slidewise(data.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
}

#[test]
fn bad_mode_is_a_usage_error() {
    let data = tempfile::TempDir::new().unwrap();
    let out = slidewise(data.path(), &["simplify", "d", "0", "--mode", "video"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_on_empty_store() {
    let data = tempfile::TempDir::new().unwrap();
    let out = slidewise(data.path(), &["stats", "--mode", "text_path"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(body["count"], 0);
}

#[test]
fn config_file_sets_data_dir_and_provider() {
    let dir = tempfile::TempDir::new().unwrap();
    let data = common::data_dir();
    let config = dir.path().join("slidewise.toml");
    std::fs::write(
        &config,
        format!("data_dir = {:?}\n[provider]\nkind = \"mock\"\n", data.path()),
    )
    .unwrap();
    let out = Command::new(BIN)
        .args(["--config", config.to_str().unwrap(), "decks"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("lab1\t6\tLab 1"));

    std::fs::write(&config, "provider.kind = \"carrier-pigeon\"\n").unwrap();
    let out = Command::new(BIN)
        .args(["--config", config.to_str().unwrap(), "decks"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("invalid config"), "{}", stderr(&out));
}

#[test]
fn serve_on_port_zero_prints_bound_address() {
    let data = common::data_dir();
    let mut child = Command::new(BIN)
        .arg("--data-dir")
        .arg(data.path())
        .args(["serve", "--port", "0"])
        .env("OCR_ENGINE_PATH", &common::corpus().engine)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    let port: u16 = url.rsplit(':').next().unwrap().parse().unwrap();
    assert_ne!(port, 0);

    let rt = tokio::runtime::Runtime::new().unwrap();
    let decks: serde_json::Value = rt.block_on(async {
        reqwest::get(format!("{url}/decks")).await.unwrap().json().await.unwrap()
    });
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(decks.as_array().unwrap().len(), 2);
}
