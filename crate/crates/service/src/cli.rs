//! Command-line interface.

use std::io::Write as _;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use clap::{Parser, Subcommand, ValueEnum};

use slidewise_core::bench::{run_bench, write_report_files, BenchOptions};
use slidewise_core::config::Settings;
use slidewise_core::deck::DeckStore;
use slidewise_core::feedback::{FeedbackStore, StatsFilter};
use slidewise_core::gateway::ProviderKind;
use slidewise_core::pipeline::Pipeline;
use slidewise_core::PathMode;

use crate::api::{self, AppState};

/// Config file picked up from the working directory when `--config` is absent.
pub const DEFAULT_CONFIG_FILE: &str = "slidewise.toml";

#[derive(Debug, Parser)]
#[command(name = "slidewise", version, about = "Simplify lab slide instructions with an LLM")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "SLIDEWISE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides `data_dir` from the configuration.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a deck from its deck.json manifest.
    Ingest { manifest: PathBuf },
    /// List ingested decks.
    Decks,
    /// Simplify one slide and print the result.
    Simplify {
        deck: String,
        index: usize,
        #[arg(long, default_value = "text_path")]
        mode: PathMode,
        /// Print the full response as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run both paths over a deck and write CSV, markdown and JSON reports.
    Bench {
        deck: String,
        #[arg(long, value_delimiter = ',', default_value = "text_path,image_path")]
        paths: Vec<PathMode>,
        /// Overrides the configured provider kind.
        #[arg(long)]
        provider: Option<ProviderChoice>,
        #[arg(long, default_value = "bench-report")]
        out: PathBuf,
        #[arg(long)]
        run_id: Option<String>,
        /// Report timestamp; defaults to now.
        #[arg(long)]
        started_at: Option<String>,
    },
    /// Serve the HTTP API.
    Serve {
        /// 0 picks a free port.
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
    },
    /// Print rating statistics as JSON.
    Stats {
        #[arg(long)]
        deck: Option<String>,
        #[arg(long)]
        mode: Option<PathMode>,
        /// Inclusive lower bound (RFC 3339).
        #[arg(long)]
        since: Option<DateTime<Utc>>,
        /// Exclusive upper bound (RFC 3339).
        #[arg(long)]
        until: Option<DateTime<Utc>>,
    },
    /// Write the synthetic six-slide fixture deck into a directory.
    Fixtures {
        dir: PathBuf,
        #[arg(long, default_value = "fixtures")]
        deck_id: String,
        #[arg(long, default_value = "Fixture lab")]
        title: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderChoice {
    Mock,
    #[value(alias = "openai")]
    OpenaiCompatible,
}

impl From<ProviderChoice> for ProviderKind {
    fn from(c: ProviderChoice) -> Self {
        match c {
            ProviderChoice::Mock => ProviderKind::Mock,
            ProviderChoice::OpenaiCompatible => ProviderKind::OpenaiCompatible,
        }
    }
}

pub fn load_settings(config: Option<&Path>, data_dir: Option<&Path>) -> Result<Settings> {
    let mut settings = match config {
        Some(path) => Settings::load(path)?,
        None if Path::new(DEFAULT_CONFIG_FILE).is_file() => Settings::load(Path::new(DEFAULT_CONFIG_FILE))?,
        None => Settings::default(),
    };
    if let Some(dir) = data_dir {
        settings.data_dir = dir.to_path_buf();
    }
    Ok(settings)
}

pub async fn run(cli: Cli) -> Result<()> {
    let mut settings = load_settings(cli.config.as_deref(), cli.data_dir.as_deref())?;
    let mut out = std::io::stdout();
    match cli.command {
        Command::Ingest { manifest } => {
            let store = DeckStore::open(&settings.data_dir)?;
            let deck = store.ingest_deck(&manifest)?;
            writeln!(out, "ingested {} ({} slides)", deck.deck_id, deck.slides.len())?;
        }
        Command::Decks => {
            for d in DeckStore::open(&settings.data_dir)?.list_decks() {
                writeln!(out, "{}\t{}\t{}", d.deck_id, d.slide_count, d.title)?;
            }
        }
        Command::Simplify { deck, index, mode, json } => {
            let store = DeckStore::open(&settings.data_dir)?;
            let slide = store.get_slide(&deck, index)?;
            let pipeline = Pipeline::from_settings(&settings)?;
            let run = pipeline.run(&slide, mode).await;
            let resp = run.result?;
            if json {
                let body = serde_json::json!({
                    "slide_id": slide.slide_id,
                    "mode": mode,
                    "simplified_text": resp.text,
                    "estimated_tokens": run.estimate.map(|e| e.tokens),
                    "estimate_method": run.estimate.map(|e| e.method),
                    "reported_prompt_tokens": resp.prompt_tokens,
                    "latency_ms": resp.latency_ms,
                });
                writeln!(out, "{}", serde_json::to_string_pretty(&body)?)?;
            } else {
                writeln!(out, "{}", resp.text)?;
            }
        }
        Command::Bench {
            deck,
            paths,
            provider,
            out: out_dir,
            run_id,
            started_at,
        } => {
            if let Some(p) = provider {
                settings.provider.kind = p.into();
            }
            let store = DeckStore::open(&settings.data_dir)?;
            let deck = store.get_deck(&deck)?;
            let pipeline = Pipeline::from_settings(&settings)?;
            let now = Utc::now();
            let options = BenchOptions {
                run_id: run_id.unwrap_or_else(|| api::default_run_id(now)),
                started_at: started_at.unwrap_or_else(|| now.to_rfc3339_opts(SecondsFormat::Secs, true)),
                paths,
            };
            let report = run_bench(&deck, &pipeline, &options).await?;
            write_report_files(&report, &out_dir)
                .with_context(|| format!("writing report to {}", out_dir.display()))?;
            let errors = report.summary.overall.errors;
            writeln!(
                out,
                "{} records ({} errors) written to {}",
                report.records.len(),
                errors,
                out_dir.join("report.csv").display()
            )?;
        }
        Command::Serve { port, host } => {
            let state = Arc::new(AppState::open(&settings)?);
            let listener = tokio::net::TcpListener::bind(SocketAddr::new(host, port))
                .await
                .with_context(|| format!("binding {host}:{port}"))?;
            writeln!(out, "listening on http://{}", listener.local_addr()?)?;
            out.flush()?;
            api::serve(listener, state).await?;
            return Ok(());
        }
        Command::Stats {
            deck,
            mode,
            since,
            until,
        } => {
            let store = FeedbackStore::open(&settings.data_dir)?;
            let stats = store.aggregate_stats(&StatsFilter {
                deck_id: deck,
                mode,
                since,
                until,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&stats)?)?;
        }
        Command::Fixtures { dir, deck_id, title } => {
            let manifest = slidewise_fixtures::write_corpus(&dir, &deck_id, &title)?;
            writeln!(out, "{}", manifest.display())?;
        }
    }
    Ok(())
}
