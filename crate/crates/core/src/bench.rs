//! Comparative runs of the text and image paths over a deck.
//!
//! Output quality is not scored: records keep both paths' outputs side by
//! side for human review. The only automatic signal is a keyword-coverage
//! fraction over the slide's declared key terms, which is a weak proxy.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{compare_costs, CheaperPath, CostComparison, TokenEstimate};
use crate::deck::{Slide, SlideCategory, SlideDeck};
use crate::gateway::GatewayError;
use crate::pipeline::{PathRun, Pipeline};
use crate::PathMode;

pub const CSV_COLUMNS: [&str; 10] = [
    "slide_id",
    "category",
    "path",
    "estimated_tokens",
    "estimate_method",
    "reported_prompt_tokens",
    "latency_ms",
    "ocr_chars",
    "error",
    "output_text_path",
];

const UNCATEGORIZED: &str = "uncategorized";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("deck {0:?} has no slides")]
    EmptyCorpus(String),
    #[error("no paths requested")]
    NoPaths,
    #[error("provider misconfigured for {mode}: {source}")]
    ProviderMisconfigured {
        mode: PathMode,
        source: GatewayError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub slide_id: String,
    pub slide_index: usize,
    pub category: Option<SlideCategory>,
    pub path: PathMode,
    pub output_text: Option<String>,
    pub estimated_tokens: Option<TokenEstimate>,
    pub reported_prompt_tokens: Option<u64>,
    /// Provider round-trip time; always 0 for the mock provider.
    pub latency_ms: u64,
    pub ocr_char_count: Option<usize>,
    pub error: Option<String>,
    /// Fraction of the slide's key terms found in the output (weak proxy).
    pub keyword_coverage: Option<f64>,
    /// Relative path of the file holding `output_text` in a written report.
    pub output_text_path: Option<String>,
}

impl BenchRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderIdent {
    pub kind: String,
    pub text_model: String,
    pub image_model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideComparison {
    pub slide_id: String,
    pub category: Option<SlideCategory>,
    pub comparison: CostComparison,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostSummary {
    /// Category name, `uncategorized`, or `overall`.
    pub group: String,
    pub slides: usize,
    pub text_tokens: u64,
    pub image_tokens: u64,
    pub text_cheaper: usize,
    pub image_cheaper: usize,
    pub ties: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub by_category: Vec<CostSummary>,
    pub overall: CostSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub run_id: String,
    pub started_at: String,
    pub deck_id: String,
    pub provider: ProviderIdent,
    pub paths: Vec<PathMode>,
    pub records: Vec<BenchRecord>,
    pub comparisons: Vec<SlideComparison>,
    pub summary: BenchSummary,
}

/// Caller-supplied run metadata, injected so reports are reproducible.
#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub run_id: String,
    pub started_at: String,
    pub paths: Vec<PathMode>,
}

pub async fn run_bench(
    deck: &SlideDeck,
    pipeline: &Pipeline,
    options: &BenchOptions,
) -> Result<BenchReport, BenchError> {
    if deck.slides.is_empty() {
        return Err(BenchError::EmptyCorpus(deck.deck_id.clone()));
    }
    let paths: Vec<PathMode> = PathMode::ALL
        .into_iter()
        .filter(|p| options.paths.contains(p))
        .collect();
    if paths.is_empty() {
        return Err(BenchError::NoPaths);
    }
    for &mode in &paths {
        let config = pipeline.provider.for_path(mode);
        let check = config.validate().and_then(|()| {
            if mode == PathMode::ImagePath && !config.supports_images {
                Err(GatewayError::CapabilityMismatch {
                    model: config.model_name.clone(),
                })
            } else {
                Ok(())
            }
        });
        check.map_err(|source| BenchError::ProviderMisconfigured { mode, source })?;
    }

    let jobs: Vec<(usize, PathMode)> = (0..deck.slides.len())
        .flat_map(|i| paths.iter().map(move |&p| (i, p)))
        .collect();
    let mut records: Vec<BenchRecord> = stream::iter(jobs)
        .map(|(i, mode)| {
            let slide = &deck.slides[i];
            async move { to_record(slide, pipeline.run(slide, mode).await) }
        })
        .buffer_unordered(pipeline.gateway.max_in_flight())
        .collect()
        .await;
    records.sort_by_key(|r| (r.slide_index, r.path));

    let comparisons = compare_slides(&records);
    let summary = summarize(&records, &comparisons);
    Ok(BenchReport {
        run_id: options.run_id.clone(),
        started_at: options.started_at.clone(),
        deck_id: deck.deck_id.clone(),
        provider: ProviderIdent {
            kind: pipeline.provider.kind.as_str().to_string(),
            text_model: pipeline.provider.text_model.clone(),
            image_model: pipeline.provider.image_model.clone(),
        },
        paths,
        records,
        comparisons,
        summary,
    })
}

fn to_record(slide: &Slide, run: PathRun) -> BenchRecord {
    let (output_text, reported, latency, error) = match run.result {
        Ok(resp) => (Some(resp.text), resp.prompt_tokens, resp.latency_ms, None),
        Err(e) => (None, None, 0, Some(e.to_string())),
    };
    let keyword_coverage = output_text
        .as_deref()
        .and_then(|out| keyword_coverage(out, &slide.key_terms));
    let output_text_path = output_text
        .as_ref()
        .map(|_| format!("outputs/{}.{}.txt", slide.slide_id, run.mode));
    BenchRecord {
        slide_id: slide.slide_id.clone(),
        slide_index: slide.index,
        category: slide.category,
        path: run.mode,
        output_text,
        estimated_tokens: run.estimate,
        reported_prompt_tokens: reported,
        latency_ms: latency,
        ocr_char_count: run.ocr_char_count,
        error,
        keyword_coverage,
        output_text_path,
    }
}

/// Case-insensitive share of `terms` occurring in `output`.
pub fn keyword_coverage(output: &str, terms: &[String]) -> Option<f64> {
    if terms.is_empty() {
        return None;
    }
    let haystack = output.to_lowercase();
    let found = terms
        .iter()
        .filter(|t| haystack.contains(&t.to_lowercase()))
        .count();
    Some(found as f64 / terms.len() as f64)
}

fn successful_tokens(records: &[BenchRecord], slide_index: usize, path: PathMode) -> Option<TokenEstimate> {
    records
        .iter()
        .find(|r| r.slide_index == slide_index && r.path == path && r.succeeded())
        .and_then(|r| r.estimated_tokens)
}

fn compare_slides(records: &[BenchRecord]) -> Vec<SlideComparison> {
    let mut out = Vec::new();
    let mut seen = Vec::new();
    for r in records {
        if seen.contains(&r.slide_index) {
            continue;
        }
        seen.push(r.slide_index);
        let text = successful_tokens(records, r.slide_index, PathMode::TextPath);
        let image = successful_tokens(records, r.slide_index, PathMode::ImagePath);
        if let (Some(text), Some(image)) = (text, image) {
            if let Ok(comparison) = compare_costs(&text, &image) {
                out.push(SlideComparison {
                    slide_id: r.slide_id.clone(),
                    category: r.category,
                    comparison,
                });
            }
        }
    }
    out
}

fn group_name(category: Option<SlideCategory>) -> String {
    category.map_or_else(|| UNCATEGORIZED.to_string(), |c| c.as_str().to_string())
}

fn group_rank(category: Option<SlideCategory>) -> usize {
    category.map_or(SlideCategory::ALL.len(), |c| {
        SlideCategory::ALL.iter().position(|&x| x == c).unwrap_or(0)
    })
}

fn summarize(records: &[BenchRecord], comparisons: &[SlideComparison]) -> BenchSummary {
    let mut groups: BTreeMap<usize, CostSummary> = BTreeMap::new();
    let mut overall = CostSummary {
        group: "overall".to_string(),
        ..Default::default()
    };
    let mut slides_seen = Vec::new();
    for r in records {
        let g = groups.entry(group_rank(r.category)).or_insert_with(|| CostSummary {
            group: group_name(r.category),
            ..Default::default()
        });
        if !slides_seen.contains(&r.slide_index) {
            slides_seen.push(r.slide_index);
            g.slides += 1;
            overall.slides += 1;
        }
        if !r.succeeded() {
            g.errors += 1;
            overall.errors += 1;
            continue;
        }
        let tokens = r.estimated_tokens.map_or(0, |e| e.tokens);
        let (gt, ot) = match r.path {
            PathMode::TextPath => (&mut g.text_tokens, &mut overall.text_tokens),
            PathMode::ImagePath => (&mut g.image_tokens, &mut overall.image_tokens),
        };
        *gt += tokens;
        *ot += tokens;
    }
    for c in comparisons {
        let g = groups
            .get_mut(&group_rank(c.category))
            .expect("comparison slide has records");
        for s in [g, &mut overall] {
            match c.comparison.cheaper_path {
                CheaperPath::TextPath => s.text_cheaper += 1,
                CheaperPath::ImagePath => s.image_cheaper += 1,
                CheaperPath::Tie => s.ties += 1,
            }
        }
    }
    BenchSummary {
        by_category: groups.into_values().collect(),
        overall,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

pub fn render_report(report: &BenchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Markdown => render_markdown(report),
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn render_csv(report: &BenchReport) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("write to Vec");
    for r in &report.records {
        w.write_record([
            r.slide_id.clone(),
            opt(r.category),
            r.path.to_string(),
            opt(r.estimated_tokens.map(|e| e.tokens)),
            opt(r.estimated_tokens.map(|e| e.method.as_str())),
            opt(r.reported_prompt_tokens),
            r.latency_ms.to_string(),
            opt(r.ocr_char_count),
            r.error.clone().unwrap_or_default(),
            r.output_text_path.clone().unwrap_or_default(),
        ])
        .expect("write to Vec");
    }
    String::from_utf8(w.into_inner().expect("flush Vec")).expect("csv output is UTF-8")
}

/// Makes a value safe inside a markdown table cell.
fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn render_markdown(report: &BenchReport) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Benchmark report `{}`\n", report.run_id);
    let _ = writeln!(md, "- deck: `{}`", report.deck_id);
    let _ = writeln!(md, "- started: {}", report.started_at);
    let _ = writeln!(
        md,
        "- provider: {} (text model `{}`, image model `{}`)",
        report.provider.kind, report.provider.text_model, report.provider.image_model
    );
    let paths: Vec<&str> = report.paths.iter().map(|p| p.as_str()).collect();
    let _ = writeln!(md, "- paths: {}", paths.join(", "));
    let _ = writeln!(
        md,
        "- text estimates tagged `text_heuristic` use ceil(chars / 4); noisy OCR text has \
         measured closer to 2.87 chars/token, so heuristic figures run low.\n"
    );

    md.push_str("## Token cost by category\n\n");
    md.push_str("| category | slides | text tokens | image tokens | text cheaper | image cheaper | ties | errors |\n");
    md.push_str("|---|---:|---:|---:|---:|---:|---:|---:|\n");
    for s in report.summary.by_category.iter().chain([&report.summary.overall]) {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            s.group, s.slides, s.text_tokens, s.image_tokens, s.text_cheaper, s.image_cheaper, s.ties, s.errors
        );
    }

    if !report.comparisons.is_empty() {
        md.push_str("\n## Per-slide comparison\n\n");
        md.push_str("| slide | category | text tokens | image tokens | cheaper | image/text |\n");
        md.push_str("|---|---|---:|---:|---|---:|\n");
        for c in &report.comparisons {
            let cmp = &c.comparison;
            let _ = writeln!(
                md,
                "| {} | {} | {} ({}) | {} | {} | {:.3} |",
                c.slide_id,
                group_name(c.category),
                cmp.text_estimate.tokens,
                cmp.text_estimate.method.as_str(),
                cmp.image_estimate.tokens,
                cmp.cheaper_path.as_str(),
                cmp.ratio
            );
        }
    }

    md.push_str("\n## Outputs\n\n");
    md.push_str("Keyword coverage is the share of the slide's declared key terms found in the output. It is a weak proxy, not a quality score.\n");
    let mut current = None;
    for r in &report.records {
        if current != Some(r.slide_index) {
            current = Some(r.slide_index);
            let _ = writeln!(md, "\n### {} ({})\n", r.slide_id, group_name(r.category));
            md.push_str("| path | est. tokens | keyword coverage | output |\n|---|---:|---:|---|\n");
        }
        let est = r
            .estimated_tokens
            .map(|e| format!("{} ({})", e.tokens, e.method.as_str()))
            .unwrap_or_default();
        let coverage = r.keyword_coverage.map(|c| format!("{c:.2}")).unwrap_or_default();
        let body = match (&r.output_text, &r.error) {
            (Some(out), _) => cell(out),
            (None, Some(err)) => format!("**error:** {}", cell(err)),
            (None, None) => String::new(),
        };
        let _ = writeln!(md, "| {} | {} | {} | {} |", r.path, est, coverage, body);
    }
    md
}

/// Writes `report.csv`, `report.md`, `report.json` and one text file per
/// successful record under `dir`. Returns the paths written.
pub fn write_report_files(report: &BenchReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir.join("outputs"))?;
    let mut written = Vec::new();
    for r in &report.records {
        if let (Some(rel), Some(text)) = (&r.output_text_path, &r.output_text) {
            let p = dir.join(rel);
            fs::write(&p, text)?;
            written.push(p);
        }
    }
    for (name, body) in [
        ("report.csv", render_report(report, ReportFormat::Csv)),
        ("report.md", render_report(report, ReportFormat::Markdown)),
        (
            "report.json",
            serde_json::to_string_pretty(report).map_err(io::Error::other)?,
        ),
    ] {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
    }
    Ok(written)
}
