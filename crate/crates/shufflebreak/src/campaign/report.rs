//! Report rendering: one table shape, three formats.
//!
//! Markdown and CSV render the toxic mean and ASR exactly the way the result
//! tables print them (two decimals, ASR as a percentage); JSON additionally
//! keeps the full-precision values so reports parse back losslessly.

use super::{CampaignReport, CategoryStats};
use serde::Serialize;
use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [
        ReportFormat::Csv,
        ReportFormat::Json,
        ReportFormat::Markdown,
    ];

    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

fn toxic_cell(stats: &CategoryStats) -> String {
    format!("{:.2}", stats.mean_toxic)
}

fn asr_cell(stats: &CategoryStats) -> String {
    format!("{:.2}", stats.asr * 100.0)
}

/// Renders a report deterministically in the requested format.
pub fn render_report(report: &CampaignReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Markdown => markdown(report).into_bytes(),
        ReportFormat::Csv => csv(report).into_bytes(),
        ReportFormat::Json => json(report).into_bytes(),
    }
}

fn markdown(report: &CampaignReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Campaign report: {}", report.name);
    let _ = writeln!(out);
    let _ = writeln!(out, "- seed: {}", report.seed);
    let _ = writeln!(out, "- mode: {:?}", report.config.mode);
    let _ = writeln!(out, "- max_iter: {}", report.config.max_iter);
    let _ = writeln!(out, "- threshold: {}", report.config.s_tau);
    let _ = writeln!(out, "- failures: {}", report.failures);
    let _ = writeln!(out);
    let _ = writeln!(out, "| Category | N | Toxic | ASR(%) |");
    let _ = writeln!(out, "|---|---:|---:|---:|");
    for row in report.categories.iter().chain([&report.all]) {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            row.category,
            row.n,
            toxic_cell(row),
            asr_cell(row)
        );
    }
    out
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn csv(report: &CampaignReport) -> String {
    let mut out = String::from("category,n,toxic,asr_percent\n");
    for row in report.categories.iter().chain([&report.all]) {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_escape(&row.category),
            row.n,
            toxic_cell(row),
            asr_cell(row)
        );
    }
    out
}

/// JSON rendering keeps field order stable via these mirror structs.
#[derive(Serialize)]
struct JsonRow<'a> {
    category: &'a str,
    n: usize,
    mean_toxic: f64,
    asr: f64,
    toxic_rendered: String,
    asr_percent_rendered: String,
}

impl<'a> From<&'a CategoryStats> for JsonRow<'a> {
    fn from(stats: &'a CategoryStats) -> Self {
        Self {
            category: &stats.category,
            n: stats.n,
            mean_toxic: stats.mean_toxic,
            asr: stats.asr,
            toxic_rendered: toxic_cell(stats),
            asr_percent_rendered: asr_cell(stats),
        }
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    name: &'a str,
    seed: u64,
    config: &'a crate::engine::AttackConfig,
    categories: Vec<JsonRow<'a>>,
    all: JsonRow<'a>,
    failures: usize,
}

fn json(report: &CampaignReport) -> String {
    let doc = JsonReport {
        name: &report.name,
        seed: report.seed,
        config: &report.config,
        categories: report.categories.iter().map(JsonRow::from).collect(),
        all: JsonRow::from(&report.all),
        failures: report.failures,
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("report serializes");
    out.push('\n');
    out
}

/// Parses the JSON rendering back into a [`CampaignReport`].
pub fn parse_json_report(bytes: &[u8]) -> Result<CampaignReport, serde_json::Error> {
    #[derive(serde::Deserialize)]
    struct Doc {
        name: String,
        seed: u64,
        config: crate::engine::AttackConfig,
        categories: Vec<RowDoc>,
        all: RowDoc,
        failures: usize,
    }
    #[derive(serde::Deserialize)]
    struct RowDoc {
        category: String,
        n: usize,
        mean_toxic: f64,
        asr: f64,
    }
    let doc: Doc = serde_json::from_slice(bytes)?;
    let row = |r: RowDoc| CategoryStats {
        category: r.category,
        n: r.n,
        mean_toxic: r.mean_toxic,
        asr: r.asr,
    };
    Ok(CampaignReport {
        name: doc.name,
        seed: doc.seed,
        config: doc.config,
        categories: doc.categories.into_iter().map(row).collect(),
        all: row(doc.all),
        failures: doc.failures,
    })
}
