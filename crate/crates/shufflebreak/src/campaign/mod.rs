//! Dataset ingestion, campaign execution and reporting.

mod metrics;
mod report;
mod runner;

pub use metrics::{aggregate, compute_asr, CampaignReport, CategoryStats, MetricsError};
pub use report::{parse_json_report, render_report, ReportFormat};
pub use runner::run_campaign;

use crate::img::ProtectedRegion;
use crate::text::TextPrompt;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}:{line}: {msg}")]
    Line {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("manifest {0} contains no instructions")]
    Empty(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One benchmark item: the harmful text, its category label, and the
/// optional image with its protected typography rectangle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instruction {
    pub id: String,
    pub category: String,
    pub text: TextPrompt,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected_region: Option<ProtectedRegion>,
}

/// A validated instruction set.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub name: String,
    pub source: String,
    pub entries: Vec<Instruction>,
}

/// Raw manifest line as stored on disk.
#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    category: String,
    text: String,
    #[serde(default)]
    image: Option<String>,
    /// Normalized rectangle (x0, y0, x1, y1).
    #[serde(default)]
    region: Option<[f64; 4]>,
}

/// Optional first line naming the dataset.
#[derive(Debug, Deserialize)]
struct RawHeader {
    name: String,
    #[serde(default)]
    source: Option<String>,
}

/// Loads a newline-delimited JSON manifest.
///
/// Each line is one instruction record `{id, category, text, image?,
/// region?}`; an optional leading `{name, source?}` line names the dataset.
/// Image paths resolve relative to the manifest's directory and must exist.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetManifest, ManifestError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let content = std::fs::read_to_string(path)?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());

    let mut name = stem;
    let mut source = "unspecified".to_string();
    let mut entries = Vec::new();
    let mut ids = HashSet::new();
    let mut saw_record = false;

    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |msg: String| ManifestError::Line {
            path: display.clone(),
            line: line_no,
            msg,
        };
        if !saw_record {
            // A header line has no `id`; try it before the record shape.
            if let Ok(header) = serde_json::from_str::<RawHeader>(line) {
                if serde_json::from_str::<RawRecord>(line).is_err() {
                    name = header.name;
                    if let Some(s) = header.source {
                        source = s;
                    }
                    saw_record = true;
                    continue;
                }
            }
        }
        saw_record = true;
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        if !ids.insert(raw.id.clone()) {
            return Err(fail(format!("duplicate instruction id `{}`", raw.id)));
        }
        let text = TextPrompt::new(raw.text);
        if text.is_blank() {
            return Err(fail(format!("instruction `{}` has empty text", raw.id)));
        }
        let image_path = match raw.image {
            None => None,
            Some(rel) => {
                let resolved = base_dir.join(&rel);
                if !resolved.is_file() {
                    return Err(fail(format!(
                        "image file `{}` does not exist",
                        resolved.display()
                    )));
                }
                Some(resolved)
            }
        };
        let protected_region = match raw.region {
            None => None,
            Some([x0, y0, x1, y1]) => Some(
                ProtectedRegion::new(x0, y0, x1, y1)
                    .map_err(|e| fail(format!("instruction `{}`: {e}", raw.id)))?,
            ),
        };
        entries.push(Instruction {
            id: raw.id,
            category: raw.category,
            text,
            image_path,
            protected_region,
        });
    }

    if entries.is_empty() {
        return Err(ManifestError::Empty(display));
    }
    Ok(DatasetManifest {
        name,
        source,
        entries,
    })
}
