//! On-disk layout for attack artifacts.
//!
//! One subdirectory per instruction id under the archive root:
//!
//! ```text
//! <root>/<id>/trace.ndjson    one iteration record per line, then a summary
//! <root>/<id>/iter_0001.png   mutated image sent at iteration 1 (if any)
//! ```

use crate::engine::{AttackTrace, GateSummary, IterationRecord, TraceError};
use crate::img::{save_png, ImageBuffer};
use crate::judge::ToxicScore;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Trailer line of a trace file: the whole trace minus its records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSummary {
    pub instruction_id: String,
    pub category: String,
    pub seed: u64,
    pub best_index: Option<u32>,
    pub best_score: ToxicScore,
    pub success: bool,
    pub target_queries: u32,
    pub judge_queries: u32,
    pub gate: Option<GateSummary>,
    pub error: Option<TraceError>,
}

impl From<&AttackTrace> for TraceSummary {
    fn from(trace: &AttackTrace) -> Self {
        Self {
            instruction_id: trace.instruction_id.clone(),
            category: trace.category.clone(),
            seed: trace.seed,
            best_index: trace.best_index,
            best_score: trace.best_score,
            success: trace.success,
            target_queries: trace.target_queries,
            judge_queries: trace.judge_queries,
            gate: trace.gate.clone(),
            error: trace.error.clone(),
        }
    }
}

/// One line of a trace file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLine {
    Record(IterationRecord),
    Summary(TraceSummary),
}

/// Writes traces and mutated images beneath a root directory.
pub struct TraceArchive {
    root: PathBuf,
}

impl TraceArchive {
    pub fn create(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Directory for one instruction; ids are sanitized for the filesystem.
    pub fn instruction_dir(&self, instruction_id: &str) -> PathBuf {
        let safe: String = instruction_id
            .chars()
            .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        self.root.join(safe)
    }

    pub fn write_iteration_image(
        &self,
        instruction_id: &str,
        iteration: u32,
        image: &ImageBuffer,
    ) -> std::io::Result<()> {
        let dir = self.instruction_dir(instruction_id);
        std::fs::create_dir_all(&dir)?;
        save_png(image, dir.join(format!("iter_{iteration:04}.png")))
            .map_err(|e| std::io::Error::other(e.to_string()))
    }

    /// Writes the newline-delimited trace file for one instruction.
    pub fn write_trace(&self, trace: &AttackTrace) -> std::io::Result<PathBuf> {
        let dir = self.instruction_dir(&trace.instruction_id);
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("trace.ndjson");
        let mut file = std::fs::File::create(&path)?;
        for record in &trace.records {
            let line = serde_json::to_string(&TraceLine::Record(record.clone()))?;
            writeln!(file, "{line}")?;
        }
        let summary = serde_json::to_string(&TraceLine::Summary(TraceSummary::from(trace)))?;
        writeln!(file, "{summary}")?;
        Ok(path)
    }

    /// Reads a trace file back into its lines.
    pub fn read_trace(path: impl AsRef<Path>) -> std::io::Result<Vec<TraceLine>> {
        let content = std::fs::read_to_string(path)?;
        content
            .lines()
            .map(|line| serde_json::from_str(line).map_err(std::io::Error::from))
            .collect()
    }
}
