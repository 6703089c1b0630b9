use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, DesignError, Result};
use crate::pack::{Arrangement, TrainingExample};

/// One line of an exported dataset. Field order is fixed, so identical
/// inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportRecord {
    pub example_id: String,
    pub arrangement: Arrangement,
    pub member_ids: Vec<String>,
    pub token_ids: Vec<u32>,
    pub total_tokens: usize,
}

impl From<&TrainingExample> for ExportRecord {
    fn from(e: &TrainingExample) -> Self {
        Self {
            example_id: e.example_id.clone(),
            arrangement: e.arrangement,
            member_ids: e.members.clone(),
            token_ids: e.tokens.clone(),
            total_tokens: e.total_tokens(),
        }
    }
}

pub fn export_dataset(examples: &[TrainingExample], path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    for e in examples {
        let line = serde_json::to_string(&ExportRecord::from(e)).expect("records serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_dataset(path: &Path) -> Result<Vec<ExportRecord>> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let rec = serde_json::from_str(&line).map_err(|e| DesignError::Parse { path: path.to_path_buf(), line: i + 1, msg: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}
