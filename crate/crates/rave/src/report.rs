//! Evaluation reports written by `rave eval`.

use std::fs;
use std::path::Path;

use rave_core::metrics::{MetricsReport, TableRow};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source: String,
    pub edited: String,
    pub prompt: String,
    pub frames: usize,
    pub embedder: String,
    pub flow: String,
    pub metrics: MetricsReport,
    /// The headline numbers scaled by 100.
    pub table: TableRow,
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    let text = serde_json::to_string_pretty(report).map_err(Error::json(path))?;
    fs::write(path, text + "\n").map_err(Error::io(path))
}

pub const TABLE_HEADER: &str = "CLIP-F  WarpSSIM  CLIP-T  Q_edit";

/// One row in the column order of the header, two decimals.
pub fn table_line(row: &TableRow) -> String {
    format!(
        "{:>6.2}  {:>8.2}  {:>6.2}  {:>6.2}",
        row.clip_f, row.warp_ssim, row.clip_t, row.q_edit
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_lines_up_with_the_header() {
        let row = TableRow {
            clip_f: 95.3,
            warp_ssim: 71.44,
            clip_t: 29.51,
            q_edit: 21.082,
        };
        let line = table_line(&row);
        assert_eq!(line, " 95.30     71.44   29.51   21.08");
        assert_eq!(line.len(), TABLE_HEADER.len());
    }
}
