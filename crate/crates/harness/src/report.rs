//! Report emission: canonical JSON files plus plain-text tables.

use std::path::Path;

use serde_json::Value;

use avvp_core::canonical::to_canonical_json;

use crate::HarnessError;

/// Write canonical JSON (sorted keys, six-decimal floats). Identical data
/// always produces byte-identical files.
pub fn emit_report(value: &Value, path: &Path) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut text = to_canonical_json(value);
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Fixed-width text table with a header rule.
pub fn render_table(headers: &[String], rows: &[Vec<String>]) -> String {
    let columns = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(columns) {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let push_row = |cells: &[String], out: &mut String| {
        for (i, cell) in cells.iter().enumerate().take(columns) {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(&format!("{cell:<width$}", width = widths[i]));
        }
        out.push('\n');
    };
    push_row(headers, &mut out);
    let rule: usize = widths.iter().sum::<usize>() + 2 * (columns - 1);
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for row in rows {
        push_row(row, &mut out);
    }
    out
}

pub fn fmt_metric(x: f64) -> String {
    format!("{x:.4}")
}
