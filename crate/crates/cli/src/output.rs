//! CSV encoders and atomic file writes.
//!
//! Floats go through `f64`'s `Display`, which is the shortest string that
//! parses back to the same value and never depends on locale.

use std::io::Write;
use std::path::Path;

use selmean_core::sim::{FigureRow, ImprovementTable, Metric};

use crate::error::{CliError, Result};

pub const FIGURE_HEADER: [&str; 10] = ["n1", "n2", "sigma", "theta", "estimator", "metric", "value", "se", "reps", "seed"];

/// Write `bytes` to a sibling temporary file, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let err = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

fn finish(writer: csv::Writer<Vec<u8>>) -> Vec<u8> {
    writer.into_inner().expect("in-memory CSV writer cannot fail to flush")
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Mse => "mse",
        Metric::Bias => "bias",
    }
}

pub fn figure_rows_csv(rows: &[FigureRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FIGURE_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.n1.to_string(),
            r.n2.to_string(),
            r.sigma.to_string(),
            r.theta.to_string(),
            r.estimator.tag().to_string(),
            metric_name(r.metric).to_string(),
            r.value.to_string(),
            r.se.to_string(),
            r.reps.to_string(),
            r.seed.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// One row per theta, one percentage column per design, then the matching
/// standard-error columns.
pub fn improvement_table_csv(table: &ImprovementTable) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["theta".to_string()];
    header.extend(table.designs.iter().map(|(a, b)| format!("({a},{b})")));
    header.extend(table.designs.iter().map(|(a, b)| format!("se({a},{b})")));
    w.write_record(&header).expect("in-memory write");
    for (theta, row) in table.theta_grid.iter().zip(&table.rows) {
        let mut record = vec![theta.to_string()];
        record.extend(row.iter().map(|p| p.percent.to_string()));
        record.extend(row.iter().map(|p| p.percent_se.to_string()));
        w.write_record(&record).expect("in-memory write");
    }
    finish(w)
}
