//! Output files: `<suite>.csv`, `<suite>.summary.json`, `<suite>.timing.json`.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::report::{SuiteReport, Table, Timing};

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output failed: {0}")]
    Json(#[from] serde_json::Error),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> EmitError + '_ {
    move |source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The table as CSV text; an empty table still gets its header line.
pub fn csv_bytes(table: &Table) -> Result<Vec<u8>, EmitError> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|c| c.render()))?;
    }
    w.into_inner().map_err(|e| EmitError::Io {
        path: PathBuf::from("<memory>"),
        source: e.into_error(),
    })
}

pub fn summary_json(report: &SuiteReport) -> Result<String, EmitError> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn load_summary(path: &Path) -> Result<SuiteReport, EmitError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Emitted {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub timing: PathBuf,
}

pub fn paths(dir: &Path, suite: &str) -> Emitted {
    Emitted {
        csv: dir.join(format!("{suite}.csv")),
        summary: dir.join(format!("{suite}.summary.json")),
        timing: dir.join(format!("{suite}.timing.json")),
    }
}

pub fn emit(report: &SuiteReport, timing: &Timing, dir: &Path) -> Result<Emitted, EmitError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let p = paths(dir, &report.suite);
    fs::write(&p.csv, csv_bytes(&report.table)?).map_err(io(&p.csv))?;
    fs::write(&p.summary, summary_json(report)?).map_err(io(&p.summary))?;
    fs::write(&p.timing, serde_json::to_string_pretty(timing)?).map_err(io(&p.timing))?;
    Ok(p)
}
