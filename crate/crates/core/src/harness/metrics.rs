use std::fs::{File, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::graphcore::GraphError;

/// One evaluation point. Columns that do not apply to a task stay empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub loss: Option<f64>,
    pub recon: Option<f64>,
    pub kl: Option<f64>,
    pub accuracy: Option<f64>,
    pub iou: Option<f64>,
    pub valid: Option<f64>,
    pub accurate: Option<f64>,
    pub unique: Option<f64>,
    pub novel: Option<f64>,
    pub wall_time: f64,
}

/// CSV sink with a header row. An existing file is never reopened: the
/// writer picks the first free name `stem-1.csv`, `stem-2.csv`, ...
pub struct MetricsWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self, GraphError> {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("metrics").to_string();
        let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv").to_string();
        let mut candidate = path.to_path_buf();
        for attempt in 0.. {
            if attempt > 0 {
                candidate = path.with_file_name(format!("{stem}-{attempt}.{ext}"));
            }
            match OpenOptions::new().write(true).create_new(true).open(&candidate) {
                Ok(f) => {
                    return Ok(MetricsWriter { path: candidate, inner: csv::WriterBuilder::new().has_headers(true).from_writer(f) })
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e.into()),
            }
        }
        unreachable!("unbounded search")
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends and flushes one row.
    pub fn write(&mut self, row: &MetricsRow) -> Result<(), GraphError> {
        self.inner.serialize(row).map_err(csv_error)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, GraphError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> GraphError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => GraphError::Io(io),
            _ => unreachable!(),
        }
    } else {
        GraphError::Parse { line, detail: e.to_string() }
    }
}
