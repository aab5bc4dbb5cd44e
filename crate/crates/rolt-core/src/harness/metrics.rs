//! Metric log: one JSON object per line per training iteration.

use crate::error::Result;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub struct MetricWriter {
    w: BufWriter<File>,
}

impl MetricWriter {
    pub fn create(path: &Path) -> Result<MetricWriter> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(MetricWriter { w: BufWriter::new(File::create(path)?) })
    }

    pub fn write<T: Serialize>(&mut self, row: &T) -> Result<()> {
        let line = serde_json::to_string(row)
            .map_err(|e| crate::error::RoltError::Config(format!("metric serialize: {e}")))?;
        writeln!(self.w, "{line}")?;
        self.w.flush()?;
        Ok(())
    }
}
