//! Evaluation reports: per-(condition, seed) rows plus mean ± std aggregates,
//! emitted as tab-delimited text. No timestamps anywhere, so identical runs
//! produce identical files.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: String,
    pub seed: u64,
    /// Forward progress in meters, clamped at 0.
    pub distance: f64,
    /// First-fall time, capped at the 20 s episode length.
    pub fall_time: f64,
    pub episode_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub condition: String,
    pub n: usize,
    pub distance_mean: f64,
    pub distance_std: f64,
    pub fall_time_mean: f64,
    pub fall_time_std: f64,
    pub return_mean: f64,
    pub return_std: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn new(mut rows: Vec<ReportRow>) -> Self {
        rows.sort_by(|a, b| a.condition.cmp(&b.condition).then(a.seed.cmp(&b.seed)));
        EvalReport { rows }
    }

    /// Distinct condition ids in row order.
    pub fn conditions(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if out.last().map(|c| c != &r.condition).unwrap_or(true)
                && !out.contains(&r.condition)
            {
                out.push(r.condition.clone());
            }
        }
        out
    }

    /// Population mean ± std per condition over its seeds.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        self.conditions()
            .into_iter()
            .map(|cond| {
                let rows: Vec<&ReportRow> =
                    self.rows.iter().filter(|r| r.condition == cond).collect();
                let d: Vec<f64> = rows.iter().map(|r| r.distance).collect();
                let f: Vec<f64> = rows.iter().map(|r| r.fall_time).collect();
                let ret: Vec<f64> = rows.iter().map(|r| r.episode_return).collect();
                let (dm, ds) = mean_std(&d);
                let (fm, fs) = mean_std(&f);
                let (rm, rs) = mean_std(&ret);
                AggregateRow {
                    condition: cond,
                    n: rows.len(),
                    distance_mean: dm,
                    distance_std: ds,
                    fall_time_mean: fm,
                    fall_time_std: fs,
                    return_mean: rm,
                    return_std: rs,
                }
            })
            .collect()
    }

    pub fn write_rows_tsv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "condition\tseed\tdistance_m\tfall_time_s\treturn")?;
        for r in &self.rows {
            writeln!(
                w,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                r.condition, r.seed, r.distance, r.fall_time, r.episode_return
            )?;
        }
        Ok(())
    }

    pub fn write_summary_tsv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "condition\tn\tdistance_mean\tdistance_std\tfall_time_mean\tfall_time_std\treturn_mean\treturn_std"
        )?;
        for a in self.aggregate() {
            writeln!(
                w,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                a.condition,
                a.n,
                a.distance_mean,
                a.distance_std,
                a.fall_time_mean,
                a.fall_time_std,
                a.return_mean,
                a.return_std
            )?;
        }
        Ok(())
    }
}
