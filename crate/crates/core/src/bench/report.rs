//! Record and summary files.
//!
//! Floats are rounded to nine significant digits before they are stored in
//! a record, so writing and re-reading a file reproduces it exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::aggregate::{aggregate, Summary};
use super::{BenchError, Result, RunRecord};

pub const RECORD_COLUMNS: [&str; 22] = [
    "dataset",
    "fold",
    "arm",
    "seed",
    "completed",
    "val_log_loss",
    "test_log_loss",
    "val_roc_auc",
    "test_roc_auc",
    "baseline_val_roc_auc",
    "baseline_test_roc_auc",
    "norm_val_roc_auc",
    "norm_test_roc_auc",
    "norm_val_log_loss",
    "norm_test_log_loss",
    "weight_distance_total",
    "weight_distance_hidden",
    "weight_distance_head",
    "best_step",
    "steps_run",
    "wall_seconds",
    "error",
];

/// Round to nine significant digits.
pub fn quantize(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

pub fn fmt_float(x: f64) -> String {
    format!("{}", quantize(x))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> BenchError {
    BenchError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl RunRecord {
    pub fn to_row(&self) -> Vec<String> {
        vec![
            self.dataset.clone(),
            self.fold.to_string(),
            self.arm.clone(),
            self.seed.to_string(),
            self.completed.to_string(),
            fmt_opt(self.val_log_loss),
            fmt_opt(self.test_log_loss),
            fmt_opt(self.val_roc_auc),
            fmt_opt(self.test_roc_auc),
            fmt_opt(self.baseline_val_roc_auc),
            fmt_opt(self.baseline_test_roc_auc),
            fmt_opt(self.norm_val_roc_auc),
            fmt_opt(self.norm_test_roc_auc),
            fmt_opt(self.norm_val_log_loss),
            fmt_opt(self.norm_test_log_loss),
            fmt_opt(self.weight_distance_total),
            fmt_opt(self.weight_distance_hidden),
            fmt_opt(self.weight_distance_head),
            self.best_step.map(|s| s.to_string()).unwrap_or_default(),
            self.steps_run.to_string(),
            fmt_float(self.wall_seconds),
            self.error.clone().unwrap_or_default(),
        ]
    }

    pub fn from_row(row: &csv::StringRecord) -> std::result::Result<Self, String> {
        if row.len() != RECORD_COLUMNS.len() {
            return Err(format!("expected {} fields, found {}", RECORD_COLUMNS.len(), row.len()));
        }
        let f = |i: usize| -> std::result::Result<Option<f64>, String> {
            let s = &row[i];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| format!("{}: {e}", RECORD_COLUMNS[i]))
            }
        };
        let int = |i: usize| -> std::result::Result<u64, String> {
            row[i].parse().map_err(|e| format!("{}: {e}", RECORD_COLUMNS[i]))
        };
        Ok(Self {
            dataset: row[0].to_string(),
            fold: int(1)? as usize,
            arm: row[2].to_string(),
            seed: int(3)?,
            completed: row[4].parse().map_err(|e| format!("completed: {e}"))?,
            val_log_loss: f(5)?,
            test_log_loss: f(6)?,
            val_roc_auc: f(7)?,
            test_roc_auc: f(8)?,
            baseline_val_roc_auc: f(9)?,
            baseline_test_roc_auc: f(10)?,
            norm_val_roc_auc: f(11)?,
            norm_test_roc_auc: f(12)?,
            norm_val_log_loss: f(13)?,
            norm_test_log_loss: f(14)?,
            weight_distance_total: f(15)?,
            weight_distance_hidden: f(16)?,
            weight_distance_head: f(17)?,
            best_step: if row[18].is_empty() { None } else { Some(int(18)? as usize) },
            steps_run: int(19)? as usize,
            wall_seconds: f(20)?.unwrap_or(0.0),
            error: (!row[21].is_empty()).then(|| row[21].to_string()),
        })
    }
}

pub fn records_to_csv(records: &[RunRecord]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(RECORD_COLUMNS).expect("in-memory write");
    for r in records {
        w.write_record(r.to_row()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    fs::write(path, records_to_csv(records)).map_err(|e| io_err(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let header = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    if header.iter().ne(RECORD_COLUMNS.iter().copied()) {
        return Err(io_err(path, "unexpected records header"));
    }
    rdr.records()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| io_err(path, e))?;
            RunRecord::from_row(&row).map_err(|e| io_err(path, format!("row {}: {e}", i + 1)))
        })
        .collect()
}

fn corr_matrix_csv(summary: &Summary) -> String {
    let m = &summary.corr_matrix;
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header = vec!["dataset".to_string()];
    header.extend(m.arms.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (d, row) in m.datasets.iter().zip(&m.cells) {
        let mut rec = vec![d.clone()];
        rec.extend(row.iter().map(|c| fmt_opt(*c)));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn ranks_csv(summary: &Summary) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(["dataset", "fold", "seed", "arm", "rank"]).expect("in-memory write");
    for r in &summary.ranks {
        w.write_record([
            r.dataset.clone(),
            r.fold.to_string(),
            r.seed.to_string(),
            r.arm.clone(),
            fmt_float(r.rank),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn boxplot_csv(summary: &Summary) -> String {
    let mut out = String::from("arm,split,n,median,q1,q3,whisker_low,whisker_high,mean,std\n");
    for a in &summary.arms {
        for (split, stats) in [("test", &a.test_score), ("val", &a.val_score)] {
            if let Some(b) = stats {
                let _ = writeln!(
                    out,
                    "{},{split},{},{},{},{},{},{},{},{}",
                    csv_field(&a.arm),
                    b.n,
                    fmt_float(b.median),
                    fmt_float(b.q1),
                    fmt_float(b.q3),
                    fmt_float(b.whisker_low),
                    fmt_float(b.whisker_high),
                    fmt_float(b.mean),
                    fmt_float(b.std)
                );
            }
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Write `records.csv`, `summary.json`, `corr_matrix.csv`, `ranks.csv` and
/// `boxplot_data.csv` into `dir`.
pub fn emit_reports(records: &[RunRecord], dir: &Path) -> Result<Summary> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let summary = aggregate(records);
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| io_err(&p, e))
    };
    write("records.csv", records_to_csv(records))?;
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    write("summary.json", json)?;
    write("corr_matrix.csv", corr_matrix_csv(&summary))?;
    write("ranks.csv", ranks_csv(&summary))?;
    write("boxplot_data.csv", boxplot_csv(&summary))?;
    Ok(summary)
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}
