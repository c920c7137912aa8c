use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::Method;

pub const CSV_HEADER: &str = "round,client_id,train_loss,test_accuracy,wall_ms";

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One row per (round, client). Missing values (skipped training, empty
/// test mask) are written as empty CSV cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub round: usize,
    pub client_id: usize,
    pub train_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub method: Method,
    pub seed: u64,
    pub rows: Vec<MetricRow>,
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl MetricsLog {
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            method,
            seed,
            rows: Vec::new(),
        }
    }

    pub fn num_rounds(&self) -> usize {
        self.rows.iter().map(|r| r.round + 1).max().unwrap_or(0)
    }

    /// Unweighted mean test accuracy across clients that have one.
    pub fn round_mean(&self, round: usize) -> Option<f64> {
        let accs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.round == round)
            .filter_map(|r| r.test_accuracy)
            .collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }

    pub fn round_means(&self) -> Vec<Option<f64>> {
        (0..self.num_rounds()).map(|r| self.round_mean(r)).collect()
    }

    pub fn final_mean_accuracy(&self) -> Option<f64> {
        self.num_rounds().checked_sub(1).and_then(|r| self.round_mean(r))
    }

    /// Shortest round-trip float formatting, so parsing the CSV back gives
    /// identical values.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(48 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.round,
                r.client_id,
                cell(r.train_loss),
                cell(r.test_accuracy),
                r.wall_ms
            );
        }
        out
    }

    pub fn from_csv(text: &str, method: Method, seed: u64) -> Result<Self, MetricsError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| MetricsError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if headers.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
            return Err(MetricsError::Parse {
                line: 1,
                message: format!("expected header {CSV_HEADER}"),
            });
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let err = |message: String| MetricsError::Parse { line, message };
            let record = record.map_err(|e| err(e.to_string()))?;
            if record.len() != 5 {
                return Err(err(format!("expected 5 fields, got {}", record.len())));
            }
            let opt = |s: &str| -> Result<Option<f64>, MetricsError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| err(format!("bad number {s:?}")))
                }
            };
            rows.push(MetricRow {
                round: record[0].parse().map_err(|_| err("bad round".into()))?,
                client_id: record[1].parse().map_err(|_| err("bad client_id".into()))?,
                train_loss: opt(&record[2])?,
                test_accuracy: opt(&record[3])?,
                wall_ms: record[4].parse().map_err(|_| err("bad wall_ms".into()))?,
            });
        }
        Ok(Self { method, seed, rows })
    }

    /// SHA-256 over everything except wall-clock timings.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.method.name().as_bytes());
        h.update(self.seed.to_le_bytes());
        for r in &self.rows {
            h.update((r.round as u64).to_le_bytes());
            h.update((r.client_id as u64).to_le_bytes());
            for x in [r.train_loss, r.test_accuracy] {
                match x {
                    Some(v) => {
                        h.update([1]);
                        h.update(v.to_bits().to_le_bytes());
                    }
                    None => h.update([0]),
                }
            }
        }
        hex::encode(h.finalize())
    }

    pub fn mean_wall_ms_per_round(&self) -> f64 {
        let rounds = self.num_rounds().max(1);
        self.rows.iter().map(|r| r.wall_ms).sum::<f64>() / rounds as f64
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Final mean accuracy across seeds for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub final_accuracy: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl RunSummary {
    pub fn from_logs(logs: &[MetricsLog]) -> Option<Self> {
        let method = logs.first()?.method;
        let final_accuracy: Vec<f64> = logs.iter().map(|l| l.final_mean_accuracy().unwrap_or(f64::NAN)).collect();
        let (mean, std) = mean_std(&final_accuracy);
        Some(Self {
            method,
            seeds: logs.iter().map(|l| l.seed).collect(),
            final_accuracy,
            mean,
            std,
        })
    }
}
