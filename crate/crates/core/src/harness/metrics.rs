//! Per-step metrics and their CSV form.
//!
//! Columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `step` | 0 for the initial evaluation, then 1..=steps |
//! | `train_loss` | mean of the workers' batch losses; full training-set loss on row 0 |
//! | `grad_norm` | mean of the workers' local gradient L2 norms |
//! | `q_norm` | L2 norm of the synchronized quantity: merged `Q` for DeMo, mean gradient for baselines |
//! | `payload_bytes` | rank 0's encoded component bytes (indices + amplitudes) |
//! | `bytes_sent` | bytes rank 0 put on the wire this step |
//! | `bytes_received` | bytes rank 0 read from its peers this step |
//! | `eval_loss` | held-out loss, on evaluation steps only |
//! | `eval_accuracy` | held-out accuracy for classifiers, on evaluation steps only |
//! | `wall_clock_ms` | optional; milliseconds since the run started |
//!
//! Empty fields mean "not measured on this row".

use crate::transport::CommLedger;

pub const BASE_COLUMNS: [&str; 9] = [
    "step",
    "train_loss",
    "grad_norm",
    "q_norm",
    "payload_bytes",
    "bytes_sent",
    "bytes_received",
    "eval_loss",
    "eval_accuracy",
];

pub const WALL_CLOCK_COLUMN: &str = "wall_clock_ms";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRow {
    pub step: u64,
    pub train_loss: f64,
    pub grad_norm: Option<f64>,
    pub q_norm: Option<f64>,
    pub payload_bytes: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub eval_loss: Option<f64>,
    pub eval_accuracy: Option<f64>,
    pub wall_clock_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub rows: Vec<MetricsRow>,
    /// Loss on the whole training set with the final parameters.
    pub final_train_loss: f64,
    pub final_eval_loss: f64,
    pub final_eval_accuracy: Option<f64>,
    /// Rank 0's ledger; empty for baselines, which do not use a transport.
    pub ledger: CommLedger,
    /// Hash over every gathered frame seen by rank 0.
    pub frame_digest: u64,
    pub final_params: Vec<Vec<f64>>,
    pub record_wall_clock: bool,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunMetrics {
    pub fn header(record_wall_clock: bool) -> String {
        let mut h = BASE_COLUMNS.join(",");
        if record_wall_clock {
            h.push(',');
            h.push_str(WALL_CLOCK_COLUMN);
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::header(self.record_wall_clock);
        out.push('\n');
        for r in &self.rows {
            out += &format!(
                "{},{},{},{},{},{},{},{},{}",
                r.step,
                r.train_loss,
                opt(r.grad_norm),
                opt(r.q_norm),
                r.payload_bytes,
                r.bytes_sent,
                r.bytes_received,
                opt(r.eval_loss),
                opt(r.eval_accuracy)
            );
            if self.record_wall_clock {
                out.push(',');
                out += &opt(r.wall_clock_ms);
            }
            out.push('\n');
        }
        out
    }

    /// Mean bytes sent per optimization step (row 0 excluded).
    pub fn mean_bytes_sent(&self) -> f64 {
        let steps: Vec<_> = self.rows.iter().filter(|r| r.step > 0).collect();
        if steps.is_empty() {
            return 0.0;
        }
        steps.iter().map(|r| r.bytes_sent as f64).sum::<f64>() / steps.len() as f64
    }
}

/// Parses a metrics CSV by column name. Unknown columns are ignored.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or("empty CSV")?.split(',').map(str::trim).collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let step_col = col("step").ok_or("missing `step` column")?;
    let loss_col = col("train_loss").ok_or("missing `train_loss` column")?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(format!("row {}: expected {} fields, found {}", i + 2, header.len(), fields.len()));
        }
        let real = |c: Option<usize>| -> Result<Option<f64>, String> {
            match c.map(|c| fields[c]) {
                None | Some("") => Ok(None),
                Some(s) => s.parse().map(Some).map_err(|_| format!("row {}: bad number `{s}`", i + 2)),
            }
        };
        let int = |c: Option<usize>| -> Result<u64, String> {
            match c.map(|c| fields[c]) {
                None | Some("") => Ok(0),
                Some(s) => s.parse().map_err(|_| format!("row {}: bad integer `{s}`", i + 2)),
            }
        };
        rows.push(MetricsRow {
            step: int(Some(step_col))?,
            train_loss: real(Some(loss_col))?.ok_or_else(|| format!("row {}: empty train_loss", i + 2))?,
            grad_norm: real(col("grad_norm"))?,
            q_norm: real(col("q_norm"))?,
            payload_bytes: int(col("payload_bytes"))?,
            bytes_sent: int(col("bytes_sent"))?,
            bytes_received: int(col("bytes_received"))?,
            eval_loss: real(col("eval_loss"))?,
            eval_accuracy: real(col("eval_accuracy"))?,
            wall_clock_ms: real(col(WALL_CLOCK_COLUMN))?,
        });
    }
    Ok(rows)
}
