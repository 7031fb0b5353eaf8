//! Grid sweeps over config keys with a one-row-per-point summary.

use super::metrics::RunMetrics;
use super::run::{run_experiment, HarnessError};
use crate::config::{ConfigError, RunConfig};

/// Cartesian product of `section.key` axes; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepGrid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl SweepGrid {
    /// Parses one axis, `section.key=v1,v2,...`.
    pub fn parse_axis(spec: &str) -> Result<(String, Vec<String>), ConfigError> {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::new(format!("grid axis `{spec}` is not section.key=v1,v2,...")))?;
        let key = key.trim();
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if !key.contains('.') || values.iter().any(String::is_empty) {
            return Err(ConfigError::new(format!("grid axis `{spec}` is not section.key=v1,v2,...")));
        }
        Ok((key.to_string(), values))
    }

    pub fn parse(specs: &[impl AsRef<str>]) -> Result<Self, ConfigError> {
        let axes = specs
            .iter()
            .map(|s| Self::parse_axis(s.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { axes })
    }

    pub fn len(&self) -> usize {
        if self.axes.is_empty() {
            0
        } else {
            self.axes.iter().map(|(_, v)| v.len()).product()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every grid point as its list of `(key, value)` assignments.
    pub fn points(&self) -> Vec<Vec<(String, String)>> {
        let mut out = vec![Vec::new()];
        for (key, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push((key.clone(), v.clone()));
                        p
                    })
                })
                .collect();
        }
        if self.axes.is_empty() {
            Vec::new()
        } else {
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: Vec<(String, String)>,
    pub final_train_loss: f64,
    pub final_eval_loss: f64,
    pub final_eval_accuracy: Option<f64>,
    /// Mean bytes rank 0 sent per step.
    pub bytes_per_step: f64,
    /// Mean encoded component bytes per step.
    pub payload_bytes_per_step: f64,
}

impl SweepRow {
    fn from_metrics(point: Vec<(String, String)>, m: &RunMetrics) -> Self {
        let steps: Vec<_> = m.rows.iter().filter(|r| r.step > 0).collect();
        let payload = if steps.is_empty() {
            0.0
        } else {
            steps.iter().map(|r| r.payload_bytes as f64).sum::<f64>() / steps.len() as f64
        };
        Self {
            point,
            final_train_loss: m.final_train_loss,
            final_eval_loss: m.final_eval_loss,
            final_eval_accuracy: m.final_eval_accuracy,
            bytes_per_step: m.mean_bytes_sent(),
            payload_bytes_per_step: payload,
        }
    }
}

/// Runs every grid point on top of `base`.
pub fn run_sweep(base: &RunConfig, grid: &SweepGrid) -> Result<Vec<(SweepRow, RunMetrics)>, HarnessError> {
    if grid.is_empty() {
        return Err(ConfigError::new("sweep grid is empty").into());
    }
    let points = grid.points();
    let configs = points
        .iter()
        .map(|point| {
            let mut cfg = base.clone();
            for (k, v) in point {
                cfg.apply_override(&format!("{k}={v}"))?;
            }
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    points
        .into_iter()
        .zip(configs)
        .map(|(point, cfg)| {
            let m = run_experiment(&cfg)?;
            Ok((SweepRow::from_metrics(point, &m), m))
        })
        .collect()
}

pub fn summary_csv(grid: &SweepGrid, rows: &[SweepRow]) -> String {
    let mut out: Vec<String> = grid.axes.iter().map(|(k, _)| k.clone()).collect();
    out.extend(
        ["final_train_loss", "final_eval_loss", "final_eval_accuracy", "bytes_per_step", "payload_bytes_per_step"]
            .map(String::from),
    );
    let mut csv = out.join(",");
    csv.push('\n');
    for r in rows {
        let mut fields: Vec<String> = r.point.iter().map(|(_, v)| v.clone()).collect();
        fields.push(r.final_train_loss.to_string());
        fields.push(r.final_eval_loss.to_string());
        fields.push(r.final_eval_accuracy.map(|a| a.to_string()).unwrap_or_default());
        fields.push(r.bytes_per_step.to_string());
        fields.push(r.payload_bytes_per_step.to_string());
        csv += &fields.join(",");
        csv.push('\n');
    }
    csv
}
