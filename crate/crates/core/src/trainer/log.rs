use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossBreakdown;

pub const LOSS_LOG_HEADER: &str = "iteration,l_ang,l_scon,l_reg,total,wall_ms";

/// One training step. `iteration` counts completed steps, so the first row is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossLogRow {
    pub iteration: u64,
    pub breakdown: LossBreakdown,
    /// Wall time of the step; always 0 in deterministic mode.
    pub wall_ms: u64,
}

impl LossLogRow {
    pub fn to_csv_line(&self) -> String {
        let b = &self.breakdown;
        format!(
            "{},{},{},{},{},{}",
            self.iteration, b.l_ang, b.l_scon, b.l_reg, b.total, self.wall_ms
        )
    }
}

pub fn format_loss_log(rows: &[LossLogRow]) -> String {
    let mut out = String::from(LOSS_LOG_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.to_csv_line());
    }
    out
}

pub fn write_loss_log(path: impl AsRef<Path>, rows: &[LossLogRow]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_loss_log(rows)).map_err(|e| Error::io(path, e))
}

pub fn parse_loss_log(text: &str, path: &Path) -> Result<Vec<LossLogRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LOSS_LOG_HEADER => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header `{LOSS_LOG_HEADER}`"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", fields.len())));
        }
        let float = |j: usize| fields[j].parse::<f64>().map_err(|e| err(format!("field {}: {e}", j + 1)));
        rows.push(LossLogRow {
            iteration: fields[0].parse().map_err(|e| err(format!("iteration: {e}")))?,
            breakdown: LossBreakdown {
                l_ang: float(1)?,
                l_scon: float(2)?,
                l_reg: float(3)?,
                total: float(4)?,
            },
            wall_ms: fields[5].parse().map_err(|e| err(format!("wall_ms: {e}")))?,
        });
    }
    Ok(rows)
}

/// Trailing moving average with the given window (shorter at the start).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_round_trip() {
        let rows = vec![
            LossLogRow {
                iteration: 1,
                breakdown: LossBreakdown::combine(0.1, 1.0 / 3.0, 2e-17, 0.6, 0.1),
                wall_ms: 12,
            },
            LossLogRow {
                iteration: 2,
                breakdown: LossBreakdown::combine(7.25, 0.5, 0.0, 0.6, 0.1),
                wall_ms: 0,
            },
        ];
        let text = format_loss_log(&rows);
        assert!(text.starts_with(LOSS_LOG_HEADER));
        assert_eq!(parse_loss_log(&text, Path::new("x")).unwrap(), rows);
    }

    #[test]
    fn bad_header_rejected() {
        assert!(parse_loss_log("a,b\n", Path::new("x")).is_err());
    }

    #[test]
    fn moving_average_window() {
        let avg = moving_average(&[1.0, 3.0, 5.0, 7.0], 2);
        assert_eq!(avg, vec![1.0, 2.0, 4.0, 6.0]);
    }
}
