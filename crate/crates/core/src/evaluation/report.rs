use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{accuracy_at_threshold, auroc, tpr_at_fpr, RocCurve, VerificationScores};
use crate::error::{Error, Result};

pub const FPR_TARGETS: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const ACCURACY_THRESHOLDS: [f64; 3] = [0.3, 0.4, 0.5];
pub const REPORT_FILE: &str = "report.json";
pub const ROC_LINEAR_FILE: &str = "roc_linear.csv";
pub const ROC_LOG_FILE: &str = "roc_log.csv";

/// Every reported metric. Missing metrics serialize as `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub tpr_at_fpr_1e2: Option<f64>,
    pub tpr_at_fpr_1e3: Option<f64>,
    pub tpr_at_fpr_1e4: Option<f64>,
    #[serde(rename = "acc_at_0.3")]
    pub acc_at_0_3: Option<f64>,
    #[serde(rename = "acc_at_0.4")]
    pub acc_at_0_4: Option<f64>,
    #[serde(rename = "acc_at_0.5")]
    pub acc_at_0_5: Option<f64>,
    pub auroc: Option<f64>,
    pub retrieval_top4: Option<f64>,
    pub pose_consistency: Option<f64>,
    pub kappa: Option<f64>,
    pub mcc: Option<f64>,
}

impl EvalReport {
    /// The verification block: TPR at each of [`FPR_TARGETS`], accuracy at each
    /// of [`ACCURACY_THRESHOLDS`] and AUROC.
    pub fn verification(scores: &VerificationScores) -> Result<Self> {
        let [t2, t3, t4] = FPR_TARGETS.map(|t| tpr_at_fpr(scores, t));
        let [a3, a4, a5] = ACCURACY_THRESHOLDS.map(|t| accuracy_at_threshold(scores, t));
        Ok(EvalReport {
            tpr_at_fpr_1e2: Some(t2?),
            tpr_at_fpr_1e3: Some(t3?),
            tpr_at_fpr_1e4: Some(t4?),
            acc_at_0_3: Some(a3?),
            acc_at_0_4: Some(a4?),
            acc_at_0_5: Some(a5?),
            auroc: Some(auroc(scores)?),
            ..EvalReport::default()
        })
    }

    /// Takes every metric `other` has; keeps ours otherwise.
    pub fn merge(&mut self, other: &EvalReport) {
        macro_rules! take {
            ($($f:ident),*) => {$( if other.$f.is_some() { self.$f = other.$f; } )*};
        }
        take!(
            tpr_at_fpr_1e2,
            tpr_at_fpr_1e3,
            tpr_at_fpr_1e4,
            acc_at_0_3,
            acc_at_0_4,
            acc_at_0_5,
            auroc,
            retrieval_top4,
            pose_consistency,
            kappa,
            mcc
        );
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize") + "\n"
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// FPR 0.00, 0.01, ..., 1.00.
pub fn linear_fpr_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Ten points per decade from 1e-4 up to 1; decade boundaries are exact.
pub fn log_fpr_grid() -> Vec<f64> {
    (0..=40)
        .map(|j| {
            if j % 10 == 0 {
                format!("1e{}", j / 10 - 4).parse().expect("valid literal")
            } else {
                10f64.powf(-4.0 + j as f64 / 10.0)
            }
        })
        .collect()
}

fn curve_csv(roc: &RocCurve, grid: &[f64]) -> String {
    let mut out = String::from("fpr,tpr\n");
    for &f in grid {
        let _ = writeln!(out, "{f},{}", roc.tpr_at(f));
    }
    out
}

/// Writes `report.json` plus linear- and log-grid ROC point files into `dir`,
/// creating it if needed.
pub fn export_report(report: &EvalReport, roc: &RocCurve, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    report.save(dir.join(REPORT_FILE))?;
    for (name, grid) in [(ROC_LINEAR_FILE, linear_fpr_grid()), (ROC_LOG_FILE, log_fpr_grid())] {
        let path = dir.join(name);
        std::fs::write(&path, curve_csv(roc, &grid)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
