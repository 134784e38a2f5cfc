//! Human-calibrated construction of perceptual-positive supervision.
//!
//! Pipeline: [`filter_responses`] removes low-quality judgments,
//! [`estimate_recognition_curve`] tallies forced-choice accuracy per strength
//! level for each (method, style), [`select_reliable_levels`] keeps the two most
//! recognizable levels above a threshold, and [`build_supervision_set`] gathers
//! the matching stylized samples per identity.

mod curve;
mod filter;
mod supervision;

use std::path::Path;

pub use curve::{estimate_recognition_curve, select_reliable_levels, LevelAccuracy, RecognitionCurve};
pub use filter::{
    filter_responses, ExclusionReason, ExclusionReport, DEFAULT_MAX_LATENCY_S, DEFAULT_MIN_LATENCY_S,
};
pub use supervision::{
    build_supervision_set, summarize_supervision_set, ComboLevels, ComboSelection, IdentityGroup,
    Provenance, SelectedLevel, SupervisionSet, SupervisionSummary, DEFAULT_THRESHOLD,
};

use crate::error::{Error, Result};

pub fn save_curves(path: impl AsRef<Path>, curves: &[RecognitionCurve]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(curves).expect("curves always serialize");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_curves(path: impl AsRef<Path>) -> Result<Vec<RecognitionCurve>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let curves: Vec<RecognitionCurve> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    for c in &curves {
        for l in &c.levels {
            if l.n_correct > l.n_total {
                return Err(Error::field(
                    "n_correct",
                    format!("{} / {}: {} correct of {}", c.method, c.style, l.n_correct, l.n_total),
                ));
            }
        }
    }
    Ok(curves)
}
