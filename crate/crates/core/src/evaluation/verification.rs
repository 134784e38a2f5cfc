use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cosine_similarity;
use crate::error::{Error, Result};
use crate::model::EmbeddingMatrix;

/// One labeled verification pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub id_a: String,
    pub id_b: String,
    pub same: bool,
}

pub const PAIR_LIST_HEADER: &str = "id_a,id_b,same";

/// Pair list: `id_a,id_b,same` rows with `same` in {0, 1}; the header line is optional.
pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<Pair>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if i == 0 && rec.iter().collect::<Vec<_>>().join(",") == PAIR_LIST_HEADER {
            continue;
        }
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", rec.len())));
        }
        let same = match &rec[2] {
            "1" => true,
            "0" => false,
            other => return Err(err(format!("field `same` must be 0 or 1, got `{other}`"))),
        };
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(err("empty sample id".into()));
        }
        out.push(Pair {
            id_a: rec[0].to_string(),
            id_b: rec[1].to_string(),
            same,
        });
    }
    Ok(out)
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<Pair>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, path)
}

pub fn format_pairs(pairs: &[Pair]) -> String {
    let mut out = String::from(PAIR_LIST_HEADER);
    out.push('\n');
    for p in pairs {
        out.push_str(&format!("{},{},{}\n", p.id_a, p.id_b, u8::from(p.same)));
    }
    out
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[Pair]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_pairs(pairs)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationScores {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

impl VerificationScores {
    pub fn new(positives: Vec<f64>, negatives: Vec<f64>) -> Self {
        VerificationScores { positives, negatives }
    }

    pub fn total(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    fn require_both_sides(&self) -> Result<()> {
        if self.positives.is_empty() || self.negatives.is_empty() {
            return Err(Error::Precondition(format!(
                "need >= 1 positive and >= 1 negative score, have {} and {}",
                self.positives.len(),
                self.negatives.len()
            )));
        }
        if let Some(s) = self.positives.iter().chain(&self.negatives).find(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("score {s}")));
        }
        Ok(())
    }

    /// `same,score` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("same,score\n");
        for s in &self.positives {
            out.push_str(&format!("1,{s}\n"));
        }
        for s in &self.negatives {
            out.push_str(&format!("0,{s}\n"));
        }
        out
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let mut out = VerificationScores::default();
        for (i, line) in text.lines().enumerate() {
            if i == 0 && line.trim() == "same,score" || line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (same, score) = line.split_once(',').ok_or_else(|| err("expected `same,score`".into()))?;
            let score: f64 = score.trim().parse().map_err(|e| err(format!("score: {e}")))?;
            match same.trim() {
                "1" => out.positives.push(score),
                "0" => out.negatives.push(score),
                other => return Err(err(format!("field `same` must be 0 or 1, got `{other}`"))),
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }
}

/// Cosine similarity of each pair, routed by its `same` label.
pub fn score_pairs(embeddings: &EmbeddingMatrix, pairs: &[Pair]) -> Result<VerificationScores> {
    let lookup = |id: &str| {
        embeddings.get(id).ok_or_else(|| Error::UnknownId {
            kind: "embedding",
            id: id.to_string(),
        })
    };
    let mut out = VerificationScores::default();
    for p in pairs {
        let s = cosine_similarity(lookup(&p.id_a)?, lookup(&p.id_b)?)?;
        if p.same {
            out.positives.push(s);
        } else {
            out.negatives.push(s);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Pairs with `score > threshold` are accepted.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points in order of decreasing threshold, from (0, 0) to (1, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

fn descending(a: &f64, b: &f64) -> Ordering {
    b.partial_cmp(a).expect("scores are finite")
}

/// Thresholds are every distinct score (descending) and finally `-inf`; equal
/// scores therefore move the curve in a single step.
pub fn roc_curve(scores: &VerificationScores) -> Result<RocCurve> {
    scores.require_both_sides()?;
    let mut tagged: Vec<(f64, bool)> = scores
        .positives
        .iter()
        .map(|&s| (s, true))
        .chain(scores.negatives.iter().map(|&s| (s, false)))
        .collect();
    tagged.sort_by(|a, b| descending(&a.0, &b.0));
    let p = scores.positives.len() as f64;
    let n = scores.negatives.len() as f64;

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < tagged.len() {
        let threshold = tagged[i].0;
        // everything strictly above `threshold` has been counted
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
        });
        while i < tagged.len() && tagged[i].0 == threshold {
            if tagged[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    Ok(RocCurve { points })
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }

    /// Largest TPR among points with `fpr <= target`; the conservative step
    /// interpolation used for curve export.
    pub fn tpr_at(&self, target: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.fpr <= target)
            .map(|p| p.tpr)
            .fold(0.0, f64::max)
    }
}

/// Mann-Whitney statistic `P(pos > neg) + P(pos = neg) / 2`, from exact counts.
pub fn auroc(scores: &VerificationScores) -> Result<f64> {
    scores.require_both_sides()?;
    let mut neg = scores.negatives.clone();
    neg.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let mut twice_wins: u64 = 0;
    for &s in &scores.positives {
        let below = neg.partition_point(|&v| v < s) as u64;
        let not_above = neg.partition_point(|&v| v <= s) as u64;
        twice_wins += 2 * below + (not_above - below);
    }
    let pairs = 2 * scores.positives.len() as u64 * scores.negatives.len() as u64;
    Ok(twice_wins as f64 / pairs as f64)
}

/// TPR at the smallest ROC threshold whose FPR does not exceed `fpr_target`.
pub fn tpr_at_fpr(scores: &VerificationScores, fpr_target: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&fpr_target) {
        return Err(Error::Precondition(format!("fpr target {fpr_target} outside [0, 1)")));
    }
    let roc = roc_curve(scores)?;
    // points are ordered by decreasing threshold, so the last admissible one is the smallest
    Ok(roc
        .points
        .iter()
        .take_while(|p| p.fpr <= fpr_target)
        .last()
        .map_or(0.0, |p| p.tpr))
}

/// `(TP + TN) / (P + N)` with `score >= theta` meaning "same".
pub fn accuracy_at_threshold(scores: &VerificationScores, theta: f64) -> Result<f64> {
    if scores.total() == 0 {
        return Err(Error::Precondition("no scored pairs".into()));
    }
    let tp = scores.positives.iter().filter(|&&s| s >= theta).count();
    let tn = scores.negatives.iter().filter(|&&s| s < theta).count();
    Ok((tp + tn) as f64 / scores.total() as f64)
}
