use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2x2 table with the human decision as reference ("positive" = same).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Contingency {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    fn has_zero_marginal(&self) -> bool {
        let model_pos = self.tp + self.fp;
        let model_neg = self.tn + self.fn_;
        let human_pos = self.tp + self.fn_;
        let human_neg = self.tn + self.fp;
        [model_pos, model_neg, human_pos, human_neg].contains(&0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub table: Contingency,
    pub accuracy: f64,
    /// `None` when any marginal of the table is zero.
    pub kappa: Option<f64>,
    /// `None` when any marginal of the table is zero.
    pub mcc: Option<f64>,
}

/// Model-vs-human agreement: accuracy, Cohen's kappa and the Matthews correlation.
pub fn agreement_metrics(model: &[bool], human: &[bool]) -> Result<Agreement> {
    if model.len() != human.len() {
        return Err(Error::Shape(format!(
            "{} model decisions for {} human decisions",
            model.len(),
            human.len()
        )));
    }
    if model.is_empty() {
        return Err(Error::Precondition("no decisions".into()));
    }
    let mut t = Contingency::default();
    for (&m, &h) in model.iter().zip(human) {
        match (m, h) {
            (true, true) => t.tp += 1,
            (false, false) => t.tn += 1,
            (true, false) => t.fp += 1,
            (false, true) => t.fn_ += 1,
        }
    }
    let n = t.total() as f64;
    let (tp, tn, fp, fneg) = (t.tp as f64, t.tn as f64, t.fp as f64, t.fn_ as f64);
    let accuracy = (tp + tn) / n;
    let (kappa, mcc) = if t.has_zero_marginal() {
        (None, None)
    } else {
        let expected = ((tp + fp) * (tp + fneg) + (tn + fneg) * (tn + fp)) / (n * n);
        let kappa = (accuracy - expected) / (1.0 - expected);
        let mcc = (tp * tn - fp * fneg) / ((tp + fp) * (tp + fneg) * (tn + fp) * (tn + fneg)).sqrt();
        (Some(kappa), Some(mcc))
    };
    Ok(Agreement {
        table: t,
        accuracy,
        kappa,
        mcc,
    })
}
