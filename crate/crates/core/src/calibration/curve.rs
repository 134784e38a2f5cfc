//! Empirical recognition-vs-strength curves from forced-choice judgments.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Method, Protocol, ResponseRecord, SampleRecord, Strength};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelAccuracy {
    pub strength: Strength,
    pub n_correct: usize,
    pub n_total: usize,
    pub accuracy: f64,
}

/// Recognition accuracy per strength level for one (method, style).
/// Levels are sorted by strength; levels without responses are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionCurve {
    pub method: Method,
    pub style: String,
    pub levels: Vec<LevelAccuracy>,
}

impl RecognitionCurve {
    pub fn accuracy_at(&self, strength: Strength) -> Option<f64> {
        self.levels
            .iter()
            .find(|l| l.strength == strength)
            .map(|l| l.accuracy)
    }
}

/// Builds one curve per (method, style) from forced-choice responses.
/// Verification responses are ignored. Curves come out sorted by (method, style).
pub fn estimate_recognition_curve(
    responses: &[ResponseRecord],
    samples: &[SampleRecord],
) -> Result<Vec<RecognitionCurve>> {
    let by_id: HashMap<&str, &SampleRecord> =
        samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let lookup = |id: &str| -> Result<(&Method, &str, Strength)> {
        let s = by_id.get(id).ok_or_else(|| Error::UnknownId {
            kind: "sample",
            id: id.to_string(),
        })?;
        s.combo().ok_or_else(|| {
            Error::Precondition(format!("forced-choice option `{id}` is not a stylized sample"))
        })
    };

    let mut counts: BTreeMap<(Method, String), BTreeMap<Strength, (usize, usize)>> = BTreeMap::new();
    for r in responses.iter().filter(|r| r.protocol == Protocol::ForcedChoice) {
        let option_b = r.option_b_sample_id.as_deref().ok_or_else(|| Error::Precondition(format!(
            "forced-choice response `{}` has no option b",
            r.response_id
        )))?;
        let a = lookup(&r.option_a_sample_id)?;
        let b = lookup(option_b)?;
        if a != b {
            return Err(Error::Precondition(format!(
                "response `{}`: options disagree on (method, style, strength): ({}, {}, {}) vs ({}, {}, {})",
                r.response_id, a.0, a.1, a.2, b.0, b.1, b.2
            )));
        }
        let (method, style, strength) = a;
        let entry = counts
            .entry((method.clone(), style.to_string()))
            .or_default()
            .entry(strength)
            .or_default();
        entry.0 += usize::from(r.correct);
        entry.1 += 1;
    }

    Ok(counts
        .into_iter()
        .map(|((method, style), levels)| RecognitionCurve {
            method,
            style,
            levels: levels
                .into_iter()
                .map(|(strength, (n_correct, n_total))| LevelAccuracy {
                    strength,
                    n_correct,
                    n_total,
                    accuracy: n_correct as f64 / n_total as f64,
                })
                .collect(),
        })
        .collect())
}

/// Picks up to two levels with accuracy >= `threshold`, highest accuracy first.
/// Equal accuracies prefer the lower strength.
pub fn select_reliable_levels(curve: &RecognitionCurve, threshold: f64) -> Vec<Strength> {
    let mut qualifying: Vec<&LevelAccuracy> = curve
        .levels
        .iter()
        .filter(|l| l.n_total > 0 && l.accuracy >= threshold)
        .collect();
    qualifying.sort_by(|x, y| {
        y.accuracy
            .total_cmp(&x.accuracy)
            .then(x.strength.cmp(&y.strength))
    });
    qualifying.into_iter().take(2).map(|l| l.strength).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Answer, Role};
    use proptest::prelude::*;

    fn st(k: u8) -> Strength {
        Strength::new(k).unwrap()
    }

    fn curve(accs: &[(u8, usize, usize)]) -> RecognitionCurve {
        RecognitionCurve {
            method: "m".into(),
            style: "t".into(),
            levels: accs
                .iter()
                .map(|&(k, c, n)| LevelAccuracy {
                    strength: st(k),
                    n_correct: c,
                    n_total: n,
                    accuracy: c as f64 / n as f64,
                })
                .collect(),
        }
    }

    fn stylized(id: &str, method: &str, style: &str, k: u8) -> SampleRecord {
        SampleRecord {
            sample_id: id.into(),
            identity_id: "p".into(),
            image_path: String::new(),
            method: method.into(),
            style: style.into(),
            strength: Some(st(k)),
            role: Role::Stylized,
        }
    }

    fn choice(id: &str, a: &str, b: &str, correct: bool) -> ResponseRecord {
        ResponseRecord {
            response_id: id.into(),
            participant_id: "u".into(),
            protocol: Protocol::ForcedChoice,
            source_sample_id: "src".into(),
            option_a_sample_id: a.into(),
            option_b_sample_id: Some(b.into()),
            answer: if correct { Answer::A } else { Answer::B },
            correct,
            latency_seconds: 2.0,
            is_repeat_of: None,
        }
    }

    #[test]
    fn nine_of_ten_is_point_nine() {
        let samples = vec![stylized("a", "m", "t", 3), stylized("b", "m", "t", 3)];
        let responses: Vec<_> = (0..10).map(|i| choice(&format!("r{i}"), "a", "b", i != 0)).collect();
        let curves = estimate_recognition_curve(&responses, &samples).unwrap();
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].levels.len(), 1);
        let l = curves[0].levels[0];
        assert_eq!((l.strength, l.n_correct, l.n_total), (st(3), 9, 10));
        assert_eq!(l.accuracy, 0.9);
        assert_eq!(curves[0].accuracy_at(st(4)), None);
    }

    #[test]
    fn all_correct_is_flat_one() {
        let mut samples = Vec::new();
        let mut responses = Vec::new();
        for k in 1..=7 {
            samples.push(stylized(&format!("a{k}"), "m", "t", k));
            samples.push(stylized(&format!("b{k}"), "m", "t", k));
            responses.push(choice(&format!("r{k}"), &format!("a{k}"), &format!("b{k}"), true));
        }
        let curves = estimate_recognition_curve(&responses, &samples).unwrap();
        assert_eq!(curves[0].levels.len(), 7);
        assert!(curves[0].levels.iter().all(|l| l.accuracy == 1.0));
    }

    #[test]
    fn disagreeing_options_rejected() {
        let samples = vec![stylized("a", "m", "t", 3), stylized("b", "m", "t", 4)];
        let err = estimate_recognition_curve(&[choice("r", "a", "b", true)], &samples).unwrap_err();
        assert!(err.to_string().contains("disagree"));
    }

    #[test]
    fn select_top_two_by_accuracy() {
        let c = curve(&[(1, 95, 100), (2, 92, 100), (3, 85, 100), (4, 70, 100)]);
        assert_eq!(select_reliable_levels(&c, 0.9), vec![st(1), st(2)]);
        // ranking follows accuracy, not strength
        let c = curve(&[(1, 91, 100), (2, 97, 100), (3, 50, 100)]);
        assert_eq!(select_reliable_levels(&c, 0.9), vec![st(2), st(1)]);
    }

    #[test]
    fn select_single_and_empty() {
        let c = curve(&[(1, 93, 100), (2, 80, 100), (3, 60, 100)]);
        assert_eq!(select_reliable_levels(&c, 0.9), vec![st(1)]);
        let c = curve(&[(1, 89, 100), (2, 10, 100)]);
        assert!(select_reliable_levels(&c, 0.9).is_empty());
    }

    #[test]
    fn ties_prefer_lower_strength() {
        let c = curve(&[(5, 10, 10), (2, 10, 10), (3, 10, 10)]);
        assert_eq!(select_reliable_levels(&c, 0.9), vec![st(2), st(3)]);
    }

    proptest! {
        #[test]
        fn curve_is_permutation_invariant(
            outcomes in prop::collection::vec((1u8..=7, any::<bool>()), 1..60),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut samples = Vec::new();
            for k in 1..=7 {
                samples.push(stylized(&format!("a{k}"), "m", "t", k));
                samples.push(stylized(&format!("b{k}"), "m", "t", k));
            }
            let mut responses: Vec<_> = outcomes
                .iter()
                .enumerate()
                .map(|(i, &(k, ok))| choice(&format!("r{i}"), &format!("a{k}"), &format!("b{k}"), ok))
                .collect();
            let before = estimate_recognition_curve(&responses, &samples).unwrap();
            responses.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let after = estimate_recognition_curve(&responses, &samples).unwrap();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn selection_is_ordered_and_above_threshold(
            levels in prop::collection::btree_map(1u8..=7, (0usize..=20, 1usize..=20), 1..=7),
            threshold in 0.05f64..=1.0,
        ) {
            let spec: Vec<_> = levels.into_iter().map(|(k, (c, n))| (k, c.min(n), n)).collect();
            let c = curve(&spec);
            let chosen = select_reliable_levels(&c, threshold);
            prop_assert!(chosen.len() <= 2);
            let accs: Vec<f64> = chosen.iter().map(|&s| c.accuracy_at(s).unwrap()).collect();
            for &a in &accs {
                prop_assert!(a >= threshold);
            }
            if accs.len() == 2 {
                prop_assert!(accs[0] >= accs[1]);
            }
            // nothing left out beats the weakest pick
            if let Some(&weakest) = accs.last() {
                let better_unpicked = c.levels.iter()
                    .filter(|l| !chosen.contains(&l.strength) && l.accuracy >= threshold)
                    .any(|l| l.accuracy > weakest);
                prop_assert!(!better_unpicked);
            }
            let qualifying = c.levels.iter().filter(|l| l.accuracy >= threshold).count();
            prop_assert_eq!(chosen.len(), qualifying.min(2));
        }
    }
}
