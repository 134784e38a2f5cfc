//! Response quality filtering: latency bounds and repeat-consistency checks.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::model::ResponseRecord;

/// Upper latency bound for a single answer, in seconds.
pub const DEFAULT_MAX_LATENCY_S: f64 = 100.0;
/// Floor standing in for the stimulus loading time, in seconds.
pub const DEFAULT_MIN_LATENCY_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    /// The participant answered a repeated question differently; all of their responses go.
    InconsistentParticipant,
    TooFast,
    TooSlow,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub input: usize,
    pub kept: usize,
    /// Each dropped response is counted under exactly one reason.
    pub dropped: BTreeMap<ExclusionReason, usize>,
    pub excluded_participants: Vec<String>,
}

impl ExclusionReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }
}

/// Drops responses outside `[min_latency_s, max_latency_s]` and every response
/// of a participant whose repeat answer differs from the original.
///
/// Consistency is judged first, so a participant-level exclusion takes
/// precedence over the latency reasons in the report. Repeat links whose
/// original is not in `responses` are ignored.
pub fn filter_responses(
    responses: &[ResponseRecord],
    max_latency_s: f64,
    min_latency_s: f64,
) -> (Vec<ResponseRecord>, ExclusionReport) {
    let by_id: HashMap<&str, &ResponseRecord> = responses
        .iter()
        .map(|r| (r.response_id.as_str(), r))
        .collect();

    let mut inconsistent: HashSet<&str> = HashSet::new();
    for r in responses {
        let Some(original) = r.is_repeat_of.as_deref().and_then(|id| by_id.get(id)) else {
            continue;
        };
        if original.answer != r.answer {
            inconsistent.insert(&r.participant_id);
            inconsistent.insert(&original.participant_id);
        }
    }

    let mut report = ExclusionReport {
        input: responses.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(responses.len());
    for r in responses {
        let reason = if inconsistent.contains(r.participant_id.as_str()) {
            Some(ExclusionReason::InconsistentParticipant)
        } else if r.latency_seconds < min_latency_s {
            Some(ExclusionReason::TooFast)
        } else if r.latency_seconds > max_latency_s {
            Some(ExclusionReason::TooSlow)
        } else {
            None
        };
        match reason {
            Some(reason) => *report.dropped.entry(reason).or_default() += 1,
            None => kept.push(r.clone()),
        }
    }
    report.kept = kept.len();
    let mut excluded: Vec<String> = inconsistent.into_iter().map(str::to_string).collect();
    excluded.sort();
    report.excluded_participants = excluded;
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Answer, Protocol};
    use proptest::prelude::*;

    fn resp(id: &str, who: &str, answer: Answer, latency: f64, repeat: Option<&str>) -> ResponseRecord {
        ResponseRecord {
            response_id: id.into(),
            participant_id: who.into(),
            protocol: Protocol::Verification,
            source_sample_id: "s".into(),
            option_a_sample_id: "a".into(),
            option_b_sample_id: None,
            answer,
            correct: answer == Answer::Same,
            latency_seconds: latency,
            is_repeat_of: repeat.map(str::to_string),
        }
    }

    #[test]
    fn slow_response_dropped() {
        let rs = vec![resp("r1", "p", Answer::Same, 120.0, None), resp("r2", "p", Answer::Same, 5.0, None)];
        let (kept, report) = filter_responses(&rs, 100.0, 1.0);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].response_id, "r2");
        assert_eq!(report.dropped.get(&ExclusionReason::TooSlow), Some(&1));
    }

    #[test]
    fn fast_response_dropped() {
        let rs = vec![resp("r1", "p", Answer::Same, 0.2, None)];
        let (kept, report) = filter_responses(&rs, 100.0, 1.0);
        assert!(kept.is_empty());
        assert_eq!(report.dropped.get(&ExclusionReason::TooFast), Some(&1));
    }

    #[test]
    fn inconsistent_participant_fully_dropped() {
        let rs = vec![
            resp("r0", "p", Answer::Different, 3.0, None),
            resp("r1", "p", Answer::Same, 3.0, None),
            resp("r2", "p", Answer::Different, 3.0, Some("r1")),
            resp("q1", "q", Answer::Same, 3.0, None),
            resp("q2", "q", Answer::Same, 3.0, Some("q1")),
        ];
        let (kept, report) = filter_responses(&rs, 100.0, 1.0);
        let ids: Vec<_> = kept.iter().map(|r| r.response_id.as_str()).collect();
        assert_eq!(ids, ["q1", "q2"]);
        assert_eq!(report.dropped.get(&ExclusionReason::InconsistentParticipant), Some(&3));
        assert_eq!(report.excluded_participants, vec!["p".to_string()]);
    }

    #[test]
    fn nothing_fires() {
        let rs = vec![
            resp("r1", "p", Answer::Same, 3.0, None),
            resp("r2", "p", Answer::Same, 99.0, Some("r1")),
        ];
        let (kept, report) = filter_responses(&rs, 100.0, 1.0);
        assert_eq!(kept, rs);
        assert_eq!(report.dropped_total(), 0);
    }

    fn arb_responses() -> impl Strategy<Value = Vec<ResponseRecord>> {
        prop::collection::vec((0usize..4, any::<bool>(), 0.0f64..150.0, prop::option::of(0usize..20)), 0..20)
            .prop_map(|rows| {
                let n = rows.len();
                rows.into_iter()
                    .enumerate()
                    .map(|(i, (who, same, lat, rep))| {
                        let answer = if same { Answer::Same } else { Answer::Different };
                        let rep = rep.filter(|&j| j < n && j != i).map(|j| format!("r{j}"));
                        resp(&format!("r{i}"), &format!("p{who}"), answer, lat, rep.as_deref())
                    })
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn idempotent_and_partitioned(rs in arb_responses()) {
            let (kept, report) = filter_responses(&rs, 100.0, 1.0);
            prop_assert_eq!(report.dropped_total(), rs.len() - kept.len());
            let (again, report2) = filter_responses(&kept, 100.0, 1.0);
            prop_assert_eq!(&again, &kept);
            prop_assert_eq!(report2.dropped_total(), 0);
        }
    }
}
