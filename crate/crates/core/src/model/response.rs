//! Human judgment records and the comma-separated response log.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RESPONSE_LOG_HEADER: [&str; 10] = [
    "response_id",
    "participant_id",
    "protocol",
    "source_sample_id",
    "option_a_sample_id",
    "option_b_sample_id",
    "answer",
    "correct",
    "latency_seconds",
    "is_repeat_of",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Same/different judgment on a (source, option_a) pair.
    Verification,
    /// Two-alternative forced choice between option_a and option_b.
    ForcedChoice,
}

impl Protocol {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "verification" => Ok(Protocol::Verification),
            "forced_choice" => Ok(Protocol::ForcedChoice),
            other => Err(Error::field("protocol", format!("unknown protocol `{other}`"))),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Protocol::Verification => "verification",
            Protocol::ForcedChoice => "forced_choice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Same,
    Different,
    A,
    B,
}

impl Answer {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "same" => Ok(Answer::Same),
            "different" => Ok(Answer::Different),
            "a" => Ok(Answer::A),
            "b" => Ok(Answer::B),
            other => Err(Error::field("answer", format!("unknown answer `{other}`"))),
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Answer::Same => "same",
            Answer::Different => "different",
            Answer::A => "a",
            Answer::B => "b",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub response_id: String,
    pub participant_id: String,
    pub protocol: Protocol,
    pub source_sample_id: String,
    pub option_a_sample_id: String,
    pub option_b_sample_id: Option<String>,
    pub answer: Answer,
    pub correct: bool,
    pub latency_seconds: f64,
    pub is_repeat_of: Option<String>,
}

impl ResponseRecord {
    pub fn validate(&self) -> Result<()> {
        if self.response_id.is_empty() {
            return Err(Error::field("response_id", "must be nonempty"));
        }
        match self.protocol {
            Protocol::Verification => {
                if self.option_b_sample_id.is_some() {
                    return Err(Error::field(
                        "option_b_sample_id",
                        "must be empty for verification responses",
                    ));
                }
                if !matches!(self.answer, Answer::Same | Answer::Different) {
                    return Err(Error::field(
                        "answer",
                        format!("verification answer must be same|different, got `{}`", self.answer),
                    ));
                }
            }
            Protocol::ForcedChoice => {
                if self.option_b_sample_id.is_none() {
                    return Err(Error::field(
                        "option_b_sample_id",
                        "required for forced_choice responses",
                    ));
                }
                if !matches!(self.answer, Answer::A | Answer::B) {
                    return Err(Error::field(
                        "answer",
                        format!("forced_choice answer must be a|b, got `{}`", self.answer),
                    ));
                }
            }
        }
        if !self.latency_seconds.is_finite() || self.latency_seconds < 0.0 {
            return Err(Error::field(
                "latency_seconds",
                format!("must be a nonnegative number, got {}", self.latency_seconds),
            ));
        }
        Ok(())
    }

    /// Every sample id this judgment refers to.
    pub fn referenced_samples(&self) -> impl Iterator<Item = &str> {
        [
            Some(self.source_sample_id.as_str()),
            Some(self.option_a_sample_id.as_str()),
            self.option_b_sample_id.as_deref(),
        ]
        .into_iter()
        .flatten()
    }
}

fn optional(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(Error::field("correct", format!("expected true|false|1|0, got `{other}`"))),
    }
}

fn parse_row(row: &csv::StringRecord) -> Result<ResponseRecord> {
    if row.len() != RESPONSE_LOG_HEADER.len() {
        return Err(Error::field(
            "row",
            format!("expected {} columns, got {}", RESPONSE_LOG_HEADER.len(), row.len()),
        ));
    }
    let latency_raw = row[8].trim();
    let latency_seconds: f64 = latency_raw.parse().map_err(|_| {
        Error::field("latency_seconds", format!("`{latency_raw}` is not a number"))
    })?;
    let record = ResponseRecord {
        response_id: row[0].trim().to_string(),
        participant_id: row[1].trim().to_string(),
        protocol: Protocol::parse(row[2].trim())?,
        source_sample_id: row[3].trim().to_string(),
        option_a_sample_id: row[4].trim().to_string(),
        option_b_sample_id: optional(&row[5]),
        answer: Answer::parse(row[6].trim())?,
        correct: parse_bool(&row[7])?,
        latency_seconds,
        is_repeat_of: optional(&row[9]),
    };
    record.validate()?;
    Ok(record)
}

/// Parses a response log with the documented header. Repeat links must resolve
/// to an earlier or later response in the same log.
pub fn parse_response_log(text: &str, path: &Path) -> Result<Vec<ResponseRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let at = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let header = reader.headers().map_err(|e| at(1, e.to_string()))?.clone();
    if !text.trim().is_empty() {
        let names: Vec<&str> = header.iter().map(str::trim).collect();
        if names != RESPONSE_LOG_HEADER {
            return Err(at(
                1,
                format!("expected header `{}`", RESPONSE_LOG_HEADER.join(",")),
            ));
        }
    }

    let mut records = Vec::new();
    let mut lines = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            at(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let record = parse_row(&row).map_err(|e| at(line, e.to_string()))?;
        if index.insert(record.response_id.clone(), records.len()).is_some() {
            return Err(at(
                line,
                Error::Duplicate {
                    kind: "response",
                    id: record.response_id,
                }
                .to_string(),
            ));
        }
        records.push(record);
        lines.push(line);
    }

    for (record, &line) in records.iter().zip(&lines) {
        if let Some(original) = &record.is_repeat_of {
            if !index.contains_key(original) || original == &record.response_id {
                return Err(at(
                    line,
                    format!("is_repeat_of `{original}` does not name another response"),
                ));
            }
        }
    }
    Ok(records)
}

pub fn load_response_log(path: impl AsRef<Path>) -> Result<Vec<ResponseRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_response_log(&text, path)
}

pub fn format_response_log(records: &[ResponseRecord]) -> String {
    let mut out = RESPONSE_LOG_HEADER.join(",");
    out.push('\n');
    for r in records {
        let fields = [
            r.response_id.clone(),
            r.participant_id.clone(),
            r.protocol.as_str().to_string(),
            r.source_sample_id.clone(),
            r.option_a_sample_id.clone(),
            r.option_b_sample_id.clone().unwrap_or_default(),
            r.answer.to_string(),
            r.correct.to_string(),
            r.latency_seconds.to_string(),
            r.is_repeat_of.clone().unwrap_or_default(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_response_log(path: impl AsRef<Path>, records: &[ResponseRecord]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_response_log(records)).map_err(|e| Error::io(path, e))
}
