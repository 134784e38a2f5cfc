//! Sample manifest records and their newline-delimited JSON encoding.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of discrete stylization strength levels.
pub const STRENGTH_LEVELS: u8 = 7;

/// A stylization strength `k/7` with `k` in `1..=7`.
///
/// Stored as the integer numerator so that level matching never compares floats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Strength(u8);

impl Strength {
    pub fn new(level: u8) -> Result<Self> {
        if (1..=STRENGTH_LEVELS).contains(&level) {
            Ok(Strength(level))
        } else {
            Err(Error::field(
                "strength",
                format!("level {level} outside 1..={STRENGTH_LEVELS}"),
            ))
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / f64::from(STRENGTH_LEVELS)
    }

    pub fn all() -> impl Iterator<Item = Strength> {
        (1..=STRENGTH_LEVELS).map(Strength)
    }
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0, STRENGTH_LEVELS)
    }
}

impl FromStr for Strength {
    type Err = Error;

    /// Accepts the canonical `"k/7"` form only.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::field("strength", format!("`{s}` is not of the form k/7 with k in 1..=7"));
        let (num, den) = s.trim().split_once('/').ok_or_else(bad)?;
        let num: u8 = num.trim().parse().map_err(|_| bad())?;
        let den: u8 = den.trim().parse().map_err(|_| bad())?;
        if den != STRENGTH_LEVELS {
            return Err(bad());
        }
        Strength::new(num).map_err(|_| bad())
    }
}

impl Serialize for Strength {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strength {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Stylization method identifier. Open set: any string is accepted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Method(pub String);

impl Method {
    pub const IP_ADAPTER: &'static str = "ip_adapter";
    pub const INSTANT_ID: &'static str = "instant_id";
    pub const INFINITE_YOU: &'static str = "infinite_you";

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Method {
    fn from(s: &str) -> Self {
        Method(s.to_string())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Stylized,
}

/// One source photo or stylized render.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub identity_id: String,
    pub image_path: String,
    pub method: Method,
    pub style: String,
    pub strength: Option<Strength>,
    pub role: Role,
}

impl SampleRecord {
    pub fn validate(&self) -> Result<()> {
        if self.sample_id.is_empty() {
            return Err(Error::field("sample_id", "must be nonempty"));
        }
        if self.identity_id.is_empty() {
            return Err(Error::field("identity_id", "must be nonempty"));
        }
        match (self.role, self.strength) {
            (Role::Source, Some(s)) => Err(Error::field(
                "strength",
                format!("source sample carries strength {s}; must be null"),
            )),
            (Role::Stylized, None) => Err(Error::field(
                "strength",
                "stylized sample requires a k/7 strength",
            )),
            (Role::Stylized, Some(_)) if self.method.0.is_empty() => {
                Err(Error::field("method", "stylized sample requires a method"))
            }
            _ => Ok(()),
        }
    }

    /// `(method, style, strength)` key for stylized samples.
    pub fn combo(&self) -> Option<(&Method, &str, Strength)> {
        self.strength.map(|s| (&self.method, self.style.as_str(), s))
    }
}

/// Serialized form of the manifest, with `strength` kept as a raw JSON value so
/// that a non-`k/7` entry is reported against the right field.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    sample_id: String,
    identity_id: String,
    image_path: String,
    method: String,
    style: String,
    strength: serde_json::Value,
    role: Role,
}

fn parse_strength(value: &serde_json::Value) -> Result<Option<Strength>> {
    match value {
        serde_json::Value::Null => Ok(None),
        serde_json::Value::String(s) => s.parse().map(Some),
        other => Err(Error::field(
            "strength",
            format!("`{other}` is not of the form \"k/7\" or null"),
        )),
    }
}

/// Parses manifest text. `path` is used only for error messages.
pub fn parse_sample_manifest(text: &str, path: &Path) -> Result<Vec<SampleRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let at_line = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let raw: RawSample = serde_json::from_str(line).map_err(|e| at_line(e.to_string()))?;
        let record = SampleRecord {
            strength: parse_strength(&raw.strength).map_err(|e| at_line(e.to_string()))?,
            sample_id: raw.sample_id,
            identity_id: raw.identity_id,
            image_path: raw.image_path,
            method: Method(raw.method),
            style: raw.style,
            role: raw.role,
        };
        record.validate().map_err(|e| at_line(e.to_string()))?;
        if !seen.insert(record.sample_id.clone()) {
            return Err(at_line(
                Error::Duplicate {
                    kind: "sample",
                    id: record.sample_id,
                }
                .to_string(),
            ));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_sample_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sample_manifest(&text, path)
}

/// Canonical manifest text: one compact JSON object per line, each line newline-terminated.
pub fn format_manifest(records: &[SampleRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("sample records always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[SampleRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(format_manifest(records).as_bytes())
        .map_err(|e| Error::io(path, e))
}
