//! Relation metadata, unit tables and numeric value normalization.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_UNITS: &str = include_str!("../../data/units.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Size,
    Time,
    None,
}

/// One line of the relation metadata file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationMeta {
    pub name: String,
    #[serde(rename = "numerical")]
    pub is_numerical: bool,
    #[serde(default = "kind_none")]
    pub kind: RelationKind,
    #[serde(default)]
    pub unit: String,
}

fn kind_none() -> RelationKind {
    RelationKind::None
}

impl RelationMeta {
    pub fn non_numerical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            is_numerical: false,
            kind: RelationKind::None,
            unit: String::new(),
        }
    }

    pub fn size(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            is_numerical: true,
            kind: RelationKind::Size,
            unit: unit.into(),
        }
    }

    pub fn time(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            is_numerical: true,
            kind: RelationKind::Time,
            unit: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::data("relation with empty name"));
        }
        if self.is_numerical == (self.kind == RelationKind::None) {
            return Err(Error::data(format!(
                "relation `{}`: kind must be none iff the relation is non-numerical",
                self.name
            )));
        }
        Ok(())
    }

    /// Words of the relation name, split on `.` and `_`.
    pub fn name_words(&self) -> Vec<String> {
        relation_words(&self.name)
    }

    /// Human-readable surface form used in generated questions.
    pub fn display_name(&self) -> String {
        let words = self.name_words();
        // dotted names keep only their final segment, e.g. tv.program.num_of_episodes
        let last = self.name.rsplit('.').next().unwrap_or(&self.name);
        if self.name.contains('.') {
            relation_words(last).join(" ")
        } else {
            words.join(" ")
        }
    }
}

pub fn relation_words(name: &str) -> Vec<String> {
    name.split(['.', '_'])
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Unit name -> (base unit, multiplier into the base unit).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitTable(pub BTreeMap<String, (String, f64)>);

impl Default for UnitTable {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_UNITS).expect("bundled unit table is valid JSON")
    }
}

impl UnitTable {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn lookup(&self, unit: &str) -> Option<(&str, f64)> {
        self.0.get(&canonical_unit(unit)).map(|(b, m)| (b.as_str(), *m))
    }

    /// Multiplier converting `from` into `to`; both must share a base unit.
    pub fn factor(&self, from: &str, to: &str) -> Option<f64> {
        let (from, to) = (canonical_unit(from), canonical_unit(to));
        if from == to {
            return Some(1.0);
        }
        let (fb, fm) = self.lookup(&from)?;
        let (tb, tm) = self.lookup(&to)?;
        (fb == tb).then(|| fm / tm)
    }
}

fn canonical_unit(unit: &str) -> String {
    unit.trim().replace('²', "2").replace('³', "3")
}

/// A number as raw text, canonical character tokens and an order key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericValue {
    pub raw_text: String,
    /// Canonical textual form; its characters are the value's tokens.
    pub canonical: String,
    /// Days since 1970-01-01 for dates, unit-normalized magnitude for sizes.
    pub sort_key: f64,
}

impl NumericValue {
    pub fn canonical_tokens(&self) -> impl Iterator<Item = char> + '_ {
        self.canonical.chars()
    }

    /// A plain decimal with no unit, as used for bare numeric inputs.
    pub fn plain(raw: &str) -> Result<Self> {
        normalize_value(raw, &RelationMeta::size("value", ""), &UnitTable(BTreeMap::new()))
    }
}

/// Parses `raw` under the relation's kind and unit.
pub fn normalize_value(raw: &str, meta: &RelationMeta, units: &UnitTable) -> Result<NumericValue> {
    let err = |msg: &str| Error::Normalize {
        raw: raw.to_string(),
        msg: msg.to_string(),
    };
    match meta.kind {
        RelationKind::None => Err(err("relation is not numerical")),
        RelationKind::Time => {
            let date = parse_date(raw.trim()).ok_or_else(|| err("unrecognized date layout"))?;
            let canonical = format!("{:04}.{:02}.{:02}", date.year(), date.month(), date.day());
            Ok(NumericValue {
                raw_text: raw.to_string(),
                canonical,
                sort_key: days_since_epoch(date) as f64,
            })
        }
        RelationKind::Size => {
            let (magnitude, unit) = split_number(raw).ok_or_else(|| err("not a number"))?;
            let factor = if unit.is_empty() {
                1.0
            } else if meta.unit.is_empty() {
                return Err(err("relation has no unit but the value carries one"));
            } else {
                units
                    .factor(&unit, &meta.unit)
                    .ok_or_else(|| err(&format!("unit `{unit}` is not convertible to `{}`", meta.unit)))?
            };
            let v = magnitude * factor;
            if !v.is_finite() {
                return Err(err("value is not finite"));
            }
            // Display for f64 is the shortest string that parses back to the same value
            let v = if v == 0.0 { 0.0 } else { v };
            Ok(NumericValue {
                raw_text: raw.to_string(),
                canonical: format!("{v}"),
                sort_key: v,
            })
        }
    }
}

/// Leading decimal (thousands separators allowed) and the trimmed remainder.
fn split_number(raw: &str) -> Option<(f64, String)> {
    let s = raw.trim();
    let mut end = 0;
    for (i, c) in s.char_indices() {
        let ok = c.is_ascii_digit() || c == ',' || c == '.' || (i == 0 && (c == '-' || c == '+'));
        if !ok {
            break;
        }
        end = i + c.len_utf8();
    }
    let num: String = s[..end].chars().filter(|&c| c != ',').collect();
    if !num.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    let v: f64 = num.parse().ok()?;
    Some((v, s[end..].trim().to_string()))
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let bytes = s.as_bytes();
    let digits = |r: std::ops::Range<usize>| bytes[r].iter().all(u8::is_ascii_digit);
    match bytes.len() {
        4 if digits(0..4) => NaiveDate::from_ymd_opt(s.parse().ok()?, 1, 1),
        10 if digits(0..4) && digits(5..7) && digits(8..10) => {
            let sep = bytes[4];
            if !(sep == b'.' || sep == b'-') || bytes[7] != sep {
                return None;
            }
            NaiveDate::from_ymd_opt(s[0..4].parse().ok()?, s[5..7].parse().ok()?, s[8..10].parse().ok()?)
        }
        _ => None,
    }
}

fn days_since_epoch(d: NaiveDate) -> i64 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
    d.signed_duration_since(epoch).num_days()
}
