//! Loading and validation of the clickbait spoiling corpus.
//!
//! The on-disk format is one JSON object per line with the fields
//! `targetTitle`, `targetParagraphs`, `spoiler`, `tags` and an optional
//! `uuid`. Every other column is ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// The three spoiler types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpoilerTag {
    Phrase,
    Passage,
    Multi,
}

impl SpoilerTag {
    pub const ALL: [SpoilerTag; 3] = [SpoilerTag::Phrase, SpoilerTag::Passage, SpoilerTag::Multi];

    pub fn as_str(self) -> &'static str {
        match self {
            SpoilerTag::Phrase => "phrase",
            SpoilerTag::Passage => "passage",
            SpoilerTag::Multi => "multi",
        }
    }
}

impl fmt::Display for SpoilerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpoilerTag {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "phrase" => Ok(SpoilerTag::Phrase),
            "passage" => Ok(SpoilerTag::Passage),
            "multi" => Ok(SpoilerTag::Multi),
            other => Err(CorpusError::UnknownTag(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("field `{field}` has the wrong type: {detail}")]
    WrongType { field: &'static str, detail: String },
    #[error("unknown spoiler tag `{0}`")]
    UnknownTag(String),
    #[error("expected a single tag, found {0}")]
    MultipleTags(usize),
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("line {line}: validation failed: {violation}")]
    Strict { line: usize, violation: Violation },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One dataset entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: String,
    pub title: String,
    pub paragraphs: Vec<String>,
    pub spoilers: Vec<String>,
    /// `None` for unlabeled, inference-only records.
    pub tag: Option<SpoilerTag>,
}

/// A record that parsed but breaks one of the dataset invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub record_id: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {}: {}", self.record_id, self.message)
    }
}

impl Record {
    pub fn is_labeled(&self) -> bool {
        self.tag.is_some()
    }

    /// Article paragraphs joined by single newlines.
    pub fn full_text(&self) -> String {
        full_text(self)
    }

    /// Checks the dataset invariants that are reported as warnings rather
    /// than parse failures.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut flag = |message: String| {
            out.push(Violation {
                record_id: self.id.clone(),
                message,
            })
        };
        if self.title.trim().is_empty() {
            flag("title is empty".into());
        }
        if self.paragraphs.is_empty() {
            flag("article has no paragraphs".into());
        }
        match self.tag {
            Some(SpoilerTag::Multi) if self.spoilers.len() < 2 => {
                flag(format!("multi requires ≥2 spoilers, found {}", self.spoilers.len()))
            }
            Some(tag @ (SpoilerTag::Phrase | SpoilerTag::Passage)) if self.spoilers.len() != 1 => {
                flag(format!("{tag} requires exactly 1 spoiler, found {}", self.spoilers.len()))
            }
            None if !self.spoilers.is_empty() => flag("spoilers present but no tag".into()),
            _ => {}
        }
        out
    }

    /// Serializes back into the line format accepted by [`parse_record`].
    pub fn to_json_line(&self) -> String {
        let mut obj = Map::new();
        obj.insert("uuid".into(), Value::String(self.id.clone()));
        obj.insert("targetTitle".into(), Value::String(self.title.clone()));
        obj.insert(
            "targetParagraphs".into(),
            Value::Array(self.paragraphs.iter().cloned().map(Value::String).collect()),
        );
        if let Some(tag) = self.tag {
            obj.insert(
                "spoiler".into(),
                Value::Array(self.spoilers.iter().cloned().map(Value::String).collect()),
            );
            obj.insert("tags".into(), Value::Array(vec![Value::String(tag.to_string())]));
        }
        Value::Object(obj).to_string()
    }
}

/// Canonical article string: paragraphs joined with `\n`, no trailing newline.
pub fn full_text(record: &Record) -> String {
    record.paragraphs.join("\n")
}

fn string_list(obj: &Map<String, Value>, field: &'static str) -> Result<Option<Vec<String>>, CorpusError> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(CorpusError::WrongType {
                    field,
                    detail: format!("expected string element, found {other}"),
                }),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some),
        Some(other) => Err(CorpusError::WrongType {
            field,
            detail: format!("expected array, found {other}"),
        }),
    }
}

fn parse_tag(value: &Value) -> Result<SpoilerTag, CorpusError> {
    match value {
        Value::String(s) => s.parse(),
        Value::Array(items) => match items.as_slice() {
            [Value::String(s)] => s.parse(),
            [other] => Err(CorpusError::WrongType {
                field: "tags",
                detail: format!("expected string, found {other}"),
            }),
            many => Err(CorpusError::MultipleTags(many.len())),
        },
        other => Err(CorpusError::WrongType {
            field: "tags",
            detail: format!("expected string or one-element array, found {other}"),
        }),
    }
}

/// Parses one JSON line. `index` becomes the id when the object carries no
/// `uuid`. Invariant violations are not errors here; see [`Record::validate`].
pub fn parse_record(line: &str, index: usize) -> Result<Record, CorpusError> {
    let value: Value = serde_json::from_str(line).map_err(|e| CorpusError::Malformed(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(CorpusError::Malformed("expected a JSON object".into()));
    };

    let title = match obj.get("targetTitle") {
        Some(Value::String(s)) => s.clone(),
        Some(other) => {
            return Err(CorpusError::WrongType {
                field: "targetTitle",
                detail: format!("expected string, found {other}"),
            })
        }
        None => return Err(CorpusError::MissingField("targetTitle")),
    };
    let paragraphs = string_list(&obj, "targetParagraphs")?.ok_or(CorpusError::MissingField("targetParagraphs"))?;
    let spoilers = string_list(&obj, "spoiler")?.unwrap_or_default();
    let tag = match obj.get("tags") {
        None | Some(Value::Null) => None,
        Some(v) => Some(parse_tag(v)?),
    };
    let id = match obj.get("uuid").or_else(|| obj.get("id")) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => index.to_string(),
    };

    Ok(Record {
        id,
        title,
        paragraphs,
        spoilers,
        tag,
    })
}

/// An immutable, loaded split.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub split: String,
    pub records: Vec<Record>,
    pub violations: Vec<Violation>,
}

impl Corpus {
    pub fn new(split: impl Into<String>, records: Vec<Record>) -> Self {
        let violations = records.iter().flat_map(Record::validate).collect();
        Corpus {
            split: split.into(),
            records,
            violations,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.records.iter().all(Record::is_labeled)
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_json_line());
            out.push('\n');
        }
        out
    }
}

/// Parses JSONL text. Blank lines are skipped; ids default to the zero-based
/// line index.
pub fn parse_corpus(text: &str, split: &str, strict: bool) -> Result<Corpus, CorpusError> {
    let mut records = Vec::new();
    let mut violations = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record(line, index).map_err(|e| CorpusError::Line {
            line: index + 1,
            source: Box::new(e),
        })?;
        let found = record.validate();
        if strict {
            if let Some(v) = found.into_iter().next() {
                return Err(CorpusError::Strict {
                    line: index + 1,
                    violation: v,
                });
            }
        } else {
            for v in &found {
                tracing::warn!(line = index + 1, "{v}");
            }
            violations.extend(found);
        }
        records.push(record);
    }
    Ok(Corpus {
        split: split.to_string(),
        records,
        violations,
    })
}

pub fn load_corpus(path: impl AsRef<Path>, split: &str, strict: bool) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text, split, strict)
}

/// Per-tag counts and fractions of a split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitStats {
    pub split: String,
    pub record_count: usize,
    pub unlabeled: usize,
    pub tag_counts: BTreeMap<SpoilerTag, usize>,
    pub tag_fractions: BTreeMap<SpoilerTag, f64>,
    pub violations: usize,
}

pub fn corpus_stats(corpus: &Corpus) -> SplitStats {
    let mut tag_counts: BTreeMap<SpoilerTag, usize> = SpoilerTag::ALL.iter().map(|&t| (t, 0)).collect();
    let mut unlabeled = 0;
    for r in &corpus.records {
        match r.tag {
            Some(t) => *tag_counts.entry(t).or_default() += 1,
            None => unlabeled += 1,
        }
    }
    let labeled: usize = tag_counts.values().sum();
    let tag_fractions = tag_counts
        .iter()
        .map(|(&t, &c)| (t, if labeled == 0 { 0.0 } else { c as f64 / labeled as f64 }))
        .collect();
    SplitStats {
        split: corpus.split.clone(),
        record_count: corpus.records.len(),
        unlabeled,
        tag_counts,
        tag_fractions,
        violations: corpus.violations.len(),
    }
}
