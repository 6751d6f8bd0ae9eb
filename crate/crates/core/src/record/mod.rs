//! Dolma-style corpus records and the text clean-up applied to them.
//!
//! A shard is a UTF-8 JSON Lines file with one record per line. Each record
//! carries exactly the top-level fields `id`, `text`, `metadata`,
//! `quality_signals` and `external_scores`; anything else is rejected unless
//! the reader runs in [`ParseMode::Lenient`], which folds unknown fields into
//! `metadata`.

mod arabic;
mod boilerplate;
mod clean;

pub use arabic::{
    is_arabic_diacritic, is_arabic_letter, is_farsi_specific, normalize_arabic,
    NormalizationOptions,
};
pub use boilerplate::{detect_source_boilerplate, strip_boilerplate, DEFAULT_MIN_REPEAT};
pub use clean::{clean_text, to_nfc};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: schema violation: {message}")]
    Schema { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InShard {
        path: PathBuf,
        #[source]
        source: Box<RecordError>,
    },
}

/// How strictly unknown or mistyped fields are treated when parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    #[default]
    Strict,
    /// Unknown top-level fields and non-string metadata values are kept as
    /// metadata strings (non-strings as their compact JSON text).
    Lenient,
}

/// One corpus document.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Record {
    pub id: String,
    pub text: String,
    pub metadata: BTreeMap<String, String>,
    pub quality_signals: BTreeMap<String, f64>,
    pub external_scores: BTreeMap<String, f64>,
}

const KNOWN_FIELDS: [&str; 5] = ["id", "text", "metadata", "quality_signals", "external_scores"];

impl Record {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            ..Self::default()
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn url(&self) -> Option<&str> {
        self.metadata.get("url").map(String::as_str)
    }

    /// Serializes the record as a single JSON line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record fields are always serializable")
    }
}

/// Parses one serialized record. `line` is the 1-based line number used in errors.
pub fn parse_record(input: &str, line: usize, mode: ParseMode) -> Result<Record, RecordError> {
    let value: Value = serde_json::from_str(input).map_err(|e| RecordError::Parse {
        line,
        message: e.to_string(),
    })?;
    let Value::Object(mut obj) = value else {
        return Err(RecordError::Parse {
            line,
            message: "expected a JSON object".into(),
        });
    };
    let schema = |message: String| RecordError::Schema { line, message };

    let id = match obj.remove("id") {
        Some(Value::String(s)) => s,
        Some(Value::Number(n)) if mode == ParseMode::Lenient => n.to_string(),
        Some(other) => return Err(schema(format!("`id` must be a string, got {other}"))),
        None => return Err(schema("missing required field `id`".into())),
    };
    if id.is_empty() {
        return Err(schema("`id` must be non-empty".into()));
    }
    let text = match obj.remove("text") {
        Some(Value::String(s)) => s,
        Some(other) => return Err(schema(format!("`text` must be a string, got {other}"))),
        None => return Err(schema("missing required field `text`".into())),
    };

    let mut metadata = BTreeMap::new();
    match obj.remove("metadata") {
        None | Some(Value::Null) => {}
        Some(Value::Object(m)) => {
            for (k, v) in m {
                let v = match v {
                    Value::String(s) => s,
                    other if mode == ParseMode::Lenient => other.to_string(),
                    other => {
                        return Err(schema(format!(
                            "metadata `{k}` must be a string, got {other}"
                        )))
                    }
                };
                metadata.insert(k, v);
            }
        }
        Some(other) => return Err(schema(format!("`metadata` must be an object, got {other}"))),
    }

    let quality_signals = score_map(obj.remove("quality_signals"), "quality_signals", line)?;
    let external_scores = score_map(obj.remove("external_scores"), "external_scores", line)?;

    if !obj.is_empty() {
        if mode == ParseMode::Strict {
            let names: Vec<_> = obj.keys().map(String::as_str).collect();
            return Err(schema(format!(
                "unknown top-level field(s) {names:?}; expected only {KNOWN_FIELDS:?}"
            )));
        }
        for (k, v) in obj {
            let v = match v {
                Value::String(s) => s,
                other => other.to_string(),
            };
            metadata.entry(k).or_insert(v);
        }
    }

    Ok(Record {
        id,
        text,
        metadata,
        quality_signals,
        external_scores,
    })
}

fn score_map(
    value: Option<Value>,
    field: &str,
    line: usize,
) -> Result<BTreeMap<String, f64>, RecordError> {
    let mut out = BTreeMap::new();
    let obj: Map<String, Value> = match value {
        None | Some(Value::Null) => return Ok(out),
        Some(Value::Object(m)) => m,
        Some(other) => {
            return Err(RecordError::Schema {
                line,
                message: format!("`{field}` must be an object, got {other}"),
            })
        }
    };
    for (k, v) in obj {
        let score = v.as_f64().ok_or_else(|| RecordError::Schema {
            line,
            message: format!("{field} `{k}` must be a number, got {v}"),
        })?;
        out.insert(k, score);
    }
    Ok(out)
}

/// Streaming reader over a JSON Lines source. Blank lines are skipped.
pub struct RecordReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    mode: ParseMode,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(reader: R, mode: ParseMode) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            mode,
        }
    }

    /// Line number of the most recently returned record.
    pub fn line(&self) -> usize {
        self.line_no
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<Record, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    return Some(Err(RecordError::Parse {
                        line: self.line_no,
                        message: e.to_string(),
                    }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_record(&line, self.line_no, self.mode));
        }
    }
}

/// Opens a shard for streaming. Errors carry the shard path.
pub fn open_shard(
    path: &Path,
    mode: ParseMode,
) -> Result<impl Iterator<Item = Result<Record, RecordError>>, RecordError> {
    let file = File::open(path).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let owned = path.to_path_buf();
    Ok(RecordReader::new(BufReader::new(file), mode).map(move |r| {
        r.map_err(|e| RecordError::InShard {
            path: owned.clone(),
            source: Box::new(e),
        })
    }))
}

/// Reads a whole shard into memory.
pub fn read_shard(path: &Path, mode: ParseMode) -> Result<Vec<Record>, RecordError> {
    let file = File::open(path).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RecordReader::new(BufReader::new(file), mode)
        .map(|r| {
            r.map_err(|e| RecordError::InShard {
                path: path.to_path_buf(),
                source: Box::new(e),
            })
        })
        .collect()
}

/// Writes records as JSON Lines, one per line, each terminated by `\n`.
pub fn write_shard<'a, I>(path: &Path, records: I) -> Result<(), RecordError>
where
    I: IntoIterator<Item = &'a Record>,
{
    let io_err = |source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for record in records {
        out.write_all(record.to_json_line().as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
