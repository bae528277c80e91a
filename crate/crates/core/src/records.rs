//! Observations and the records CSV format (`id,phrase,label`).

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowErrors};
use crate::lexicon::CertaintyLexicon;
use crate::scalar::Scalar;

/// Ground truth for one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Binary outcome.
    Hard(bool),
    /// Outcome known only through a phrase of the label lexicon.
    Phrase(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    /// Index into the prediction lexicon.
    pub phrase: usize,
    pub target: Target,
}

impl PredictionRecord {
    pub fn hard(id: impl Into<String>, phrase: usize, label: bool) -> Self {
        Self {
            id: id.into(),
            phrase,
            target: Target::Hard(label),
        }
    }

    pub fn uncertain(id: impl Into<String>, phrase: usize, label_phrase: usize) -> Self {
        Self {
            id: id.into(),
            phrase,
            target: Target::Phrase(label_phrase),
        }
    }
}

/// A records row before phrase names are resolved against a lexicon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub line: usize,
    pub id: String,
    pub phrase: String,
    pub label: RawLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawLabel {
    Hard(bool),
    Phrase(String),
}

impl RawLabel {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "0" => Some(Self::Hard(false)),
            "1" => Some(Self::Hard(true)),
            _ => s
                .strip_prefix('@')
                .filter(|p| !p.is_empty())
                .map(|p| Self::Phrase(p.to_string())),
        }
    }

    fn render(&self) -> String {
        match self {
            Self::Hard(true) => "1".into(),
            Self::Hard(false) => "0".into(),
            Self::Phrase(p) => format!("@{p}"),
        }
    }
}

/// Reads the records CSV without resolving phrases.
pub fn read_raw_records<R: Read>(reader: R) -> Result<Vec<RawRecord>> {
    let mut csv = csv::ReaderBuilder::new().from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "phrase", "label"] {
        return Err(Error::Load {
            path: "records".into(),
            message: format!(
                "header must be `id,phrase,label`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    let mut errors = RowErrors::default();
    for (i, row) in csv.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(line, e.to_string());
                continue;
            }
        };
        let label = row.get(2).unwrap_or_default();
        match RawLabel::parse(label) {
            Some(label) => out.push(RawRecord {
                line,
                id: row.get(0).unwrap_or_default().to_string(),
                phrase: row.get(1).unwrap_or_default().to_string(),
                label,
            }),
            None => errors.push(line, format!("label must be 0, 1 or @<phrase>, got {label:?}")),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Rows(errors));
    }
    Ok(out)
}

pub fn write_raw_records<W: Write>(writer: W, records: &[RawRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["id", "phrase", "label"])?;
    for r in records {
        csv.write_record([r.id.as_str(), r.phrase.as_str(), r.label.render().as_str()])?;
    }
    csv.flush()?;
    Ok(())
}

fn index_map<T: Scalar>(lexicon: &CertaintyLexicon<T>) -> HashMap<&str, usize> {
    lexicon
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.phrase.as_str(), i))
        .collect()
}

/// Resolves phrase names. Every unknown phrase is reported with its line.
pub fn resolve_records<T: Scalar>(
    raw: &[RawRecord],
    lexicon: &CertaintyLexicon<T>,
    label_lexicon: Option<&CertaintyLexicon<T>>,
) -> Result<Vec<PredictionRecord>> {
    let predictions = index_map(lexicon);
    let labels = label_lexicon.map(index_map);
    let mut out = Vec::with_capacity(raw.len());
    let mut errors = RowErrors::default();
    for r in raw {
        let Some(&phrase) = predictions.get(r.phrase.as_str()) else {
            errors.push(r.line, format!("unknown phrase {:?}", r.phrase));
            continue;
        };
        let target = match &r.label {
            RawLabel::Hard(y) => Target::Hard(*y),
            RawLabel::Phrase(p) => match labels.as_ref() {
                None => {
                    errors.push(r.line, format!("uncertain label @{p} needs a label lexicon"));
                    continue;
                }
                Some(map) => match map.get(p.as_str()) {
                    Some(&j) => Target::Phrase(j),
                    None => {
                        errors.push(r.line, format!("unknown label phrase {p:?}"));
                        continue;
                    }
                },
            },
        };
        out.push(PredictionRecord {
            id: r.id.clone(),
            phrase,
            target,
        });
    }
    if !errors.is_empty() {
        return Err(Error::Rows(errors));
    }
    Ok(out)
}

pub fn read_records<T: Scalar, R: Read>(
    reader: R,
    lexicon: &CertaintyLexicon<T>,
    label_lexicon: Option<&CertaintyLexicon<T>>,
) -> Result<Vec<PredictionRecord>> {
    resolve_records(&read_raw_records(reader)?, lexicon, label_lexicon)
}

/// Writes records with phrase names. Uncertain labels need the label lexicon.
pub fn write_records<T: Scalar, W: Write>(
    writer: W,
    records: &[PredictionRecord],
    lexicon: &CertaintyLexicon<T>,
    label_lexicon: Option<&CertaintyLexicon<T>>,
) -> Result<()> {
    let mut raw = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.phrase >= lexicon.len() {
            return Err(Error::PhraseOutOfRange {
                index: i,
                phrase: r.phrase,
                size: lexicon.len(),
            });
        }
        let label = match r.target {
            Target::Hard(y) => RawLabel::Hard(y),
            Target::Phrase(j) => {
                let labels = label_lexicon.ok_or(Error::MissingLabelLexicon)?;
                if j >= labels.len() {
                    return Err(Error::PhraseOutOfRange {
                        index: i,
                        phrase: j,
                        size: labels.len(),
                    });
                }
                RawLabel::Phrase(labels.phrase(j).to_string())
            }
        };
        raw.push(RawRecord {
            line: i + 2,
            id: r.id.clone(),
            phrase: lexicon.phrase(r.phrase).to_string(),
            label,
        });
    }
    write_raw_records(writer, &raw)
}
