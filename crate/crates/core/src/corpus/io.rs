use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    majority_vote, Comment, CorpusError, CrowdLabel, CrowdVotes, ExpertAnnotation, Result,
    DEFAULT_LANGUAGE,
};
use crate::criterion::CriterionMap;

/// On-disk encoding of a corpus file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// `.csv` maps to CSV, anything else to JSON Lines.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

/// An expert row that was filtered out, with the reason.
#[derive(Debug)]
pub struct Rejection {
    pub line: usize,
    pub comment_id: String,
    pub error: CorpusError,
}

/// Complete annotations plus the rows rejected for missing or out-of-range
/// values.
#[derive(Debug, Default)]
pub struct ExpertLoad {
    pub annotations: Vec<ExpertAnnotation>,
    pub rejected: Vec<Rejection>,
}

impl ExpertLoad {
    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }

    /// Turns the first rejection into an error.
    pub fn into_strict(self) -> Result<Vec<ExpertAnnotation>> {
        match self.rejected.into_iter().next() {
            Some(r) => Err(r.error),
            None => Ok(self.annotations),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn parse_err(line: usize, reason: impl ToString) -> CorpusError {
    CorpusError::Parse {
        line,
        reason: reason.to_string(),
    }
}

fn io_err(e: impl ToString) -> CorpusError {
    CorpusError::Write(e.to_string())
}

/// Non-blank lines with 1-based line numbers.
fn jsonl_records<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
            Err(e) => Some(Err(parse_err(i + 1, e))),
        })
}

/// Header-indexed CSV records with the line number of each record.
struct CsvTable<R: Read> {
    headers: Vec<String>,
    reader: csv::Reader<R>,
}

impl<R: Read> CsvTable<R> {
    fn new(reader: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = reader
            .headers()
            .map_err(|e| parse_err(1, e))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        Ok(CsvTable { headers, reader })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.column(name)
            .ok_or_else(|| parse_err(1, format!("missing column `{name}`")))
    }

    fn records(&mut self) -> impl Iterator<Item = Result<(usize, csv::StringRecord)>> + '_ {
        self.reader.records().map(|r| {
            let record = r.map_err(|e| {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                parse_err(line, e)
            })?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            Ok((line, record))
        })
    }
}

// ---- comments -------------------------------------------------------------

#[derive(Deserialize)]
struct CommentRecord {
    id: String,
    text: String,
    #[serde(default)]
    language: Option<String>,
    #[serde(default)]
    source: Option<String>,
}

#[derive(Serialize)]
struct CommentOut<'a> {
    id: &'a str,
    text: &'a str,
    language: &'a str,
    source: &'a str,
}

fn checked_comment(
    line: usize,
    id: String,
    text: String,
    language: Option<String>,
    source: Option<String>,
    seen: &mut HashSet<String>,
) -> Result<Comment> {
    if id.is_empty() {
        return Err(CorpusError::EmptyId { line });
    }
    if text.is_empty() {
        return Err(CorpusError::EmptyText { line, id });
    }
    if !seen.insert(id.clone()) {
        return Err(CorpusError::DuplicateId { line, id });
    }
    Ok(Comment {
        id,
        text,
        language: language
            .filter(|l| !l.is_empty())
            .unwrap_or_else(|| DEFAULT_LANGUAGE.to_string()),
        source: source.unwrap_or_default(),
    })
}

pub fn read_comments<R: Read>(reader: R, format: Format) -> Result<Vec<Comment>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    match format {
        Format::Jsonl => {
            for rec in jsonl_records(BufReader::new(reader)) {
                let (line, text) = rec?;
                let r: CommentRecord =
                    serde_json::from_str(&text).map_err(|e| parse_err(line, e))?;
                out.push(checked_comment(line, r.id, r.text, r.language, r.source, &mut seen)?);
            }
        }
        Format::Csv => {
            let mut table = CsvTable::new(reader)?;
            let id_col = table.require("id")?;
            let text_col = table.require("text")?;
            let lang_col = table.column("language");
            let source_col = table.column("source");
            for rec in table.records() {
                let (line, r) = rec?;
                let get = |i: usize| r.get(i).unwrap_or("").to_string();
                out.push(checked_comment(
                    line,
                    get(id_col),
                    get(text_col),
                    lang_col.map(get),
                    source_col.map(get),
                    &mut seen,
                )?);
            }
        }
    }
    Ok(out)
}

pub fn write_comments<W: Write>(writer: W, comments: &[Comment], format: Format) -> Result<()> {
    match format {
        Format::Jsonl => {
            let mut w = writer;
            for c in comments {
                let out = CommentOut {
                    id: &c.id,
                    text: &c.text,
                    language: &c.language,
                    source: &c.source,
                };
                serde_json::to_writer(&mut w, &out).map_err(io_err)?;
                w.write_all(b"\n").map_err(io_err)?;
            }
            w.flush().map_err(io_err)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            w.write_record(["id", "text", "language", "source"]).map_err(io_err)?;
            for c in comments {
                w.write_record([&c.id, &c.text, &c.language, &c.source])
                    .map_err(io_err)?;
            }
            w.flush().map_err(io_err)
        }
    }
}

/// Loads comments in file order.
pub fn load_comments(path: &Path, format: Format) -> Result<Vec<Comment>> {
    read_comments(open(path)?, format)
}

pub fn save_comments(path: &Path, comments: &[Comment], format: Format) -> Result<()> {
    let w = create(path)?;
    write_comments(w, comments, format)
}

// ---- expert annotations ---------------------------------------------------

fn json_score(line: usize, name: &str, v: &Value) -> Result<Option<i64>> {
    match v {
        Value::Null => Ok(None),
        Value::Number(n) => n
            .as_i64()
            .map(Some)
            .ok_or_else(|| parse_err(line, format!("`{name}` is not an integer: {n}"))),
        other => Err(parse_err(line, format!("`{name}` is not an integer: {other}"))),
    }
}

/// Sorts a per-row outcome into accepted, rejected or fatal.
fn classify(
    line: usize,
    comment_id: &str,
    row: Result<ExpertAnnotation>,
    seen: &mut HashSet<String>,
    out: &mut ExpertLoad,
) -> Result<()> {
    if comment_id.is_empty() {
        return Err(CorpusError::EmptyId { line });
    }
    if !seen.insert(comment_id.to_string()) {
        return Err(CorpusError::DuplicateId {
            line,
            id: comment_id.to_string(),
        });
    }
    match row {
        Ok(a) => out.annotations.push(a),
        Err(e @ (CorpusError::MissingCriterion { .. } | CorpusError::ScoreOutOfRange { .. })) => {
            out.rejected.push(Rejection {
                line,
                comment_id: comment_id.to_string(),
                error: e,
            })
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

#[derive(Deserialize)]
struct ExpertRecord {
    comment_id: String,
    scores: serde_json::Map<String, Value>,
}

#[derive(Serialize)]
struct ExpertOut<'a> {
    comment_id: &'a str,
    scores: &'a CriterionMap<u8>,
}

/// Reads expert annotations. Rows with a missing or out-of-range score are
/// filtered into [`ExpertLoad::rejected`]; unknown criterion names, duplicate
/// ids and malformed input abort the load.
pub fn read_expert_annotations<R: Read>(reader: R, format: Format) -> Result<ExpertLoad> {
    let mut out = ExpertLoad::default();
    let mut seen = HashSet::new();
    match format {
        Format::Jsonl => {
            for rec in jsonl_records(BufReader::new(reader)) {
                let (line, text) = rec?;
                let r: ExpertRecord =
                    serde_json::from_str(&text).map_err(|e| parse_err(line, e))?;
                let entries = r
                    .scores
                    .iter()
                    .map(|(k, v)| Ok((k.as_str(), json_score(line, k, v)?)))
                    .collect::<Result<Vec<_>>>()?;
                let row = ExpertAnnotation::from_entries(&r.comment_id, line, entries);
                classify(line, &r.comment_id, row, &mut seen, &mut out)?;
            }
        }
        Format::Csv => {
            let mut table = CsvTable::new(reader)?;
            let id_col = table.require("comment_id")?;
            let criteria: Vec<(usize, String)> = table
                .headers
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != id_col)
                .map(|(i, h)| (i, h.clone()))
                .collect();
            for (_, name) in &criteria {
                if name.parse::<crate::criterion::Criterion>().is_err() {
                    return Err(CorpusError::UnknownCriterion {
                        line: 1,
                        name: name.clone(),
                    });
                }
            }
            for rec in table.records() {
                let (line, r) = rec?;
                let comment_id = r.get(id_col).unwrap_or("").to_string();
                let mut entries = Vec::with_capacity(criteria.len());
                for (i, name) in &criteria {
                    let cell = r.get(*i).unwrap_or("").trim();
                    let value = if cell.is_empty() {
                        None
                    } else {
                        Some(cell.parse::<i64>().map_err(|_| {
                            parse_err(line, format!("`{name}` is not an integer: {cell}"))
                        })?)
                    };
                    entries.push((name.as_str(), value));
                }
                let row = ExpertAnnotation::from_entries(&comment_id, line, entries);
                classify(line, &comment_id, row, &mut seen, &mut out)?;
            }
        }
    }
    Ok(out)
}

pub fn write_expert_annotations<W: Write>(
    writer: W,
    annotations: &[ExpertAnnotation],
    format: Format,
) -> Result<()> {
    match format {
        Format::Jsonl => {
            let mut w = writer;
            for a in annotations {
                let out = ExpertOut {
                    comment_id: &a.comment_id,
                    scores: &a.scores,
                };
                serde_json::to_writer(&mut w, &out).map_err(io_err)?;
                w.write_all(b"\n").map_err(io_err)?;
            }
            w.flush().map_err(io_err)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            let mut header = vec!["comment_id".to_string()];
            header.extend(crate::criterion::Criterion::ALL.iter().map(|c| c.to_string()));
            w.write_record(&header).map_err(io_err)?;
            for a in annotations {
                let mut row = vec![a.comment_id.clone()];
                row.extend(a.scores.values().iter().map(|v| v.to_string()));
                w.write_record(&row).map_err(io_err)?;
            }
            w.flush().map_err(io_err)
        }
    }
}

pub fn load_expert_annotations(path: &Path, format: Format) -> Result<ExpertLoad> {
    read_expert_annotations(open(path)?, format)
}

pub fn save_expert_annotations(
    path: &Path,
    annotations: &[ExpertAnnotation],
    format: Format,
) -> Result<()> {
    write_expert_annotations(create(path)?, annotations, format)
}

// ---- crowd labels ---------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CrowdRecord {
    comment_id: String,
    #[serde(default)]
    votes: Option<Vec<i64>>,
    #[serde(default)]
    label: Option<i64>,
}

#[derive(Serialize)]
struct CrowdOut<'a> {
    comment_id: &'a str,
    label: u8,
}

fn crowd_label(
    line: usize,
    comment_id: String,
    votes: Option<Vec<i64>>,
    label: Option<i64>,
) -> Result<CrowdLabel> {
    if comment_id.is_empty() {
        return Err(CorpusError::EmptyId { line });
    }
    match (votes, label) {
        (Some(votes), None) => {
            let votes = votes
                .into_iter()
                .map(|v| match v {
                    0 | 1 => Ok(v as u8),
                    value => Err(CorpusError::InvalidVote {
                        comment_id: comment_id.clone(),
                        value,
                    }),
                })
                .collect::<Result<Vec<u8>>>()?;
            majority_vote(&CrowdVotes { comment_id, votes })
        }
        (None, Some(l @ (0 | 1))) => Ok(CrowdLabel {
            comment_id,
            label: l == 1,
        }),
        (None, Some(value)) => Err(CorpusError::InvalidLabel { comment_id, value }),
        _ => Err(parse_err(line, "expected exactly one of `votes` or `label`")),
    }
}

/// Reads crowd judgments, aggregating raw votes by majority. Records may carry
/// either a `votes` list or a pre-aggregated `label`. In CSV, votes are
/// separated by `;` or whitespace.
pub fn read_crowd_labels<R: Read>(reader: R, format: Format) -> Result<Vec<CrowdLabel>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut push = |line: usize, label: CrowdLabel| -> Result<()> {
        if !seen.insert(label.comment_id.clone()) {
            return Err(CorpusError::DuplicateId {
                line,
                id: label.comment_id,
            });
        }
        out.push(label);
        Ok(())
    };
    match format {
        Format::Jsonl => {
            for rec in jsonl_records(BufReader::new(reader)) {
                let (line, text) = rec?;
                let r: CrowdRecord =
                    serde_json::from_str(&text).map_err(|e| parse_err(line, e))?;
                push(line, crowd_label(line, r.comment_id, r.votes, r.label)?)?;
            }
        }
        Format::Csv => {
            let mut table = CsvTable::new(reader)?;
            let id_col = table.require("comment_id")?;
            let votes_col = table.column("votes");
            let label_col = table.column("label");
            if votes_col.is_none() && label_col.is_none() {
                return Err(parse_err(1, "missing column `votes` or `label`"));
            }
            for rec in table.records() {
                let (line, r) = rec?;
                let cell = |c: Option<usize>| {
                    c.and_then(|i| r.get(i))
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                };
                let int = |s: &str| {
                    s.parse::<i64>()
                        .map_err(|_| parse_err(line, format!("not an integer: {s}")))
                };
                let votes = cell(votes_col)
                    .map(|s| {
                        s.split(|ch: char| ch == ';' || ch.is_whitespace())
                            .filter(|t| !t.is_empty())
                            .map(int)
                            .collect::<Result<Vec<_>>>()
                    })
                    .transpose()?;
                let label = cell(label_col).map(int).transpose()?;
                let id = r.get(id_col).unwrap_or("").to_string();
                push(line, crowd_label(line, id, votes, label)?)?;
            }
        }
    }
    Ok(out)
}

/// Writes aggregated labels (`label` form).
pub fn write_crowd_labels<W: Write>(writer: W, labels: &[CrowdLabel], format: Format) -> Result<()> {
    match format {
        Format::Jsonl => {
            let mut w = writer;
            for l in labels {
                let out = CrowdOut {
                    comment_id: &l.comment_id,
                    label: l.label as u8,
                };
                serde_json::to_writer(&mut w, &out).map_err(io_err)?;
                w.write_all(b"\n").map_err(io_err)?;
            }
            w.flush().map_err(io_err)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            w.write_record(["comment_id", "label"]).map_err(io_err)?;
            for l in labels {
                w.write_record([l.comment_id.as_str(), if l.label { "1" } else { "0" }])
                    .map_err(io_err)?;
            }
            w.flush().map_err(io_err)
        }
    }
}

pub fn load_crowd_labels(path: &Path, format: Format) -> Result<Vec<CrowdLabel>> {
    read_crowd_labels(open(path)?, format)
}

pub fn save_crowd_labels(path: &Path, labels: &[CrowdLabel], format: Format) -> Result<()> {
    write_crowd_labels(create(path)?, labels, format)
}
