//! Sources of per-criterion prediction vectors.
//!
//! Every provider answers a batch of comments with one vector per comment, in
//! input order. Predictions produced outside this process (files, HTTP
//! responses) are range-checked here, before they can reach the scorer.

mod remote;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::Comment;
use crate::criterion::{
    level_map_from_entries, Criterion, CriterionMap, LevelMapError, DEFAULT_MAX_LEVEL,
};
use crate::score::PredictionVector;

pub use remote::{Health, RemoteEndpointConfig, RemoteProvider};

#[derive(Debug, thiserror::Error)]
pub enum PredictError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: duplicate comment id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: `{comment_id}`: {source}")]
    InvalidVector {
        line: usize,
        comment_id: String,
        #[source]
        source: LevelMapError,
    },
    #[error("no prediction for comment `{0}`")]
    UnknownComment(String),
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("invalid endpoint configuration: {0}")]
    InvalidConfig(String),
    #[error("endpoint unavailable: {0}")]
    EndpointUnavailable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("batch {}: {source}", preview(.ids))]
    Batch {
        ids: Vec<String>,
        #[source]
        source: Box<PredictError>,
    },
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 5;
    let head = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        format!("[{head}, ... {} more]", ids.len() - SHOWN)
    } else {
        format!("[{head}]")
    }
}

impl PredictError {
    /// The comment ids the failure applies to, when known.
    pub fn comment_ids(&self) -> Vec<String> {
        match self {
            PredictError::Batch { ids, .. } => ids.clone(),
            PredictError::UnknownComment(id) => vec![id.clone()],
            PredictError::InvalidVector { comment_id, .. } => vec![comment_id.clone()],
            _ => Vec::new(),
        }
    }
}

pub type Result<T, E = PredictError> = std::result::Result<T, E>;

/// Batch-oriented source of prediction vectors. Output length equals input
/// length and `output[i].comment_id == comments[i].id`.
pub trait PredictionProvider: Send + Sync {
    fn predict(&self, comments: &[Comment]) -> Result<Vec<PredictionVector>>;

    fn predict_one(&self, comment: &Comment) -> Result<PredictionVector> {
        let mut v = self.predict(std::slice::from_ref(comment))?;
        Ok(v.pop().expect("provider returned one vector per comment"))
    }
}

// ---- predictions.jsonl --------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    comment_id: String,
    predictions: serde_json::Map<String, Value>,
}

#[derive(Serialize)]
struct PredictionOut<'a> {
    comment_id: &'a str,
    predictions: &'a CriterionMap<u8>,
}

/// Flattens a JSON `{criterion: int}` object into `(name, value)` entries;
/// `null` counts as missing.
pub(crate) fn json_entries(
    map: &serde_json::Map<String, Value>,
) -> std::result::Result<Vec<(&str, Option<i64>)>, String> {
    map.iter()
        .map(|(k, v)| match v {
            Value::Null => Ok((k.as_str(), None)),
            Value::Number(n) => n
                .as_i64()
                .map(|i| (k.as_str(), Some(i)))
                .ok_or_else(|| format!("`{k}` is not an integer: {n}")),
            other => Err(format!("`{k}` is not an integer: {other}")),
        })
        .collect()
}

/// Reads `predictions.jsonl`. Every vector must be complete and in range.
pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<PredictionVector>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| PredictError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| PredictError::Parse {
                line: line_no,
                reason: e.to_string(),
            })?;
        let entries = json_entries(&rec.predictions).map_err(|reason| PredictError::Parse {
            line: line_no,
            reason,
        })?;
        let predictions = level_map_from_entries(entries, DEFAULT_MAX_LEVEL).map_err(|source| {
            PredictError::InvalidVector {
                line: line_no,
                comment_id: rec.comment_id.clone(),
                source,
            }
        })?;
        out.push(PredictionVector::new(rec.comment_id, predictions));
    }
    Ok(out)
}

/// Writes `predictions.jsonl` with criteria in canonical order.
pub fn write_predictions<W: Write>(mut w: W, vectors: &[PredictionVector]) -> std::io::Result<()> {
    for v in vectors {
        let out = PredictionOut {
            comment_id: &v.comment_id,
            predictions: &v.predictions,
        };
        serde_json::to_writer(&mut w, &out)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionVector>> {
    let f = File::open(path).map_err(|source| PredictError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_predictions(f)
}

// ---- providers ---------------------------------------------------------------

/// Answers from a precomputed `predictions.jsonl` index.
#[derive(Debug, Clone)]
pub struct FileProvider {
    index: HashMap<String, CriterionMap<u8>>,
}

impl FileProvider {
    /// Fails on duplicate comment ids. Vectors are validated against the
    /// four-point scale.
    pub fn new(vectors: Vec<PredictionVector>) -> Result<Self> {
        let mut index = HashMap::with_capacity(vectors.len());
        for (i, v) in vectors.into_iter().enumerate() {
            let out_of_range = v.predictions.iter().find(|(_, &l)| l > DEFAULT_MAX_LEVEL);
            if let Some((criterion, &value)) = out_of_range {
                return Err(PredictError::InvalidVector {
                    line: i + 1,
                    comment_id: v.comment_id,
                    source: LevelMapError::OutOfRange {
                        criterion,
                        value: i64::from(value),
                        max: DEFAULT_MAX_LEVEL,
                    },
                });
            }
            if index.contains_key(&v.comment_id) {
                return Err(PredictError::DuplicateId {
                    line: i + 1,
                    id: v.comment_id,
                });
            }
            index.insert(v.comment_id, v.predictions);
        }
        Ok(FileProvider { index })
    }

    pub fn open(path: &Path) -> Result<Self> {
        Self::new(load_predictions(path)?)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

impl PredictionProvider for FileProvider {
    fn predict(&self, comments: &[Comment]) -> Result<Vec<PredictionVector>> {
        comments
            .iter()
            .map(|c| {
                self.index
                    .get(&c.id)
                    .map(|p| PredictionVector::new(c.id.clone(), *p))
                    .ok_or_else(|| PredictError::UnknownComment(c.id.clone()))
            })
            .collect()
    }
}

fn check_template(template: &CriterionMap<u8>) -> Result<()> {
    match template.iter().find(|(_, &l)| l > DEFAULT_MAX_LEVEL) {
        Some((c, l)) => Err(PredictError::InvalidRule(format!(
            "template level {c}={l} is outside 0..={DEFAULT_MAX_LEVEL}"
        ))),
        None => Ok(()),
    }
}

/// Returns the same vector for every comment.
#[derive(Debug, Clone)]
pub struct ConstantProvider {
    template: CriterionMap<u8>,
}

impl ConstantProvider {
    pub fn new(template: CriterionMap<u8>) -> Result<Self> {
        check_template(&template)?;
        Ok(ConstantProvider { template })
    }

    pub fn zeros() -> Self {
        ConstantProvider {
            template: CriterionMap::filled(0),
        }
    }
}

impl PredictionProvider for ConstantProvider {
    fn predict(&self, comments: &[Comment]) -> Result<Vec<PredictionVector>> {
        Ok(comments
            .iter()
            .map(|c| PredictionVector::new(c.id.clone(), self.template))
            .collect())
    }
}

/// Sets `criterion` to `level` when the comment text contains `pattern`,
/// compared case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordRule {
    pattern: String,
    pub criterion: Criterion,
    pub level: u8,
}

impl KeywordRule {
    pub fn new(pattern: &str, criterion: Criterion, level: u8) -> Result<Self> {
        if pattern.is_empty() {
            return Err(PredictError::InvalidRule("empty pattern".into()));
        }
        if level > DEFAULT_MAX_LEVEL {
            return Err(PredictError::InvalidRule(format!(
                "level {level} for {criterion} is outside 0..={DEFAULT_MAX_LEVEL}"
            )));
        }
        Ok(KeywordRule {
            pattern: pattern.to_lowercase(),
            criterion,
            level,
        })
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    fn matches(&self, lowered_text: &str) -> bool {
        lowered_text.contains(&self.pattern)
    }
}

/// Parses `PATTERN=>criterion:level`, e.g. `?=>question:3`.
impl FromStr for KeywordRule {
    type Err = PredictError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || PredictError::InvalidRule(format!("`{s}`: expected PATTERN=>criterion:level"));
        let (pattern, target) = s.rsplit_once("=>").ok_or_else(bad)?;
        let (name, level) = target.split_once(':').ok_or_else(bad)?;
        let criterion: Criterion = name
            .trim()
            .parse()
            .map_err(|e: crate::criterion::UnknownCriterion| PredictError::InvalidRule(e.to_string()))?;
        let level: u8 = level.trim().parse().map_err(|_| bad())?;
        KeywordRule::new(pattern, criterion, level)
    }
}

/// Deterministic test double: starts from a template and applies keyword rules
/// in order, later rules overriding earlier ones.
#[derive(Debug, Clone)]
pub struct KeywordMockProvider {
    template: CriterionMap<u8>,
    rules: Vec<KeywordRule>,
}

impl KeywordMockProvider {
    pub fn new(template: CriterionMap<u8>, rules: Vec<KeywordRule>) -> Result<Self> {
        check_template(&template)?;
        Ok(KeywordMockProvider { template, rules })
    }

    fn levels_for(&self, text: &str) -> CriterionMap<u8> {
        let lowered = text.to_lowercase();
        let mut levels = self.template;
        for rule in self.rules.iter().filter(|r| r.matches(&lowered)) {
            levels[rule.criterion] = rule.level;
        }
        levels
    }
}

impl PredictionProvider for KeywordMockProvider {
    fn predict(&self, comments: &[Comment]) -> Result<Vec<PredictionVector>> {
        Ok(comments
            .iter()
            .map(|c| PredictionVector::new(c.id.clone(), self.levels_for(&c.text)))
            .collect())
    }
}

/// Ids that occur more than once in `comments`, in first-seen order.
pub(crate) fn duplicate_ids(comments: &[Comment]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for c in comments {
        if !seen.insert(c.id.as_str()) && !dups.contains(&c.id) {
            dups.push(c.id.clone());
        }
    }
    dups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::aqua_score;
    use crate::weights::default_weights;

    fn comments(ids: &[&str]) -> Vec<Comment> {
        ids.iter().map(|id| Comment::new(*id, format!("text of {id}"))).collect()
    }

    #[test]
    fn file_provider_lookup() {
        let mut v = PredictionVector::zeros("c1");
        v.predictions[Criterion::Fact] = 2;
        let p = FileProvider::new(vec![v.clone()]).unwrap();
        assert_eq!(p.predict(&comments(&["c1"])).unwrap(), vec![v]);
        match p.predict(&comments(&["c1", "nope"])) {
            Err(PredictError::UnknownComment(id)) => assert_eq!(id, "nope"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn file_provider_rejects_bad_files() {
        let dup = vec![PredictionVector::zeros("a"), PredictionVector::zeros("a")];
        assert!(matches!(FileProvider::new(dup), Err(PredictError::DuplicateId { .. })));

        let line = "{\"comment_id\":\"c1\",\"predictions\":{\"justification\":5}}";
        let mut full: serde_json::Map<String, Value> =
            Criterion::ALL.iter().map(|c| (c.to_string(), Value::from(0))).collect();
        full.insert("justification".into(), Value::from(5));
        let full_line = serde_json::json!({"comment_id": "c1", "predictions": full}).to_string();
        for text in [line.to_string(), full_line] {
            let err = read_predictions(text.as_bytes()).unwrap_err();
            assert!(matches!(err, PredictError::InvalidVector { .. }), "{err:?}");
        }
        // the out-of-range value is reported, not masked by missing criteria
        let err = read_predictions(
            serde_json::json!({"comment_id": "c1", "predictions": full}).to_string().as_bytes(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            PredictError::InvalidVector {
                source: LevelMapError::OutOfRange {
                    criterion: Criterion::Justification,
                    value: 5,
                    ..
                },
                ..
            }
        ));
    }

    #[test]
    fn predictions_jsonl_round_trip() {
        let mut a = PredictionVector::zeros("a");
        a.predictions[Criterion::Sarcasm] = 3;
        let vs = vec![a, PredictionVector::zeros("b")];
        let mut buf = Vec::new();
        write_predictions(&mut buf, &vs).unwrap();
        let back = read_predictions(buf.as_slice()).unwrap();
        assert_eq!(back, vs);
        let mut again = Vec::new();
        write_predictions(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn constant_zero_provider_end_to_end() {
        let w = default_weights();
        let out = ConstantProvider::zeros().predict(&comments(&["a", "b", "c"])).unwrap();
        assert_eq!(out.len(), 3);
        for v in &out {
            let s = aqua_score(v, &w).unwrap();
            assert!((s.normalized - 1.25349).abs() < 1e-4);
        }
        let mut bad = CriterionMap::filled(0);
        bad[Criterion::Fact] = 9;
        assert!(matches!(ConstantProvider::new(bad), Err(PredictError::InvalidRule(_))));
    }

    #[test]
    fn keyword_rules() {
        let rule: KeywordRule = "?=>question:3".parse().unwrap();
        assert_eq!(rule.criterion, Criterion::Question);
        let mut template = CriterionMap::filled(0);
        template[Criterion::Relevance] = 1;
        let p = KeywordMockProvider::new(template, vec![rule, "IDIOT=>insult:2".parse().unwrap()]).unwrap();
        let out = p
            .predict(&[Comment::new("q", "Why?"), Comment::new("i", "you idiot")])
            .unwrap();
        assert_eq!(out[0].predictions[Criterion::Question], 3);
        assert_eq!(out[0].predictions[Criterion::Relevance], 1);
        assert_eq!(out[0].predictions[Criterion::Insult], 0);
        assert_eq!(out[1].predictions[Criterion::Insult], 2);
        assert_eq!(out[1].predictions[Criterion::Question], 0);

        let again = KeywordMockProvider::new(template, p.rules.clone()).unwrap();
        let input = [Comment::new("q", "Why?")];
        assert_eq!(p.predict(&input).unwrap(), again.predict(&input).unwrap());
    }

    #[test]
    fn invalid_rules() {
        for s in ["?=>question", "?=>questions:1", "?=>question:4", "=>question:1", "no arrow"] {
            assert!(matches!(s.parse::<KeywordRule>(), Err(PredictError::InvalidRule(_))), "{s}");
        }
        // pattern may itself contain the separator characters
        let r: KeywordRule = "a=>b=>fact:1".parse().unwrap();
        assert_eq!(r.pattern(), "a=>b");
    }

    #[test]
    fn providers_are_interchangeable() {
        let cs = comments(&["x", "y"]);
        let rules = vec!["text of x=>justification:3".parse().unwrap()];
        let mock = KeywordMockProvider::new(CriterionMap::filled(0), rules).unwrap();
        let mocked = mock.predict(&cs).unwrap();
        let file = FileProvider::new(mocked.clone()).unwrap();
        let w = default_weights();
        for (a, b) in mocked.iter().zip(file.predict(&cs).unwrap()) {
            let sa = aqua_score(a, &w).unwrap();
            let sb = aqua_score(&b, &w).unwrap();
            assert_eq!(sa.normalized.to_bits(), sb.normalized.to_bits());
        }
    }

    #[test]
    fn duplicate_detection() {
        assert_eq!(duplicate_ids(&comments(&["a", "b", "a", "a"])), vec!["a"]);
        assert!(duplicate_ids(&comments(&["a", "b"])).is_empty());
    }
}
