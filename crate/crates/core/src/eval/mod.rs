//! Agreement statistics, classification metrics and score reports.

mod agreement;
mod alpha;
mod f1;
mod report;
mod threshold;

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

pub use agreement::{
    criterion_agreement, read_coder_annotations, CoderAnnotation, CriterionAgreement, ALPHA_THRESHOLD,
};
pub use alpha::{krippendorff_alpha, Alpha, ReliabilityMatrix};
pub use f1::{confusion_counts, f1_scores, weighted_f1, ClassCounts, ClassMetrics, ConfusionCounts, F1Report};
pub use report::{
    evaluate_threshold, evaluate_tuned, join_by_id, length_analysis, rank_report, rank_report_split,
    toxicity_eval, word_count, write_length_csv, Contribution, LengthBin, LengthPoint, LengthReport,
    RankEntry, RankReport, ThresholdEvaluation, AVERAGING_NOTE, LENGTH_BIN_WIDTH,
};
pub use threshold::{
    threshold_classify, tune_threshold, Grid, TunedThreshold, DEFAULT_THRESHOLD, TIE_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} predictions vs {right} gold labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("no items to evaluate")]
    EmptyInput,
    #[error("no criteria selected")]
    EmptyCriteria,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("insufficient data for alpha: {0}")]
    InsufficientData(String),
    #[error("reliability matrix rows differ in length")]
    RaggedMatrix,
    #[error("degenerate grid lo={lo} hi={hi} step={step}")]
    BadGrid { lo: f64, hi: f64, step: f64 },
    #[error("grid must be LO:HI:STEP, got {0:?}")]
    InvalidGridSpec(String),
    #[error("{} ids in {left} missing from {right}: {}", missing.len(), preview(missing))]
    JoinFailure {
        left: String,
        right: String,
        missing: Vec<String>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: duplicate comment_id {id:?}")]
    DuplicateId { line: usize, id: String },
}

pub type Result<T> = std::result::Result<T, EvalError>;

fn preview(ids: &[String]) -> String {
    let mut s = ids.iter().take(5).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > 5 {
        s.push_str(", ...");
    }
    s
}

/// Gold labels from `labels.jsonl`; a file holds one kind only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoldLabels {
    /// `{"comment_id", "label"}`, binary constructiveness.
    Binary(Vec<(String, bool)>),
    /// `{"comment_id", "toxicity"}`, levels 0–3.
    Toxicity(Vec<(String, u8)>),
}

impl GoldLabels {
    pub fn len(&self) -> usize {
        match self {
            GoldLabels::Binary(v) => v.len(),
            GoldLabels::Toxicity(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRecord {
    comment_id: String,
    label: Option<i64>,
    toxicity: Option<i64>,
}

pub fn read_labels<R: Read>(reader: R) -> Result<GoldLabels> {
    let mut binary = Vec::new();
    let mut toxicity = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| EvalError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |reason: String| EvalError::Parse {
            line: line_no,
            reason,
        };
        let rec: LabelRecord = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        if !seen.insert(rec.comment_id.clone()) {
            return Err(EvalError::DuplicateId {
                line: line_no,
                id: rec.comment_id,
            });
        }
        match (rec.label, rec.toxicity) {
            (Some(l @ (0 | 1)), None) => binary.push((rec.comment_id, l == 1)),
            (None, Some(t @ 0..=3)) => toxicity.push((rec.comment_id, t as u8)),
            (Some(l), None) => return Err(parse(format!("label must be 0 or 1, got {l}"))),
            (None, Some(t)) => return Err(parse(format!("toxicity must be 0..3, got {t}"))),
            _ => return Err(parse("expected exactly one of \"label\" or \"toxicity\"".into())),
        }
        if !binary.is_empty() && !toxicity.is_empty() {
            return Err(parse("file mixes \"label\" and \"toxicity\" records".into()));
        }
    }
    Ok(if toxicity.is_empty() {
        GoldLabels::Binary(binary)
    } else {
        GoldLabels::Toxicity(toxicity)
    })
}

pub fn load_labels(path: &Path) -> Result<GoldLabels> {
    let f = std::fs::File::open(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_labels(f)
}
