//! The additive score and its normalization to `[0, 5]`.
//!
//! The raw score of a comment is the weighted sum of its per-criterion
//! predictions. The normalized score rescales it linearly so that the analytic
//! minimum of the active weight table maps to 0 and its maximum to 5. Bounds
//! are always recomputed from the table passed in, never cached.

use std::io::{BufRead, BufReader, Read, Write};

use serde::Deserialize;

use crate::criterion::{Criterion, CriterionMap, DEFAULT_MAX_LEVEL};
use crate::fmt::format_g17;
use crate::weights::{default_bounds, ScoreBounds, WeightTable};

/// Upper end of the normalized scale.
pub const SCALE_MAX: f64 = 5.0;

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("`{comment_id}`: prediction {criterion}={level} is outside 0..={max_level}")]
    CriterionMismatch {
        comment_id: String,
        criterion: Criterion,
        level: u8,
        max_level: u8,
    },
    #[error("degenerate bounds: s_min = s_max = {0}")]
    DegenerateBounds(f64),
    #[error("`{comment_id}`: score is not finite")]
    NonFinite { comment_id: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ScoreError> = std::result::Result<T, E>;

/// Predicted level per criterion for one comment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionVector {
    pub comment_id: String,
    pub predictions: CriterionMap<u8>,
}

impl PredictionVector {
    pub fn new(comment_id: impl Into<String>, predictions: CriterionMap<u8>) -> Self {
        PredictionVector {
            comment_id: comment_id.into(),
            predictions,
        }
    }

    /// Every criterion at level 0.
    pub fn zeros(comment_id: impl Into<String>) -> Self {
        Self::new(comment_id, CriterionMap::filled(0))
    }

    /// Checks every level against `0..=max_level`.
    pub fn validate(&self, max_level: u8) -> Result<()> {
        match self.predictions.iter().find(|(_, &l)| l > max_level) {
            Some((criterion, &level)) => Err(ScoreError::CriterionMismatch {
                comment_id: self.comment_id.clone(),
                criterion,
                level,
                max_level,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AquaScore {
    pub comment_id: String,
    pub raw: f64,
    pub normalized: f64,
}

/// Weighted sum of predictions, accumulated in canonical criterion order.
pub fn raw_score(p: &PredictionVector, w: &WeightTable) -> Result<f64> {
    p.validate(DEFAULT_MAX_LEVEL)?;
    Ok(weighted_sum(&p.predictions, w))
}

fn weighted_sum(levels: &CriterionMap<u8>, w: &WeightTable) -> f64 {
    levels
        .iter()
        .fold(0.0, |acc, (c, &level)| acc + w.weight(c) * f64::from(level))
}

/// Maps `raw` linearly from `[s_min, s_max]` onto `[0, 5]`. No clamping: a
/// result outside the scale means the input violated the prediction domain.
pub fn normalize(raw: f64, bounds: ScoreBounds) -> Result<f64> {
    let span = bounds.span();
    if span == 0.0 {
        return Err(ScoreError::DegenerateBounds(bounds.s_min));
    }
    Ok(SCALE_MAX * ((raw - bounds.s_min) / span))
}

/// Raw and normalized score of one prediction vector.
pub fn aqua_score(p: &PredictionVector, w: &WeightTable) -> Result<AquaScore> {
    let raw = raw_score(p, w)?;
    let normalized = normalize(raw, default_bounds(w))?;
    Ok(AquaScore {
        comment_id: p.comment_id.clone(),
        raw,
        normalized,
    })
}

/// Scores each vector independently; output order follows input order. The
/// first invalid vector aborts the batch.
pub fn score_batch(ps: &[PredictionVector], w: &WeightTable) -> Result<Vec<AquaScore>> {
    ps.iter().map(|p| aqua_score(p, w)).collect()
}

// ---- scores.jsonl -----------------------------------------------------------

/// One `scores.jsonl` line, without the trailing newline. Floats carry 17
/// significant digits.
pub fn score_line(s: &AquaScore) -> Result<String> {
    let non_finite = || ScoreError::NonFinite {
        comment_id: s.comment_id.clone(),
    };
    let raw = format_g17(s.raw).ok_or_else(non_finite)?;
    let aqua = format_g17(s.normalized).ok_or_else(non_finite)?;
    let id = serde_json::to_string(&s.comment_id).expect("strings serialize");
    Ok(format!("{{\"comment_id\":{id},\"raw\":{raw},\"aqua\":{aqua}}}"))
}

pub fn write_scores<W: Write>(mut w: W, scores: &[AquaScore]) -> Result<()> {
    for s in scores {
        writeln!(w, "{}", score_line(s)?)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreRecord {
    comment_id: String,
    raw: f64,
    aqua: f64,
}

pub fn read_scores<R: Read>(r: R) -> Result<Vec<AquaScore>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(&line).map_err(|e| ScoreError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        out.push(AquaScore {
            comment_id: rec.comment_id,
            raw: rec.raw,
            normalized: rec.aqua,
        });
    }
    Ok(out)
}
