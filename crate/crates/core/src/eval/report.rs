use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Write};

use serde::Serialize;

use super::f1::{f1_scores, F1Report};
use super::threshold::{threshold_classify, tune_threshold, Grid, TunedThreshold};
use super::{EvalError, Result};
use crate::corpus::Comment;
use crate::criterion::Criterion;
use crate::fmt::format_g17;
use crate::score::{AquaScore, PredictionVector};

/// Which F1 average the binary threshold evaluation optimises and reports
/// as its headline number.
pub const AVERAGING_NOTE: &str =
    "headline F1 is the support-weighted average over both classes (assumed averaging variant)";

/// Weighted F1 of each criterion's predicted level against gold 0–3 toxicity.
pub fn toxicity_eval(
    predictions: &[PredictionVector],
    gold: &[u8],
    criteria: &[Criterion],
) -> Result<BTreeMap<Criterion, f64>> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            left: predictions.len(),
            right: gold.len(),
        });
    }
    if criteria.is_empty() {
        return Err(EvalError::EmptyCriteria);
    }
    criteria
        .iter()
        .map(|&c| {
            let pred: Vec<u8> = predictions.iter().map(|p| p.predictions[c]).collect();
            Ok((c, f1_scores(&pred, gold)?.weighted_f1))
        })
        .collect()
}

/// Binary evaluation at a fixed or tuned threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdEvaluation {
    pub threshold: f64,
    /// Present when the threshold came from a grid scan.
    pub tuned: Option<TunedThreshold>,
    pub grid: Option<Grid>,
    pub f1: F1Report<u8>,
    pub note: &'static str,
}

pub fn evaluate_threshold(scores: &[f64], gold: &[bool], threshold: f64) -> Result<ThresholdEvaluation> {
    let pred: Vec<u8> = threshold_classify(scores, threshold)
        .into_iter()
        .map(u8::from)
        .collect();
    let gold: Vec<u8> = gold.iter().map(|&g| u8::from(g)).collect();
    Ok(ThresholdEvaluation {
        threshold,
        tuned: None,
        grid: None,
        f1: f1_scores(&pred, &gold)?,
        note: AVERAGING_NOTE,
    })
}

pub fn evaluate_tuned(scores: &[f64], gold: &[bool], grid: &Grid) -> Result<ThresholdEvaluation> {
    let tuned = tune_threshold(scores, gold, grid)?;
    let mut ev = evaluate_threshold(scores, gold, tuned.threshold)?;
    ev.tuned = Some(tuned);
    ev.grid = Some(*grid);
    Ok(ev)
}

impl fmt::Display for ThresholdEvaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.tuned, &self.grid) {
            (Some(t), Some(g)) => writeln!(
                f,
                "threshold {} (tuned over {}..{} step {}, weighted F1 {:.4})",
                self.threshold, g.lo, g.hi, g.step, t.weighted_f1
            )?,
            _ => writeln!(f, "threshold {}", self.threshold)?,
        }
        writeln!(f, "{}", self.f1)?;
        write!(f, "note: {}", self.note)
    }
}

/// Pairs every element of `left` with the item of the same id in `right`.
/// Fails with the list of unmatched ids from either side.
pub fn join_by_id<'a, A, B>(
    left: &'a [A],
    left_id: impl Fn(&A) -> &str,
    left_name: &str,
    right: &'a [B],
    right_id: impl Fn(&B) -> &str,
    right_name: &str,
) -> Result<Vec<(&'a A, &'a B)>> {
    let index: HashMap<&str, &B> = right.iter().map(|b| (right_id(b), b)).collect();
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(left.len());
    for a in left {
        match index.get(left_id(a)) {
            Some(b) => out.push((a, *b)),
            None => missing.push(left_id(a).to_string()),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(EvalError::JoinFailure {
            left: left_name.to_string(),
            right: right_name.to_string(),
            missing,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Contribution {
    pub criterion: Criterion,
    pub level: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankEntry {
    pub comment_id: String,
    pub aqua: f64,
    /// Criteria predicted above 0, canonical order.
    pub contributing: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    /// Descending by score.
    pub top: Vec<RankEntry>,
    /// Ascending by score.
    pub bottom: Vec<RankEntry>,
}

/// Top-k and bottom-k of the same size.
pub fn rank_report(scores: &[AquaScore], predictions: &[PredictionVector], k: usize) -> Result<RankReport> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    rank_report_split(scores, predictions, k, k)
}

/// Ties break by comment id ascending in both lists; k larger than the
/// corpus returns the full ordering.
pub fn rank_report_split(
    scores: &[AquaScore],
    predictions: &[PredictionVector],
    top: usize,
    bottom: usize,
) -> Result<RankReport> {
    if top == 0 && bottom == 0 {
        return Err(EvalError::InvalidK);
    }
    let joined = join_by_id(
        scores,
        |s| &s.comment_id,
        "scores",
        predictions,
        |p| &p.comment_id,
        "predictions",
    )?;
    let entry = |(s, p): &(&AquaScore, &PredictionVector)| RankEntry {
        comment_id: s.comment_id.clone(),
        aqua: s.normalized,
        contributing: p
            .predictions
            .iter()
            .filter(|(_, l)| **l > 0)
            .map(|(criterion, &level)| Contribution { criterion, level })
            .collect(),
    };
    let mut desc = joined.clone();
    desc.sort_by(|a, b| {
        b.0.normalized
            .total_cmp(&a.0.normalized)
            .then_with(|| a.0.comment_id.cmp(&b.0.comment_id))
    });
    let mut asc = joined;
    asc.sort_by(|a, b| {
        a.0.normalized
            .total_cmp(&b.0.normalized)
            .then_with(|| a.0.comment_id.cmp(&b.0.comment_id))
    });
    Ok(RankReport {
        top: desc.iter().take(top).map(entry).collect(),
        bottom: asc.iter().take(bottom).map(entry).collect(),
    })
}

fn write_rank_rows(f: &mut fmt::Formatter<'_>, rows: &[RankEntry]) -> fmt::Result {
    let width = rows.iter().map(|r| r.comment_id.len()).max().unwrap_or(0).max(10);
    for r in rows {
        let labels: Vec<String> = r
            .contributing
            .iter()
            .map(|c| format!("{}={}", c.criterion, c.level))
            .collect();
        writeln!(f, "{:<width$}  {:>6.3}  {}", r.comment_id, r.aqua, labels.join(" "))?;
    }
    Ok(())
}

impl fmt::Display for RankReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "top {}", self.top.len())?;
        write_rank_rows(f, &self.top)?;
        writeln!(f, "bottom {}", self.bottom.len())?;
        write_rank_rows(f, &self.bottom)
    }
}

pub const LENGTH_BIN_WIDTH: usize = 10;

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthPoint {
    pub comment_id: String,
    pub word_count: usize,
    pub aqua: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthBin {
    /// Inclusive word-count range.
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthReport {
    /// In score order.
    pub points: Vec<LengthPoint>,
    /// Non-empty bins only, ascending.
    pub bins: Vec<LengthBin>,
}

pub fn length_analysis(scores: &[AquaScore], comments: &[Comment]) -> Result<LengthReport> {
    let joined = join_by_id(scores, |s| &s.comment_id, "scores", comments, |c| &c.id, "comments")?;
    let points: Vec<LengthPoint> = joined
        .iter()
        .map(|(s, c)| LengthPoint {
            comment_id: s.comment_id.clone(),
            word_count: word_count(&c.text),
            aqua: s.normalized,
        })
        .collect();
    let mut acc: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
    for p in &points {
        let e = acc
            .entry(p.word_count / LENGTH_BIN_WIDTH)
            .or_insert((0, 0.0, f64::NEG_INFINITY));
        e.0 += 1;
        e.1 += p.aqua;
        e.2 = e.2.max(p.aqua);
    }
    let bins = acc
        .into_iter()
        .map(|(b, (count, sum, max))| LengthBin {
            lo: b * LENGTH_BIN_WIDTH,
            hi: b * LENGTH_BIN_WIDTH + LENGTH_BIN_WIDTH - 1,
            count,
            mean: sum / count as f64,
            max,
        })
        .collect();
    Ok(LengthReport { points, bins })
}

/// `word_count,aqua` rows for external plotting.
pub fn write_length_csv<W: Write>(mut w: W, points: &[LengthPoint]) -> io::Result<()> {
    writeln!(w, "word_count,aqua")?;
    for p in points {
        let aqua = format_g17(p.aqua)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "non-finite score"))?;
        writeln!(w, "{},{}", p.word_count, aqua)?;
    }
    Ok(())
}

impl fmt::Display for LengthReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>9}  {:>6}  {:>7}  {:>7}", "words", "count", "mean", "max")?;
        for b in &self.bins {
            write!(
                f,
                "\n{:>9}  {:>6}  {:>7.4}  {:>7.4}",
                format!("{}-{}", b.lo, b.hi),
                b.count,
                b.mean,
                b.max
            )?;
        }
        Ok(())
    }
}
