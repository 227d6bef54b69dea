use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{EvalError, Result};

/// Per-class tallies of one predicted/gold label sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    /// Number of gold items of this class.
    pub support: usize,
}

/// Counts for every class that occurs in either sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts<L: Ord> {
    pub classes: BTreeMap<L, ClassCounts>,
    pub total: usize,
}

pub fn confusion_counts<L: Ord + Copy>(pred: &[L], gold: &[L]) -> Result<ConfusionCounts<L>> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut classes: BTreeMap<L, ClassCounts> = BTreeMap::new();
    for (&p, &g) in pred.iter().zip(gold) {
        classes.entry(g).or_default().support += 1;
        if p == g {
            classes.entry(g).or_default().true_positive += 1;
        } else {
            classes.entry(p).or_default().false_positive += 1;
            classes.entry(g).or_default().false_negative += 1;
        }
    }
    Ok(ConfusionCounts {
        classes,
        total: gold.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Per-class precision/recall/F1 with macro and support-weighted averages.
/// Zero denominators yield 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Report<L: Ord> {
    pub per_class: BTreeMap<L, ClassMetrics>,
    /// Unweighted mean over classes present in gold.
    pub macro_f1: f64,
    /// Support-weighted mean over classes.
    pub weighted_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl<L: Ord + Copy> F1Report<L> {
    pub fn from_counts(counts: &ConfusionCounts<L>) -> Self {
        let mut per_class = BTreeMap::new();
        let mut macro_sum = 0.0;
        let mut macro_n = 0usize;
        let mut weighted = 0.0;
        let mut correct = 0usize;
        for (&label, c) in &counts.classes {
            let precision = ratio(c.true_positive, c.true_positive + c.false_positive);
            let recall = ratio(c.true_positive, c.true_positive + c.false_negative);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            if c.support > 0 {
                macro_sum += f1;
                macro_n += 1;
                weighted += f1 * c.support as f64;
            }
            correct += c.true_positive;
            per_class.insert(
                label,
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support: c.support,
                },
            );
        }
        F1Report {
            per_class,
            macro_f1: macro_sum / macro_n as f64,
            weighted_f1: weighted / counts.total as f64,
            accuracy: ratio(correct, counts.total),
        }
    }
}

/// Precision, recall and F1 per class plus macro and weighted F1.
pub fn f1_scores<L: Ord + Copy>(pred: &[L], gold: &[L]) -> Result<F1Report<L>> {
    Ok(F1Report::from_counts(&confusion_counts(pred, gold)?))
}

/// Only the support-weighted F1.
pub fn weighted_f1<L: Ord + Copy>(pred: &[L], gold: &[L]) -> Result<f64> {
    Ok(f1_scores(pred, gold)?.weighted_f1)
}

impl<L: Ord + fmt::Display> fmt::Display for F1Report<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>8}  {:>9}  {:>9}  {:>9}  {:>7}",
            "class", "precision", "recall", "f1", "support"
        )?;
        for (label, m) in &self.per_class {
            writeln!(
                f,
                "{:>8}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
                label.to_string(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            )?;
        }
        writeln!(f, "{:>8}  {:>9}  {:>9}  {:>9.4}", "macro", "", "", self.macro_f1)?;
        writeln!(f, "{:>8}  {:>9}  {:>9}  {:>9.4}", "weighted", "", "", self.weighted_f1)?;
        write!(f, "{:>8}  {:>9}  {:>9}  {:>9.4}", "accuracy", "", "", self.accuracy)
    }
}
