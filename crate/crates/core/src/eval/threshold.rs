use serde::Serialize;

use super::f1::weighted_f1;
use super::{EvalError, Result};
use crate::score::SCALE_MAX;

/// Fixed threshold used when no tuning is requested.
pub const DEFAULT_THRESHOLD: f64 = 2.3;

/// Label 1 iff `score >= threshold`.
pub fn threshold_classify(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= threshold).collect()
}

/// Inclusive grid `lo, lo + step, ..., <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            lo: 0.0,
            hi: SCALE_MAX,
            step: 0.05,
        }
    }
}

impl Grid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || step <= 0.0 || hi < lo {
            return Err(EvalError::BadGrid { lo, hi, step });
        }
        if (hi - lo) / step > 1e7 {
            return Err(EvalError::BadGrid { lo, hi, step });
        }
        Ok(Grid { lo, hi, step })
    }

    /// Points are computed as `lo + i * step` and snapped to 12 decimals so
    /// that e.g. 2.3 comes out as the literal 2.3 rather than an accumulated
    /// neighbour.
    pub fn points(&self) -> Vec<f64> {
        let snap = |x: f64| (x * 1e12).round() / 1e12;
        let mut out = Vec::new();
        let mut i = 0u64;
        loop {
            let p = snap(self.lo + i as f64 * self.step);
            if p > self.hi + self.step * 1e-9 {
                break;
            }
            out.push(p.min(self.hi));
            i += 1;
        }
        out
    }
}

impl std::str::FromStr for Grid {
    type Err = EvalError;

    /// `LO:HI:STEP`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || EvalError::InvalidGridSpec(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, step] = parts.as_slice() else {
            return Err(bad());
        };
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| bad());
        Grid::new(num(lo)?, num(hi)?, num(step)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TunedThreshold {
    pub threshold: f64,
    pub weighted_f1: f64,
}

/// F1 values closer than this count as tied; different but mathematically
/// equal confusion tables can differ in the last few ulps.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Grid point maximising weighted F1; ties go to the lowest threshold.
pub fn tune_threshold(scores: &[f64], gold: &[bool], grid: &Grid) -> Result<TunedThreshold> {
    if scores.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            left: scores.len(),
            right: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut best: Option<TunedThreshold> = None;
    for t in grid.points() {
        let f = weighted_f1(&threshold_classify(scores, t), gold)?;
        if best.is_none_or(|b| f > b.weighted_f1 + TIE_TOLERANCE) {
            best = Some(TunedThreshold {
                threshold: t,
                weighted_f1: f,
            });
        }
    }
    best.ok_or(EvalError::EmptyInput)
}
