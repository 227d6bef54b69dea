//! Per-criterion intercoder reliability over multi-coder annotations.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use super::alpha::{krippendorff_alpha, ReliabilityMatrix};
use super::{EvalError, Result};
use crate::criterion::{Criterion, CriterionMap, DEFAULT_MAX_LEVEL};
use crate::predict::json_entries;

/// Minimum alpha a criterion needs to count as reliably coded.
pub const ALPHA_THRESHOLD: f64 = 0.67;

/// One coder's levels for one comment; criteria may be absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoderAnnotation {
    pub comment_id: String,
    pub coder: String,
    pub scores: CriterionMap<Option<u8>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CoderRecord {
    comment_id: String,
    coder: String,
    scores: serde_json::Map<String, serde_json::Value>,
}

/// Reads `{"comment_id", "coder", "scores": {criterion: int|null}}` lines.
pub fn read_coder_annotations<R: Read>(reader: R) -> Result<Vec<CoderAnnotation>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let parse = |reason: String| EvalError::Parse {
            line: line_no,
            reason,
        };
        let line = line.map_err(|e| parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CoderRecord = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        if !seen.insert((rec.comment_id.clone(), rec.coder.clone())) {
            return Err(parse(format!(
                "coder `{}` annotated `{}` twice",
                rec.coder, rec.comment_id
            )));
        }
        let mut scores = CriterionMap::filled(None);
        for (name, value) in json_entries(&rec.scores).map_err(parse)? {
            let c: Criterion = name.parse().map_err(|e| parse(format!("{e}")))?;
            scores[c] = match value {
                None => None,
                Some(v @ 0..=3) => Some(v as u8),
                Some(v) => {
                    return Err(parse(format!(
                        "`{c}` level {v} outside 0..={DEFAULT_MAX_LEVEL}"
                    )))
                }
            };
        }
        out.push(CoderAnnotation {
            comment_id: rec.comment_id,
            coder: rec.coder,
            scores,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionAgreement {
    pub criterion: Criterion,
    /// `None` when the criterion has too little data for alpha.
    pub alpha: Option<f64>,
    pub pairable: usize,
    /// All pairable values were identical; alpha is 1 by convention.
    pub degenerate: bool,
    pub reliable: bool,
}

/// Nominal alpha per criterion, items = comments, coders = distinct coder
/// names (both sorted).
pub fn criterion_agreement(annotations: &[CoderAnnotation], threshold: f64) -> Vec<CriterionAgreement> {
    let mut items: BTreeMap<&str, usize> = BTreeMap::new();
    let mut coders: BTreeMap<&str, usize> = BTreeMap::new();
    for a in annotations {
        items.insert(&a.comment_id, 0);
        coders.insert(&a.coder, 0);
    }
    for (i, v) in items.values_mut().enumerate() {
        *v = i;
    }
    for (i, v) in coders.values_mut().enumerate() {
        *v = i;
    }
    Criterion::ALL
        .iter()
        .map(|&c| {
            let mut rows = vec![vec![None; coders.len()]; items.len()];
            for a in annotations {
                rows[items[a.comment_id.as_str()]][coders[a.coder.as_str()]] = a.scores[c];
            }
            match ReliabilityMatrix::new(rows) {
                Ok(m) => {
                    let a = krippendorff_alpha(&m);
                    CriterionAgreement {
                        criterion: c,
                        alpha: Some(a.value),
                        pairable: a.pairable,
                        degenerate: !a.expected_disagreement_defined,
                        reliable: a.value >= threshold,
                    }
                }
                Err(_) => CriterionAgreement {
                    criterion: c,
                    alpha: None,
                    pairable: 0,
                    degenerate: false,
                    reliable: false,
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, coder: &str, scores: &str) -> String {
        format!("{{\"comment_id\":\"{id}\",\"coder\":\"{coder}\",\"scores\":{scores}}}\n")
    }

    #[test]
    fn agreement_per_criterion() {
        let text = [
            line("a", "x", r#"{"fact":1,"question":0}"#),
            line("a", "y", r#"{"fact":1,"question":3}"#),
            line("b", "x", r#"{"fact":2,"question":0}"#),
            line("b", "y", r#"{"fact":2,"question":0}"#),
            line("c", "y", r#"{"fact":0,"question":null}"#),
        ]
        .concat();
        let anns = read_coder_annotations(text.as_bytes()).unwrap();
        let r = criterion_agreement(&anns, ALPHA_THRESHOLD);
        assert_eq!(r.len(), 20);
        let fact = &r[Criterion::Fact.index()];
        assert_eq!(fact.alpha, Some(1.0));
        assert_eq!(fact.pairable, 4);
        assert!(fact.reliable && !fact.degenerate);
        let q = &r[Criterion::Question.index()];
        assert!(q.alpha.unwrap() < ALPHA_THRESHOLD);
        assert!(!q.reliable);
        let story = &r[Criterion::Storytelling.index()];
        assert_eq!(story.alpha, None);
    }

    #[test]
    fn rejects_bad_records() {
        for bad in [
            line("a", "x", r#"{"fact":4}"#),
            line("a", "x", r#"{"facts":1}"#),
            line("a", "x", "{}") + &line("a", "x", "{}"),
        ] {
            assert!(read_coder_annotations(bad.as_bytes()).is_err(), "{bad}");
        }
    }
}
