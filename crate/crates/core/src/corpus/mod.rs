//! Comments, expert and crowd annotations, and the corpus operations that
//! precede weight fitting: majority-vote aggregation, pairing and splitting.

mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::criterion::{
    level_map_from_entries, Criterion, CriterionMap, LevelMapError, DEFAULT_MAX_LEVEL,
};

pub use io::{
    load_comments, load_crowd_labels, load_expert_annotations, read_comments, read_crowd_labels,
    read_expert_annotations, save_comments, save_crowd_labels, save_expert_annotations,
    write_comments, write_crowd_labels, write_expert_annotations, ExpertLoad, Format, Rejection,
};

/// Language tag assumed when a record carries none.
pub const DEFAULT_LANGUAGE: &str = "de";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("write failed: {0}")]
    Write(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: empty id")]
    EmptyId { line: usize },
    #[error("line {line}: comment `{id}` has empty text")]
    EmptyText { line: usize, id: String },
    #[error("line {line}: unknown criterion `{name}`")]
    UnknownCriterion { line: usize, name: String },
    #[error("line {line}: `{comment_id}` scores {criterion}={value}, outside 0..={max}")]
    ScoreOutOfRange {
        line: usize,
        comment_id: String,
        criterion: Criterion,
        value: i64,
        max: u8,
    },
    #[error("line {line}: `{comment_id}` has no value for {criterion}")]
    MissingCriterion {
        line: usize,
        comment_id: String,
        criterion: Criterion,
    },
    #[error("`{comment_id}` has no crowd votes")]
    EmptyVotes { comment_id: String },
    #[error("`{comment_id}`: crowd vote {value} is not 0 or 1")]
    InvalidVote { comment_id: String, value: i64 },
    #[error("`{comment_id}`: label {value} is not 0 or 1")]
    InvalidLabel { comment_id: String, value: i64 },
    #[error("expert ({expert} ids) and crowd ({crowd} ids) annotations share no comment id")]
    EmptyIntersection { expert: usize, crowd: usize },
    #[error("paired corpus is inconsistent: {0}")]
    Unpaired(String),
    #[error("split fractions {0:?} must be positive and sum to 1")]
    BadFractions((f64, f64, f64)),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comment {
    pub id: String,
    pub text: String,
    /// ISO 639-1 tag.
    pub language: String,
    /// Free-form dataset name.
    pub source: String,
}

impl Comment {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Comment {
            id: id.into(),
            text: text.into(),
            language: DEFAULT_LANGUAGE.to_string(),
            source: String::new(),
        }
    }
}

/// Complete expert coding of one comment on the 0..=3 scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertAnnotation {
    pub comment_id: String,
    pub scores: CriterionMap<u8>,
}

impl ExpertAnnotation {
    /// Builds an annotation from loosely typed `(name, value)` pairs. A `None`
    /// value counts as missing; every criterion must have a value.
    pub fn from_entries<'a>(
        comment_id: &str,
        line: usize,
        entries: impl IntoIterator<Item = (&'a str, Option<i64>)>,
    ) -> Result<Self> {
        let scores = level_map_from_entries(entries, DEFAULT_MAX_LEVEL).map_err(|e| match e {
            LevelMapError::UnknownCriterion(name) => CorpusError::UnknownCriterion { line, name },
            LevelMapError::OutOfRange {
                criterion,
                value,
                max,
            } => CorpusError::ScoreOutOfRange {
                line,
                comment_id: comment_id.to_string(),
                criterion,
                value,
                max,
            },
            LevelMapError::Missing(criterion) => CorpusError::MissingCriterion {
                line,
                comment_id: comment_id.to_string(),
                criterion,
            },
        })?;
        Ok(ExpertAnnotation {
            comment_id: comment_id.to_string(),
            scores,
        })
    }
}

/// Raw binary judgments of several crowd workers on one comment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrowdVotes {
    pub comment_id: String,
    pub votes: Vec<u8>,
}

/// Aggregated binary deliberativeness label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrowdLabel {
    pub comment_id: String,
    pub label: bool,
}

/// Strict-majority aggregation. An even split resolves to `false`: a comment
/// not clearly judged enriching counts as non-deliberative.
pub fn majority_vote(votes: &CrowdVotes) -> Result<CrowdLabel> {
    if votes.votes.is_empty() {
        return Err(CorpusError::EmptyVotes {
            comment_id: votes.comment_id.clone(),
        });
    }
    let mut ones = 0usize;
    for &v in &votes.votes {
        match v {
            0 => {}
            1 => ones += 1,
            other => {
                return Err(CorpusError::InvalidVote {
                    comment_id: votes.comment_id.clone(),
                    value: other as i64,
                })
            }
        }
    }
    let zeros = votes.votes.len() - ones;
    Ok(CrowdLabel {
        comment_id: votes.comment_id.clone(),
        label: ones > zeros,
    })
}

/// Comments that carry both an expert annotation and a crowd label.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedCorpus {
    comments: Vec<Comment>,
    expert: BTreeMap<String, ExpertAnnotation>,
    crowd: BTreeMap<String, CrowdLabel>,
}

impl PairedCorpus {
    /// Fails unless `expert` and `crowd` cover exactly the same ids.
    pub fn new(
        comments: Vec<Comment>,
        expert: impl IntoIterator<Item = ExpertAnnotation>,
        crowd: impl IntoIterator<Item = CrowdLabel>,
    ) -> Result<Self> {
        let expert: BTreeMap<_, _> = expert
            .into_iter()
            .map(|a| (a.comment_id.clone(), a))
            .collect();
        let crowd: BTreeMap<_, _> = crowd
            .into_iter()
            .map(|c| (c.comment_id.clone(), c))
            .collect();
        if let Some(id) = expert.keys().find(|id| !crowd.contains_key(*id)) {
            return Err(CorpusError::Unpaired(format!("`{id}` has no crowd label")));
        }
        if let Some(id) = crowd.keys().find(|id| !expert.contains_key(*id)) {
            return Err(CorpusError::Unpaired(format!("`{id}` has no expert annotation")));
        }
        Ok(PairedCorpus {
            comments,
            expert,
            crowd,
        })
    }

    pub fn len(&self) -> usize {
        self.expert.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expert.is_empty()
    }

    pub fn comments(&self) -> &[Comment] {
        &self.comments
    }

    pub fn expert(&self) -> &BTreeMap<String, ExpertAnnotation> {
        &self.expert
    }

    pub fn crowd(&self) -> &BTreeMap<String, CrowdLabel> {
        &self.crowd
    }

    /// `(expert scores, crowd label)` per paired comment, ordered by id.
    pub fn samples(&self) -> impl Iterator<Item = (&ExpertAnnotation, &CrowdLabel)> + '_ {
        self.expert
            .iter()
            .map(move |(id, a)| (a, &self.crowd[id]))
    }
}

/// Result of [`pair_corpus`], with the ids that fell out on either side.
#[derive(Debug, Clone)]
pub struct Pairing {
    pub corpus: PairedCorpus,
    /// Expert-annotated ids without a crowd label.
    pub dropped_expert: Vec<String>,
    /// Crowd-labelled ids without an expert annotation.
    pub dropped_crowd: Vec<String>,
    /// Paired ids for which no comment text was supplied.
    pub missing_text: Vec<String>,
}

/// Intersects expert and crowd annotations on comment id.
pub fn pair_corpus(
    comments: &[Comment],
    expert: &[ExpertAnnotation],
    crowd: &[CrowdLabel],
) -> Result<Pairing> {
    let expert_ids: BTreeSet<&str> = expert.iter().map(|a| a.comment_id.as_str()).collect();
    let crowd_ids: BTreeSet<&str> = crowd.iter().map(|c| c.comment_id.as_str()).collect();
    let shared: BTreeSet<&str> = expert_ids.intersection(&crowd_ids).copied().collect();
    if shared.is_empty() {
        return Err(CorpusError::EmptyIntersection {
            expert: expert_ids.len(),
            crowd: crowd_ids.len(),
        });
    }
    let dropped_expert = expert_ids.difference(&shared).map(|s| s.to_string()).collect();
    let dropped_crowd = crowd_ids.difference(&shared).map(|s| s.to_string()).collect();

    let paired_comments: Vec<Comment> = comments
        .iter()
        .filter(|c| shared.contains(c.id.as_str()))
        .cloned()
        .collect();
    let with_text: BTreeSet<&str> = paired_comments.iter().map(|c| c.id.as_str()).collect();
    let missing_text = shared
        .iter()
        .filter(|id| !with_text.contains(*id))
        .map(|s| s.to_string())
        .collect();

    let corpus = PairedCorpus::new(
        paired_comments,
        expert
            .iter()
            .filter(|a| shared.contains(a.comment_id.as_str()))
            .cloned(),
        crowd
            .iter()
            .filter(|c| shared.contains(c.comment_id.as_str()))
            .cloned(),
    )?;
    Ok(Pairing {
        corpus,
        dropped_expert,
        dropped_crowd,
        missing_text,
    })
}

/// Train / validation / test proportions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub const DEFAULT: SplitFractions = SplitFractions {
        train: 0.65,
        val: 0.15,
        test: 0.20,
    };

    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let f = SplitFractions { train, val, test };
        let all = [train, val, test];
        let ok = all.iter().all(|x| x.is_finite() && *x > 0.0)
            && ((train + val + test) - 1.0).abs() <= 1e-9;
        if ok {
            Ok(f)
        } else {
            Err(CorpusError::BadFractions((train, val, test)))
        }
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Bucket sizes by largest-remainder apportionment of `n`. Each bucket gets the
/// floor of its exact share; leftover items go to the largest fractional
/// parts, ties favouring train, then val.
pub fn split_sizes(n: usize, fractions: SplitFractions) -> (usize, usize, usize) {
    let shares = [
        n as f64 * fractions.train,
        n as f64 * fractions.val,
        n as f64 * fractions.test,
    ];
    let mut sizes = shares.map(|s| s.floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for k in 0..n.saturating_sub(assigned) {
        sizes[order[k % 3]] += 1;
    }
    (sizes[0], sizes[1], sizes[2])
}

/// Seeded random partition into train / val / test. Items keep their input
/// order within each part.
pub fn split_corpus<T: Clone>(items: &[T], fractions: SplitFractions, seed: u64) -> Result<Split<T>> {
    let fractions = SplitFractions::new(fractions.train, fractions.val, fractions.test)?;
    let (n_train, n_val, _) = split_sizes(items.len(), fractions);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let take = |idx: &mut [usize]| -> Vec<T> {
        idx.sort_unstable();
        idx.iter().map(|&i| items[i].clone()).collect()
    };
    let (train_idx, rest) = order.split_at_mut(n_train);
    let (val_idx, test_idx) = rest.split_at_mut(n_val);
    Ok(Split {
        train: take(train_idx),
        val: take(val_idx),
        test: take(test_idx),
    })
}
