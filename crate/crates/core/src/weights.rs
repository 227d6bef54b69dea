//! Correlation weights: fitting from paired expert/crowd annotations, the
//! shipped default table, analytic score bounds and the TSV file format.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::corpus::PairedCorpus;
use crate::criterion::{Criterion, CriterionMap, DEFAULT_MAX_LEVEL};
use crate::fmt::format_g17;

/// Provenance string of [`default_weights`].
pub const DEFAULT_PROVENANCE: &str = "published AQuA correlation weights";

/// Weights fitted on the 1,742-comment paired expert/crowd corpus.
const PUBLISHED_WEIGHTS: [f64; 20] = [
    0.20908452,  // relevance
    0.18285757,  // fact
    -0.11069402, // opinion
    0.29000763,  // justification
    0.39535126,  // solution_proposals
    0.14655912,  // additional_knowledge
    -0.07331445, // question
    -0.03768367, // referencing_users
    0.07019062,  // referencing_medium
    -0.02847408, // referencing_contents
    0.21126469,  // referencing_personal
    -0.02674237, // referencing_format
    0.01482095,  // polite_address
    0.00732909,  // respect
    -0.01900971, // screaming
    -0.04995486, // vulgar
    -0.05884586, // insult
    -0.15170863, // sarcasm
    0.02934227,  // discrimination
    0.10628146,  // storytelling
];

#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: unknown criterion `{name}`")]
    UnknownCriterion { line: usize, name: String },
    #[error("line {line}: criterion {criterion} listed twice")]
    DuplicateCriterion { line: usize, criterion: Criterion },
    #[error("no weight for {0}")]
    MissingCriterion(Criterion),
    #[error("weight {value} for {criterion} is outside [-1, 1]")]
    WeightOutOfRange { criterion: Criterion, value: f64 },
    #[error("need at least 2 paired comments to fit weights, got {0}")]
    TooFewSamples(usize),
}

pub type Result<T, E = WeightsError> = std::result::Result<T, E>;

/// One finite weight in `[-1, 1]` per criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    weights: CriterionMap<f64>,
    n_samples: usize,
    provenance: String,
}

impl WeightTable {
    pub fn new(weights: CriterionMap<f64>, n_samples: usize, provenance: impl Into<String>) -> Result<Self> {
        for (criterion, &value) in weights.iter() {
            if !value.is_finite() || !(-1.0..=1.0).contains(&value) {
                return Err(WeightsError::WeightOutOfRange { criterion, value });
            }
        }
        Ok(WeightTable {
            weights,
            n_samples,
            provenance: provenance.into(),
        })
    }

    pub fn weights(&self) -> &CriterionMap<f64> {
        &self.weights
    }

    pub fn weight(&self, c: Criterion) -> f64 {
        self.weights[c]
    }

    /// Number of paired comments the weights were fitted on; 0 for shipped tables.
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }
}

/// The published correlation weights.
pub fn default_weights() -> WeightTable {
    WeightTable::new(
        CriterionMap::from_array(PUBLISHED_WEIGHTS),
        0,
        DEFAULT_PROVENANCE,
    )
    .expect("published weights are within [-1, 1]")
}

/// Analytic extremes of the raw score for a weight table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreBounds {
    pub s_min: f64,
    pub s_max: f64,
}

impl ScoreBounds {
    pub fn span(&self) -> f64 {
        self.s_max - self.s_min
    }
}

/// `s_max` sets every positively weighted criterion to `max_level` and the rest
/// to 0; `s_min` does the opposite. Zero weights contribute to neither.
pub fn compute_bounds(table: &WeightTable, max_level: u8) -> ScoreBounds {
    let level = f64::from(max_level);
    let mut s_min = 0.0;
    let mut s_max = 0.0;
    for (_, &w) in table.weights.iter() {
        if w >= 0.0 {
            s_max += level * w;
        }
        if w <= 0.0 {
            s_min += level * w;
        }
    }
    ScoreBounds { s_min, s_max }
}

/// [`compute_bounds`] on the four-point scale.
pub fn default_bounds(table: &WeightTable) -> ScoreBounds {
    compute_bounds(table, DEFAULT_MAX_LEVEL)
}

/// Pearson correlation of two integer series, or `None` when either is constant.
///
/// Deviations are taken from the mean in `n`-scaled integer arithmetic, so the
/// centred sums are exact and the only rounding happens in the final division.
pub fn pearson(xs: &[i64], ys: &[i64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "series lengths differ");
    let n = xs.len() as i128;
    if n < 2 {
        return None;
    }
    let sum_x: i128 = xs.iter().map(|&x| x as i128).sum();
    let sum_y: i128 = ys.iter().map(|&y| y as i128).sum();
    let (mut sxy, mut sxx, mut syy) = (0i128, 0i128, 0i128);
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = n * x as i128 - sum_x;
        let dy = n * y as i128 - sum_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0 || syy == 0 {
        return None;
    }
    let r = sxy as f64 / ((sxx as f64).sqrt() * (syy as f64).sqrt());
    Some(r.clamp(-1.0, 1.0))
}

/// A fitted table plus the criteria whose correlation was undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFit {
    pub table: WeightTable,
    /// Criteria with a constant expert column (or all of them, when the crowd
    /// labels are constant). Their weight is 0.
    pub zero_variance: Vec<Criterion>,
}

/// Fits one weight per criterion as the correlation between its expert
/// scores and the binary crowd label over all samples.
pub fn fit_weights_from_samples<'a, I>(samples: I, provenance: impl Into<String>) -> Result<WeightFit>
where
    I: IntoIterator<Item = (&'a CriterionMap<u8>, bool)>,
{
    let mut columns: Vec<Vec<i64>> = vec![Vec::new(); Criterion::ALL.len()];
    let mut crowd: Vec<i64> = Vec::new();
    for (scores, label) in samples {
        for (c, &v) in scores.iter() {
            columns[c.index()].push(i64::from(v));
        }
        crowd.push(i64::from(label));
    }
    if crowd.len() < 2 {
        return Err(WeightsError::TooFewSamples(crowd.len()));
    }

    let mut zero_variance = Vec::new();
    let weights = CriterionMap::from_fn(|c| match pearson(&columns[c.index()], &crowd) {
        Some(r) => r,
        None => {
            zero_variance.push(c);
            0.0
        }
    });
    if !zero_variance.is_empty() {
        log::warn!(
            "zero variance, weight set to 0 for: {}",
            zero_variance
                .iter()
                .map(|c| c.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    Ok(WeightFit {
        table: WeightTable::new(weights, crowd.len(), provenance)?,
        zero_variance,
    })
}

/// Fits weights on every paired comment of `corpus`.
pub fn fit_weights(corpus: &PairedCorpus) -> Result<WeightFit> {
    let provenance = format!("fitted on {} paired comments", corpus.len());
    fit_weights_from_samples(
        corpus.samples().map(|(a, c)| (&a.scores, c.label)),
        provenance,
    )
}

// ---- weights.tsv ------------------------------------------------------------

const HEADER: &str = "criterion\tweight";

/// Renders a table as `weights.tsv`.
pub fn to_tsv(table: &WeightTable) -> String {
    let provenance = table.provenance.replace(['\n', '\r'], " ");
    let mut out = format!(
        "# provenance: {}\n# n_samples: {}\n{}\n",
        provenance, table.n_samples, HEADER
    );
    for (c, &w) in table.weights.iter() {
        out.push_str(c.as_str());
        out.push('\t');
        out.push_str(&format_g17(w).expect("weights are finite"));
        out.push('\n');
    }
    out
}

/// Parses `weights.tsv`.
pub fn from_tsv(text: &str) -> Result<WeightTable> {
    let parse_err = |line: usize, reason: String| WeightsError::Parse { line, reason };
    let mut provenance = String::new();
    let mut n_samples = 0usize;
    let mut saw_header = false;
    let mut weights: CriterionMap<Option<f64>> = CriterionMap::filled(None);

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(meta) = raw.strip_prefix('#') {
            if let Some((key, value)) = meta.split_once(':') {
                match key.trim() {
                    "provenance" => provenance = value.trim().to_string(),
                    "n_samples" => {
                        n_samples = value.trim().parse().map_err(|_| {
                            parse_err(line, format!("bad n_samples `{}`", value.trim()))
                        })?
                    }
                    _ => {}
                }
            }
            continue;
        }
        if !saw_header {
            if raw != HEADER {
                return Err(parse_err(line, format!("expected header `criterion<TAB>weight`, got `{raw}`")));
            }
            saw_header = true;
            continue;
        }
        let (name, value) = raw
            .split_once('\t')
            .ok_or_else(|| parse_err(line, "expected two tab-separated fields".into()))?;
        let criterion: Criterion = name.parse().map_err(|_| WeightsError::UnknownCriterion {
            line,
            name: name.to_string(),
        })?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad weight `{value}`")))?;
        if weights[criterion].replace(value).is_some() {
            return Err(WeightsError::DuplicateCriterion { line, criterion });
        }
    }
    if !saw_header {
        return Err(parse_err(0, "missing header line".into()));
    }
    if let Some((c, _)) = weights.iter().find(|(_, w)| w.is_none()) {
        return Err(WeightsError::MissingCriterion(c));
    }
    WeightTable::new(weights.map(|_, w| w.expect("checked")), n_samples, provenance)
}

pub fn save_weights(table: &WeightTable, path: &Path) -> Result<()> {
    let io = |source| WeightsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(to_tsv(table).as_bytes()).map_err(io)
}

pub fn load_weights(path: &Path) -> Result<WeightTable> {
    let text = fs::read_to_string(path).map_err(|source| WeightsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_tsv(&text)
}
