use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use aqua_core::corpus::{self, Comment, Format, SplitFractions};
use aqua_core::eval::{self, GoldLabels, Grid};
use aqua_core::predict::{
    self, ConstantProvider, FileProvider, KeywordMockProvider, KeywordRule, PredictionProvider,
    RemoteEndpointConfig, RemoteProvider,
};
use aqua_core::score::{self, AquaScore};
use aqua_core::weights::{self, WeightTable};
use aqua_core::{Criterion, CriterionMap, PredictionVector};

use crate::{
    AgreementArgs, EvaluateArgs, FitWeightsArgs, OutputFormat, RankArgs, ReportLengthArgs,
    ScoreArgs, SplitArgs, WeightSource, DEFAULT_SEED,
};

/// Flag combinations clap cannot express; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

/// File when given, stdout otherwise.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_comments(path: &Path) -> Result<Vec<Comment>> {
    corpus::load_comments(path, Format::from_path(path))
        .with_context(|| format!("loading comments from {}", path.display()))
}

fn load_scores(path: &Path) -> Result<Vec<AquaScore>> {
    score::read_scores(open(path)?).with_context(|| format!("loading scores from {}", path.display()))
}

fn load_predictions(path: &Path) -> Result<Vec<PredictionVector>> {
    predict::load_predictions(path)
        .with_context(|| format!("loading predictions from {}", path.display()))
}

fn print_report<T: Serialize + std::fmt::Display>(report: &T, format: OutputFormat) -> Result<()> {
    let mut out = io::stdout().lock();
    match format {
        OutputFormat::Text => writeln!(out, "{report}")?,
        OutputFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(report)?)?,
    }
    Ok(())
}

pub fn fit_weights(a: &FitWeightsArgs) -> Result<()> {
    let expert = corpus::load_expert_annotations(&a.expert, Format::from_path(&a.expert))
        .with_context(|| format!("loading expert annotations from {}", a.expert.display()))?;
    for r in &expert.rejected {
        log::info!("{}: line {}: {}", a.expert.display(), r.line, r.error);
    }
    if expert.rejected_count() > 0 {
        eprintln!(
            "{}: skipped {} incomplete or out-of-range rows",
            a.expert.display(),
            expert.rejected_count()
        );
    }
    let crowd = corpus::load_crowd_labels(&a.crowd, Format::from_path(&a.crowd))
        .with_context(|| format!("loading crowd labels from {}", a.crowd.display()))?;
    let comments = match &a.comments {
        Some(p) => load_comments(p)?,
        None => Vec::new(),
    };
    let pairing = corpus::pair_corpus(&comments, &expert.annotations, &crowd).with_context(|| {
        format!(
            "pairing {} with {}",
            a.expert.display(),
            a.crowd.display()
        )
    })?;
    if !pairing.dropped_expert.is_empty() || !pairing.dropped_crowd.is_empty() {
        eprintln!(
            "dropped {} expert-only and {} crowd-only ids",
            pairing.dropped_expert.len(),
            pairing.dropped_crowd.len()
        );
    }
    if a.comments.is_some() && !pairing.missing_text.is_empty() {
        eprintln!("{} paired ids have no comment text", pairing.missing_text.len());
    }

    let fit = weights::fit_weights(&pairing.corpus)?;
    weights::save_weights(&fit.table, &a.output)
        .with_context(|| format!("writing {}", a.output.display()))?;

    let mut rows: Vec<(Criterion, f64)> = fit.table.weights().iter().map(|(c, w)| (c, *w)).collect();
    rows.sort_by(|x, y| y.1.abs().total_cmp(&x.1.abs()).then(x.0.cmp(&y.0)));
    let mut out = io::stdout().lock();
    writeln!(out, "{} ({} paired comments)", fit.table.provenance(), fit.table.n_samples())?;
    for (c, w) in rows {
        let flag = if fit.zero_variance.contains(&c) {
            "  (zero variance)"
        } else {
            ""
        };
        writeln!(out, "{:<22} {:+.8}{flag}", c.as_str(), w)?;
    }
    Ok(())
}

fn resolve_weights(src: &WeightSource) -> Result<WeightTable> {
    let table = match &src.weights {
        Some(p) => weights::load_weights(p).with_context(|| format!("loading {}", p.display()))?,
        None => weights::default_weights(),
    };
    match table.n_samples() {
        0 => eprintln!("weights: {}", table.provenance()),
        n => eprintln!("weights: {} (n_samples {n})", table.provenance()),
    }
    Ok(table)
}

fn mock_provider(rules: &[String]) -> Result<Box<dyn PredictionProvider>> {
    if rules.is_empty() {
        return Ok(Box::new(ConstantProvider::zeros()));
    }
    let rules = rules
        .iter()
        .map(|r| r.parse::<KeywordRule>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(e.to_string()))?;
    Ok(Box::new(KeywordMockProvider::new(CriterionMap::filled(0), rules)?))
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    let table = resolve_weights(&a.weights)?;

    let vectors = match (&a.predictions, a.mock, &a.endpoint, &a.comments) {
        (Some(p), _, _, None) => {
            let vs = load_predictions(p)?;
            // constructing the provider range-checks and deduplicates
            FileProvider::new(vs.clone()).with_context(|| format!("in {}", p.display()))?;
            vs
        }
        (Some(p), _, _, Some(c)) => {
            let provider = FileProvider::open(p).with_context(|| format!("loading {}", p.display()))?;
            provider.predict(&load_comments(c)?)?
        }
        (None, false, None, _) => {
            return Err(usage(
                "one of --predictions, --mock or --endpoint (or AQUA_ENDPOINT) is required",
            ));
        }
        (None, _, _, None) => {
            return Err(usage("--comments is required with --mock or --endpoint"));
        }
        (None, true, _, Some(c)) => mock_provider(&a.mock_rules)?.predict(&load_comments(c)?)?,
        (None, false, Some(url), Some(c)) => {
            let cfg = RemoteEndpointConfig {
                base_url: url.clone(),
                timeout: Duration::from_secs(a.timeout_secs),
                max_batch: a.max_batch,
                max_in_flight: a.max_in_flight,
                retries: a.retries,
                ..RemoteEndpointConfig::default()
            };
            let provider = RemoteProvider::connect(cfg).with_context(|| format!("connecting to {url}"))?;
            provider.predict(&load_comments(c)?)?
        }
    };

    let scores = score::score_batch(&vectors, &table)?;
    let mut out = sink(a.output.as_deref())?;
    score::write_scores(&mut out, &scores)?;
    out.flush()?;
    if let Some(p) = &a.output {
        eprintln!("wrote {} scores to {}", scores.len(), p.display());
    }
    Ok(())
}

/// Fails when either side has ids the other lacks.
fn check_same_ids(left: &[&str], left_name: &str, right: &[&str], right_name: &str) -> Result<()> {
    for (a, a_name, b, b_name) in [(left, left_name, right, right_name), (right, right_name, left, left_name)] {
        let present: HashSet<&str> = b.iter().copied().collect();
        let missing: Vec<String> = a
            .iter()
            .filter(|id| !present.contains(*id))
            .map(|id| id.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(eval::EvalError::JoinFailure {
                left: a_name.to_string(),
                right: b_name.to_string(),
                missing,
            }
            .into());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ToxicityReport {
    items: usize,
    weighted_f1: Vec<(Criterion, f64)>,
}

impl std::fmt::Display for ToxicityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:<16} weighted F1 ({} items)", "criterion", self.items)?;
        for (c, v) in &self.weighted_f1 {
            write!(f, "\n{:<16} {:.4}", c.as_str(), v)?;
        }
        Ok(())
    }
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let labels = eval::load_labels(&a.labels).with_context(|| format!("loading {}", a.labels.display()))?;
    if labels.is_empty() {
        bail!("{} contains no labels", a.labels.display());
    }
    let json = match labels {
        GoldLabels::Binary(gold) => {
            let Some(scores_path) = &a.scores else {
                return Err(usage("--scores is required for binary labels"));
            };
            let scores = load_scores(scores_path)?;
            let score_ids: Vec<&str> = scores.iter().map(|s| s.comment_id.as_str()).collect();
            let gold_ids: Vec<&str> = gold.iter().map(|g| g.0.as_str()).collect();
            check_same_ids(&score_ids, "scores", &gold_ids, "labels")?;
            let by_id: HashMap<&str, bool> =
                gold.iter().map(|(id, l)| (id.as_str(), *l)).collect();
            let values: Vec<f64> = scores.iter().map(|s| s.normalized).collect();
            let gold: Vec<bool> = scores.iter().map(|s| by_id[s.comment_id.as_str()]).collect();
            let report = if a.tune {
                let grid: Grid = a.grid.parse().map_err(|e: eval::EvalError| usage(e.to_string()))?;
                eval::evaluate_tuned(&values, &gold, &grid)?
            } else {
                eval::evaluate_threshold(&values, &gold, a.threshold)?
            };
            print_report(&report, a.format)?;
            serde_json::to_string_pretty(&report)?
        }
        GoldLabels::Toxicity(gold) => {
            let Some(pred_path) = &a.predictions else {
                return Err(usage("--predictions is required for toxicity labels"));
            };
            let criteria = a
                .criteria
                .iter()
                .map(|c| c.parse::<Criterion>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| usage(e.to_string()))?;
            let preds = load_predictions(pred_path)?;
            let pred_ids: Vec<&str> = preds.iter().map(|p| p.comment_id.as_str()).collect();
            let gold_ids: Vec<&str> = gold.iter().map(|g| g.0.as_str()).collect();
            check_same_ids(&pred_ids, "predictions", &gold_ids, "labels")?;
            let by_id: HashMap<&str, u8> =
                gold.iter().map(|(id, l)| (id.as_str(), *l)).collect();
            let gold: Vec<u8> = preds.iter().map(|p| by_id[p.comment_id.as_str()]).collect();
            let per = eval::toxicity_eval(&preds, &gold, &criteria)?;
            let report = ToxicityReport {
                items: gold.len(),
                weighted_f1: criteria.iter().map(|c| (*c, per[c])).collect(),
            };
            print_report(&report, a.format)?;
            serde_json::to_string_pretty(&report)?
        }
    };
    if let Some(p) = &a.output {
        fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

pub fn rank(a: &RankArgs) -> Result<()> {
    let scores = load_scores(&a.scores)?;
    let preds = load_predictions(&a.predictions)?;
    if a.top == 0 && a.bottom == 0 {
        return Err(usage("--top or --bottom must be at least 1"));
    }
    let report = eval::rank_report_split(&scores, &preds, a.top, a.bottom)?;
    print_report(&report, a.format)
}

pub fn report_length(a: &ReportLengthArgs) -> Result<()> {
    let scores = load_scores(&a.scores)?;
    let comments = load_comments(&a.comments)?;
    let report = eval::length_analysis(&scores, &comments)?;
    let mut out = sink(a.output.as_deref())?;
    eval::write_length_csv(&mut out, &report.points)?;
    out.flush()?;
    if a.output.is_some() {
        print_report(&report, a.format)?;
    }
    Ok(())
}

pub fn split(a: &SplitArgs) -> Result<()> {
    let fractions = SplitFractions::new(a.train, a.val, a.test).map_err(|e| usage(e.to_string()))?;
    let comments = load_comments(&a.comments)?;
    let format = Format::from_path(&a.comments);
    let ext = match format {
        Format::Csv => "csv",
        Format::Jsonl => "jsonl",
    };
    let parts = corpus::split_corpus(&comments, fractions, a.seed)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let note = if a.seed == DEFAULT_SEED { " (default)" } else { "" };
    println!("seed {}{note}", a.seed);
    for (name, items) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
        let path: PathBuf = a.out_dir.join(format!("{name}.{ext}"));
        corpus::save_comments(&path, items, format).with_context(|| format!("writing {}", path.display()))?;
        println!("{name:<5} {:>7}  {}", items.len(), path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct AgreementReport {
    threshold: f64,
    criteria: Vec<eval::CriterionAgreement>,
}

impl std::fmt::Display for AgreementReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:<22} {:>7}  {:>8}", "criterion", "alpha", "pairable")?;
        for c in &self.criteria {
            let alpha = c.alpha.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            let mark = match (c.alpha, c.reliable, c.degenerate) {
                (None, _, _) => "  insufficient data",
                (_, _, true) => "  single value only",
                (_, false, _) => "  below threshold",
                _ => "",
            };
            write!(f, "\n{:<22} {:>7}  {:>8}{mark}", c.criterion.as_str(), alpha, c.pairable)?;
        }
        Ok(())
    }
}

pub fn agreement(a: &AgreementArgs) -> Result<()> {
    let anns = eval::read_coder_annotations(open(&a.annotations)?)
        .with_context(|| format!("loading {}", a.annotations.display()))?;
    let report = AgreementReport {
        threshold: a.threshold,
        criteria: eval::criterion_agreement(&anns, a.threshold),
    };
    print_report(&report, a.format)
}
