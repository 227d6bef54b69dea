//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use aqua_core::eval::{
    f1_scores, krippendorff_alpha, tune_threshold, Grid, ReliabilityMatrix, TIE_TOLERANCE,
};
use aqua_core::weights::{compute_bounds, fit_weights_from_samples, from_tsv, to_tsv, ScoreBounds};
use aqua_core::{
    aqua_score, corpus, default_weights, predict, score, Criterion, CriterionMap, PredictionVector,
    WeightTable, DEFAULT_MAX_LEVEL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Best of several runs, so a cold cache or a busy machine does not decide.
fn fastest<T>(runs: usize, mut f: impl FnMut() -> T) -> (T, Duration) {
    let mut best = Duration::MAX;
    let mut out = None;
    for _ in 0..runs {
        let t = Instant::now();
        let v = f();
        best = best.min(t.elapsed());
        out = Some(v);
    }
    (out.unwrap(), best)
}

fn vector(levels: CriterionMap<u8>) -> PredictionVector {
    PredictionVector::new("v", levels)
}

fn random_levels(rng: &mut ChaCha8Rng) -> CriterionMap<u8> {
    CriterionMap::from_fn(|_| rng.random_range(0..=DEFAULT_MAX_LEVEL))
}

fn bounds_reproduction() -> Outcome {
    let w = default_weights();
    let (b, took) = fastest(20, || compute_bounds(&w, DEFAULT_MAX_LEVEL));
    let ScoreBounds { s_min, s_max } = b;
    ensure(format!("{s_max:.4}") == "4.9893", || format!("s_max = {s_max}"))?;
    ensure(format!("{s_min:.4}") == "-1.6693", || format!("s_min = {s_min}"))?;
    ensure(took < Duration::from_millis(1), || format!("took {took:?}"))?;
    Ok(format!("s_max={s_max:.8} s_min={s_min:.8} in {took:?}"))
}

fn worked_example() -> Outcome {
    let w = default_weights();
    let mut levels = CriterionMap::filled(0u8);
    levels[Criterion::Justification] = 3;
    levels[Criterion::Fact] = 2;
    levels[Criterion::ReferencingMedium] = 2;
    let p = vector(levels);
    let (s, took) = fastest(20, || aqua_score(&p, &w));
    let s = s.map_err(|e| e.to_string())?;
    ensure((s.normalized - 2.2868).abs() <= 0.005, || format!("aqua = {}", s.normalized))?;
    ensure(took < Duration::from_millis(1), || format!("took {took:?}"))?;
    Ok(format!("aqua={:.4} in {took:?}", s.normalized))
}

fn range_and_attainment() -> Outcome {
    let w = default_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws = 100_000;
    for _ in 0..draws {
        let p = vector(random_levels(&mut rng));
        let s = aqua_score(&p, &w).map_err(|e| e.to_string())?.normalized;
        ensure((0.0..=5.0).contains(&s), || format!("{s} outside [0,5] for {:?}", p.predictions))?;
    }
    let top = vector(CriterionMap::from_fn(|c| if w.weight(c) > 0.0 { DEFAULT_MAX_LEVEL } else { 0 }));
    let bottom = vector(CriterionMap::from_fn(|c| if w.weight(c) < 0.0 { DEFAULT_MAX_LEVEL } else { 0 }));
    let hi = aqua_score(&top, &w).map_err(|e| e.to_string())?.normalized;
    let lo = aqua_score(&bottom, &w).map_err(|e| e.to_string())?.normalized;
    ensure(hi == 5.0, || format!("maximising vector gives {hi}"))?;
    ensure(lo == 0.0, || format!("minimising vector gives {lo}"))?;
    Ok(format!("{draws} draws in [0,5]; extremes {hi} and {lo}"))
}

fn monotonicity() -> Outcome {
    let w = default_weights();
    let b = compute_bounds(&w, DEFAULT_MAX_LEVEL);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bases = 200;
    let mut checked = 0;
    for c in Criterion::ALL {
        let expected = 5.0 * w.weight(c) / (b.s_max - b.s_min);
        for _ in 0..bases {
            let mut levels = random_levels(&mut rng);
            levels[c] = rng.random_range(0..DEFAULT_MAX_LEVEL);
            let before = aqua_score(&vector(levels), &w).map_err(|e| e.to_string())?.normalized;
            levels[c] += 1;
            let after = aqua_score(&vector(levels), &w).map_err(|e| e.to_string())?.normalized;
            let step = after - before;
            ensure((step - expected).abs() <= 1e-9, || format!("{c}: step {step}, expected {expected}"))?;
            ensure(step.signum() == w.weight(c).signum() || w.weight(c) == 0.0, || {
                format!("{c}: step {step} against weight {}", w.weight(c))
            })?;
            checked += 1;
        }
    }
    Ok(format!("{checked} increments across 20 criteria"))
}

/// Textbook two-pass Pearson in floating point.
fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx.sqrt() * syy.sqrt())
    }
}

fn correlation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let corpora = 1000;
    let mut worst: f64 = 0.0;
    for _ in 0..corpora {
        let n = rng.random_range(2..=50);
        let rows: Vec<(CriterionMap<u8>, bool)> = (0..n)
            .map(|_| {
                // sparse columns too, so constant columns come up
                let dense = rng.random_bool(0.7);
                let levels = CriterionMap::from_fn(|_| {
                    if dense || rng.random_bool(0.1) {
                        rng.random_range(0..=DEFAULT_MAX_LEVEL)
                    } else {
                        0
                    }
                });
                (levels, rng.random_bool(0.4))
            })
            .collect();
        let fit = fit_weights_from_samples(rows.iter().map(|(l, c)| (l, *c)), "oracle")
            .map_err(|e| e.to_string())?;
        let crowd: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.1))).collect();
        for c in Criterion::ALL {
            let col: Vec<f64> = rows.iter().map(|r| f64::from(r.0[c])).collect();
            let want = pearson_oracle(&col, &crowd);
            let got = fit.table.weight(c);
            worst = worst.max((got - want).abs());
            ensure((got - want).abs() <= 1e-9, || format!("{c}: {got} vs oracle {want} (n={n})"))?;
        }
        let flipped = fit_weights_from_samples(rows.iter().map(|(l, c)| (l, !*c)), "oracle")
            .map_err(|e| e.to_string())?;
        for c in Criterion::ALL {
            let (a, b) = (fit.table.weight(c), flipped.table.weight(c));
            ensure(a == -b, || format!("{c}: flip gives {b}, expected {}", -a))?;
        }
    }
    Ok(format!("{corpora} corpora, max deviation {worst:.1e}, flips exact"))
}

/// Alpha from an explicit coincidence matrix over all ordered coder pairs.
fn alpha_oracle(rows: &[Vec<Option<u8>>]) -> f64 {
    let mut o: BTreeMap<(u8, u8), f64> = BTreeMap::new();
    for row in rows {
        let vals: Vec<u8> = row.iter().flatten().copied().collect();
        let m = vals.len();
        if m < 2 {
            continue;
        }
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    *o.entry((vals[i], vals[j])).or_default() += 1.0 / (m - 1) as f64;
                }
            }
        }
    }
    let mut marg: BTreeMap<u8, f64> = BTreeMap::new();
    for (&(c, _), v) in &o {
        *marg.entry(c).or_default() += v;
    }
    let n: f64 = marg.values().sum();
    let d_o: f64 = o.iter().filter(|((c, k), _)| c != k).map(|(_, v)| v).sum::<f64>() / n;
    let mut e = 0.0;
    for (c, nc) in &marg {
        for (k, nk) in &marg {
            if c != k {
                e += nc * nk;
            }
        }
    }
    let d_e = e / (n * (n - 1.0));
    if d_e == 0.0 {
        1.0
    } else {
        1.0 - d_o / d_e
    }
}

fn krippendorff_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tested = 0;
    let mut worst: f64 = 0.0;
    while tested < 1000 {
        let coders = rng.random_range(2..=5);
        let items = rng.random_range(1..=20);
        let labels = rng.random_range(1..=4u8);
        let missing = rng.random_range(0.0..0.5);
        let rows: Vec<Vec<Option<u8>>> = (0..items)
            .map(|_| {
                (0..coders)
                    .map(|_| (!rng.random_bool(missing)).then(|| rng.random_range(0..labels)))
                    .collect()
            })
            .collect();
        let Ok(m) = ReliabilityMatrix::new(rows.clone()) else {
            continue;
        };
        let got = krippendorff_alpha(&m).value;
        let want = alpha_oracle(&rows);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, || format!("{got} vs oracle {want} on {rows:?}"))?;
        tested += 1;
    }
    let perfect: Vec<Vec<Option<u8>>> = (0..10u8).map(|i| vec![Some(i % 4); 3]).collect();
    let a = krippendorff_alpha(&ReliabilityMatrix::new(perfect).map_err(|e| e.to_string())?).value;
    ensure(a == 1.0, || format!("perfect agreement gives {a}"))?;
    Ok(format!("{tested} matrices, max deviation {worst:.1e}, perfect agreement 1.0"))
}

/// Per-class F1 as the harmonic mean of precision and recall, from a full
/// confusion matrix.
fn f1_oracle(pred: &[u8], gold: &[u8]) -> (BTreeMap<u8, f64>, f64, f64) {
    let mut cm: BTreeMap<(u8, u8), usize> = BTreeMap::new();
    for (p, g) in pred.iter().zip(gold) {
        *cm.entry((*g, *p)).or_default() += 1;
    }
    let classes: Vec<u8> = {
        let mut c: Vec<u8> = pred.iter().chain(gold).copied().collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let cell = |g: u8, p: u8| *cm.get(&(g, p)).unwrap_or(&0) as f64;
    let mut per = BTreeMap::new();
    let (mut macro_sum, mut macro_n, mut weighted) = (0.0, 0.0, 0.0);
    for &k in &classes {
        let tp = cell(k, k);
        let predicted: f64 = classes.iter().map(|&g| cell(g, k)).sum();
        let actual: f64 = classes.iter().map(|&p| cell(k, p)).sum();
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per.insert(k, f);
        if actual > 0.0 {
            macro_sum += f;
            macro_n += 1.0;
            weighted += f * actual;
        }
    }
    (per, macro_sum / macro_n, weighted / gold.len() as f64)
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let instances = 2000;
    for _ in 0..instances {
        let n = rng.random_range(1..=60);
        let k = rng.random_range(1..=4u8);
        let gold: Vec<u8> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<u8> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let r = f1_scores(&pred, &gold).map_err(|e| e.to_string())?;
        let (per, macro_f1, weighted) = f1_oracle(&pred, &gold);
        for (c, want) in &per {
            let got = r.per_class.get(c).map(|m| m.f1);
            ensure(got.is_some_and(|g| (g - want).abs() <= 1e-9), || {
                format!("class {c}: {got:?} vs oracle {want}")
            })?;
        }
        ensure((r.macro_f1 - macro_f1).abs() <= 1e-9, || format!("macro {} vs {macro_f1}", r.macro_f1))?;
        ensure((r.weighted_f1 - weighted).abs() <= 1e-9, || format!("weighted {} vs {weighted}", r.weighted_f1))?;
    }

    let grid = Grid::default();
    let points = grid.points();
    ensure(points.len() == 101, || format!("default grid has {} points", points.len()))?;
    let tunings = 300;
    for _ in 0..tunings {
        let n = rng.random_range(1..=80);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.3) {
                    // exactly on a grid point
                    f64::from(rng.random_range(0..=100u32)) * 0.05
                } else {
                    rng.random_range(0.0..5.0)
                }
            })
            .collect();
        let gold: Vec<bool> = scores
            .iter()
            .map(|s| rng.random_bool(if *s > 2.5 { 0.8 } else { 0.2 }))
            .collect();
        let gold_u8: Vec<u8> = gold.iter().map(|&g| u8::from(g)).collect();
        let mut best: Option<(f64, f64)> = None;
        for &t in &points {
            let pred: Vec<u8> = scores.iter().map(|&s| u8::from(s >= t)).collect();
            let f = f1_oracle(&pred, &gold_u8).2;
            if best.is_none_or(|(_, bf)| f > bf + TIE_TOLERANCE) {
                best = Some((t, f));
            }
        }
        let (want_t, want_f) = best.unwrap();
        let got = tune_threshold(&scores, &gold, &grid).map_err(|e| e.to_string())?;
        ensure(got.threshold == want_t && (got.weighted_f1 - want_f).abs() <= 1e-9, || {
            format!("tuned {:?}, grid scan ({want_t}, {want_f})", got)
        })?;
    }
    Ok(format!("{instances} F1 instances, {tunings} tuning scans"))
}

fn split_arithmetic() -> Outcome {
    let items: Vec<usize> = (0..13_069).collect();
    let s = corpus::split_corpus(&items, corpus::SplitFractions::DEFAULT, 13).map_err(|e| e.to_string())?;
    let sizes = (s.train.len(), s.val.len(), s.test.len());
    ensure(sizes == (8495, 1960, 2614), || format!("sizes {sizes:?}"))?;
    let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort_unstable();
    ensure(all == items, || "split is not a partition".into())?;
    Ok(format!("{} / {} / {}", sizes.0, sizes.1, sizes.2))
}

fn format_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let table = WeightTable::new(
        CriterionMap::from_fn(|_| rng.random_range(-1.0..=1.0)),
        1234,
        "fitted on 1234 paired comments",
    )
    .map_err(|e| e.to_string())?;
    for t in [table, default_weights()] {
        let first = to_tsv(&t);
        let second = to_tsv(&from_tsv(&first).map_err(|e| e.to_string())?);
        ensure(first == second, || format!("weights.tsv changed:\n{first}\n{second}"))?;
    }

    let vectors: Vec<PredictionVector> = (0..50)
        .map(|i| PredictionVector::new(format!("c{i}"), random_levels(&mut rng)))
        .collect();
    let mut first = Vec::new();
    predict::write_predictions(&mut first, &vectors).map_err(|e| e.to_string())?;
    let reread = predict::read_predictions(first.as_slice()).map_err(|e| e.to_string())?;
    let mut second = Vec::new();
    predict::write_predictions(&mut second, &reread).map_err(|e| e.to_string())?;
    ensure(first == second, || "predictions.jsonl changed".into())?;

    let w = default_weights();
    let scores = score::score_batch(&vectors, &w).map_err(|e| e.to_string())?;
    let mut first = Vec::new();
    score::write_scores(&mut first, &scores).map_err(|e| e.to_string())?;
    let reread = score::read_scores(first.as_slice()).map_err(|e| e.to_string())?;
    let mut second = Vec::new();
    score::write_scores(&mut second, &reread).map_err(|e| e.to_string())?;
    ensure(first == second, || "scores.jsonl changed".into())?;
    Ok("weights.tsv, predictions.jsonl, scores.jsonl stable".into())
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let comments: String = (0..25)
        .map(|i| format!("{{\"id\":\"n{i}\",\"text\":\"Kommentar Nummer {i}\"}}\n"))
        .collect();
    std::fs::write(dir.path().join("comments.jsonl"), comments).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for name in ["first.jsonl", "second.jsonl"] {
        let o = Command::new(env!("CARGO_BIN_EXE_aqua"))
            .args(["score", "--default-weights", "--mock", "--comments", "comments.jsonl", "-o", name])
            .current_dir(dir.path())
            .env_remove("AQUA_ENDPOINT")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
        outputs.push(std::fs::read(dir.path().join(name)).map_err(|e| e.to_string())?);
    }
    ensure(outputs[0] == outputs[1], || "runs differ".into())?;
    let text = String::from_utf8(outputs.swap_remove(0)).map_err(|e| e.to_string())?;
    let mut lines = 0;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let a = v["aqua"].as_f64().ok_or("aqua missing")?;
        ensure((a - 1.25349).abs() <= 1e-4, || line.to_string())?;
        lines += 1;
    }
    ensure(lines == 25, || format!("{lines} scores for 25 comments"))?;
    Ok(format!("{lines} comments at 1.25349, byte-identical twice"))
}

fn main() -> ExitCode {
    let criteria: [Check; 10] = [
        ("bounds reproduction", bounds_reproduction),
        ("worked example", worked_example),
        ("range and attainment", range_and_attainment),
        ("monotonicity", monotonicity),
        ("correlation oracle", correlation_oracle),
        ("krippendorff oracle", krippendorff_oracle),
        ("metric oracle", metric_oracle),
        ("split arithmetic", split_arithmetic),
        ("format round-trips", format_round_trips),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
