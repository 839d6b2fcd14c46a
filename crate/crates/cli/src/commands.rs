use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use enrich_core::eval::stats::{mean, std_dev};
use enrich_core::eval::{
    build_labelled_testset, coverage, mae, mann_whitney_u, sweep_from_coverage, write_summary_csv, write_sweeps_csv,
    LabelledTestSet,
};
use enrich_core::quality::class_mos;
use enrich_core::robustness::{interpret, perturbation_outcome, robustness_measure};
use enrich_core::shaper::simulate;
use enrich_core::{run, Approach, QualityConstants, RangeSet, RobustnessParams, RunRecord, ShaperConfig, TestInput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::spec::{check_epsilons, Experiment};
use crate::UsageError;

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| UsageError::new(format!("malformed vector component {s:?} in {text:?}")).into())
        })
        .collect()
}

/// Refuses to write into a non-empty directory unless forced.
fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() && !force {
        bail!(
            "{} already exists and is not empty; pass --force to overwrite",
            dir.display()
        );
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(out: &mut impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport {
    input: Vec<f64>,
    alloc: Vec<f64>,
    latency_ms: Vec<f64>,
    jitter_ms: Vec<f64>,
    loss_pct: Vec<f64>,
    mos: Vec<f64>,
    score: f64,
    good_class_count: usize,
    acceptable: bool,
}

pub fn simulate_cmd(
    config: &ShaperConfig,
    quality: &QualityConstants,
    params: &RobustnessParams,
    input: &str,
    seed: Option<u64>,
    out: &mut impl Write,
) -> Result<()> {
    let input = TestInput::new(parse_vector(input)?);
    if input.len() != config.n {
        return Err(UsageError::new(format!("expected {} components, got {}", config.n, input.len())).into());
    }
    let metrics = simulate(config, &input, seed)?;
    let mos = class_mos(&metrics, quality)?;
    let score = robustness_measure(&mos, params)?;
    let verdict = interpret(score, config.n, params.rb_threshold);
    write_json(
        out,
        &SimulateReport {
            input: input.tr,
            alloc: metrics.alloc,
            latency_ms: metrics.latency_ms,
            jitter_ms: metrics.jitter_ms,
            loss_pct: metrics.loss_pct,
            mos,
            score: score.0,
            good_class_count: verdict.good_class_count,
            acceptable: verdict.acceptable,
        },
    )
}

/// Runs `runs` seeds of one approach and writes their records and test CSVs
/// under `<out>/<approach>/`.
pub fn run_cmd(exp: &Experiment, approach: Approach, runs: usize, force: bool, out: &mut impl Write) -> Result<()> {
    if runs == 0 {
        return Err(UsageError::new("--runs must be at least 1").into());
    }
    let dir = exp.out.join(approach.to_string());
    prepare_dir(&dir, force)?;
    for k in 0..runs as u64 {
        let seed = exp.spec.seed + k;
        let params = exp.spec.run.clone().with_seed(seed);
        let record = run(approach, &exp.config, &exp.spec.quality, &params)?;
        let json = format!("run_{seed}.json");
        let tests = format!("tests_{seed}.csv");
        fs::write(dir.join(&json), record.to_json()? + "\n")?;
        let mut w = create(&dir.join(&tests))?;
        record.write_tests_csv(&mut w, None)?;
        w.flush()?;
        writeln!(
            out,
            "{approach} seed {seed}: {} tests, {} anchored variables -> {json}, {tests}",
            record.test_count(),
            record.final_ranges.ranges.len()
        )?;
    }
    Ok(())
}

fn testset_path(exp: &Experiment) -> PathBuf {
    exp.out.join(format!("testset_{}.csv", exp.spec.eval.testset_seed))
}

fn fresh_testset(exp: &Experiment) -> Result<LabelledTestSet> {
    let eval = &exp.spec.eval;
    let params = exp.spec.run.robustness_params(exp.config.n);
    Ok(build_labelled_testset(
        &exp.config,
        &exp.spec.quality,
        &params,
        eval.testset_size,
        eval.testset_seed,
    )?)
}

/// Loads the cached labelled set for the spec's seed, building it if absent.
fn labelled_testset(exp: &Experiment) -> Result<LabelledTestSet> {
    let path = testset_path(exp);
    if path.exists() {
        let set = LabelledTestSet::read_csv(File::open(&path)?, exp.spec.eval.testset_seed)
            .with_context(|| format!("reading {}", path.display()))?;
        if set.len() != exp.spec.eval.testset_size || set.tests.iter().any(|t| t.len() != exp.config.n) {
            bail!(
                "{} does not match the spec's test set; delete it to rebuild",
                path.display()
            );
        }
        return Ok(set);
    }
    let set = fresh_testset(exp)?;
    fs::create_dir_all(&exp.out)?;
    let mut w = create(&path)?;
    set.write_csv(&mut w)?;
    w.flush()?;
    Ok(set)
}

#[derive(Serialize)]
struct LabelReport {
    input: Vec<f64>,
    score: f64,
    perturbed_score: f64,
    label: String,
}

pub fn label_cmd(
    exp: &Experiment,
    input: Option<&str>,
    seed: Option<u64>,
    force: bool,
    out: &mut impl Write,
) -> Result<()> {
    let params = exp.spec.run.robustness_params(exp.config.n);
    if let Some(input) = input {
        let input = TestInput::new(parse_vector(input)?);
        if input.len() != exp.config.n {
            return Err(UsageError::new(format!("expected {} components, got {}", exp.config.n, input.len())).into());
        }
        let o = perturbation_outcome(&exp.config, &input, &exp.spec.quality, &params, seed)?;
        return write_json(
            out,
            &LabelReport {
                input: input.tr,
                score: o.score.0,
                perturbed_score: o.perturbed_score.0,
                label: o.label.to_string(),
            },
        );
    }
    let path = testset_path(exp);
    if path.exists() && !force {
        bail!("{} already exists; pass --force to overwrite", path.display());
    }
    let set = fresh_testset(exp)?;
    fs::create_dir_all(&exp.out)?;
    let mut w = create(&path)?;
    set.write_csv(&mut w)?;
    w.flush()?;
    writeln!(
        out,
        "{} tests, {} non-robust -> {}",
        set.len(),
        set.count(enrich_core::Label::NonRobust),
        path.file_name().unwrap_or_default().to_string_lossy()
    )?;
    Ok(())
}

/// Run records of one approach, ordered by seed.
fn load_runs(dir: &Path) -> Result<Vec<(u64, RunRecord)>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut runs = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let Some(seed) = name.strip_prefix("run_").and_then(|s| s.strip_suffix(".json")) else {
            continue;
        };
        let Ok(seed) = seed.parse::<u64>() else { continue };
        let text = fs::read_to_string(&path)?;
        let record = RunRecord::from_json(&text).with_context(|| format!("reading {}", path.display()))?;
        runs.push((seed, record));
    }
    runs.sort_by_key(|(seed, _)| *seed);
    Ok(runs)
}

pub fn evaluate_cmd(exp: &Experiment, epsilons: &[f64], force: bool, out: &mut impl Write) -> Result<()> {
    check_epsilons(epsilons)?;
    let eval = &exp.spec.eval;
    let mut found = Vec::new();
    for approach in [Approach::Enrich, Approach::Baseline] {
        let runs = load_runs(&exp.out.join(approach.to_string()))?;
        if let Some((seed, r)) = runs.iter().find(|(_, r)| r.config != exp.config) {
            bail!(
                "{approach} run {seed} used a different shaper config (n = {})",
                r.config.n
            );
        }
        if !runs.is_empty() {
            found.push((approach, runs));
        }
    }
    if found.is_empty() {
        bail!(
            "no run files under {}; run `enrich enrich` or `enrich baseline` first",
            exp.out.display()
        );
    }
    let testset = labelled_testset(exp)?;
    let dir = exp.out.join("eval");
    prepare_dir(&dir, force)?;
    writeln!(
        out,
        "test set: {} tests, {} non-robust",
        testset.len(),
        testset.count(enrich_core::Label::NonRobust)
    )?;
    for (approach, runs) in &found {
        let rangesets: Vec<RangeSet> = runs.iter().map(|(_, r)| r.final_ranges.clone()).collect();
        let mut sweeps = Vec::new();
        for &eps in epsilons {
            let covered = coverage(&rangesets, &testset, eps, &exp.config)?;
            let mut rng = ChaCha8Rng::seed_from_u64(eval.combo_seed);
            let per_eps = (1..=rangesets.len())
                .map(|n| sweep_from_coverage(&covered, n, eval.combo_samples, &testset, eps, &mut rng))
                .collect::<enrich_core::Result<Vec<_>>>()?;
            let mut w = create(&dir.join(format!("{approach}_eps{eps}.csv")))?;
            write_sweeps_csv(&mut w, &per_eps)?;
            w.flush()?;
            let all = per_eps.last().expect("at least one run");
            writeln!(
                out,
                "{approach} eps {eps}: {} runs combined: accuracy {:.3}, precision_nr {:.3}, recall_nr {:.3}",
                all.n_runs, all.accuracy.mean, all.precision_nr.mean, all.recall_nr.mean
            )?;
            sweeps.extend(per_eps);
        }
        let mut w = create(&dir.join(format!("{approach}_summary.csv")))?;
        write_summary_csv(&mut w, &sweeps)?;
        w.flush()?;
    }
    Ok(())
}

/// Scores from a file: either one number per line (blank lines and `#`
/// comments skipped) or a CSV with a `score` column.
pub fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'));
    let Some(first) = first else {
        bail!("{} holds no scores", path.display());
    };
    if first.parse::<f64>().is_ok() {
        return text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .enumerate()
            .map(|(i, l)| {
                l.parse::<f64>()
                    .with_context(|| format!("{}: bad score {l:?} on data line {}", path.display(), i + 1))
            })
            .collect();
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let Some(col) = reader.headers()?.iter().position(|h| h == "score") else {
        bail!("{} has no `score` column", path.display());
    };
    reader
        .records()
        .map(|r| {
            let r = r?;
            let field = r.get(col).unwrap_or("");
            field
                .parse::<f64>()
                .with_context(|| format!("{}: bad score {field:?}", path.display()))
        })
        .collect()
}

#[derive(Serialize)]
struct CompareReport {
    p_value: f64,
    u: f64,
    mae: Option<f64>,
    mean_a: f64,
    sd_a: f64,
    mean_b: f64,
    sd_b: f64,
    n_a: usize,
    n_b: usize,
}

pub fn compare_cmd(a: &Path, b: &Path, require_mae: bool, out: &mut impl Write) -> Result<()> {
    let (xs, ys) = (read_scores(a)?, read_scores(b)?);
    if require_mae && xs.len() != ys.len() {
        return Err(UsageError::new(format!(
            "--mae needs equal-length samples, got {} and {}",
            xs.len(),
            ys.len()
        ))
        .into());
    }
    let test = mann_whitney_u(&xs, &ys)?;
    let mae = (xs.len() == ys.len()).then(|| mae(&xs, &ys)).transpose()?;
    write_json(
        out,
        &CompareReport {
            p_value: test.p_value,
            u: test.u,
            mae,
            mean_a: mean(&xs),
            sd_a: std_dev(&xs),
            mean_b: mean(&ys),
            sd_b: std_dev(&ys),
            n_a: xs.len(),
            n_b: ys.len(),
        },
    )
}
