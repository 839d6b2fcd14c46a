//! The ENRICH loop and the single-pass BASELINE.
//!
//! ENRICH starts with an explorative ART suite over the full input box. Each
//! following round rebuilds a regression tree on every test run so far,
//! reduces it to anchored ranges, merges them with the previous ranges and
//! samples the next suite near the anchors. BASELINE spends the same budget
//! on one explorative suite and reduces a single tree.

use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::art::{gen_tests, SearchBox, DEFAULT_POOL_SIZE};
use crate::error::{Error, Result};
use crate::quality::QualityConstants;
use crate::reduce::{merge_ranges, reduce, RangeSet, Reduction};
use crate::regtree::{build_tree, Dataset, RegressionTree};
use crate::robustness::{score_input, Label, RobustnessParams};
use crate::shaper::{ShaperConfig, TestInput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunParams {
    /// Tests in the explorative first round.
    pub initial_suite: usize,
    /// Tests per exploitation round.
    pub suite_size: usize,
    /// Number of exploitation rounds.
    pub iterations: usize,
    /// Minimum rows per tree leaf.
    pub node_size: usize,
    pub rb_threshold: f64,
    pub total_bw: f64,
    pub epsilon_fraction: f64,
    pub seed: u64,
    pub pool_size: usize,
    /// Per-class MOS thresholds; uniform 4.0 when absent.
    pub mos_thresholds: Option<Vec<f64>>,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            initial_suite: 100,
            suite_size: 20,
            iterations: 10,
            node_size: 1,
            rb_threshold: RobustnessParams::DEFAULT_RB_THRESHOLD,
            total_bw: 400.0,
            epsilon_fraction: 0.05,
            seed: 0,
            pool_size: DEFAULT_POOL_SIZE,
            mos_thresholds: None,
        }
    }
}

impl RunParams {
    /// Simulator calls one run spends.
    pub fn budget(&self) -> usize {
        self.initial_suite + self.iterations * self.suite_size
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn robustness_params(&self, n: usize) -> RobustnessParams {
        let mut p = RobustnessParams::uniform(n).with_rb_threshold(self.rb_threshold);
        if let Some(t) = &self.mos_thresholds {
            p.mos_thresholds = t.clone();
        }
        p
    }

    pub fn validate(&self, config: &ShaperConfig) -> Result<()> {
        if (self.total_bw - config.total_bw).abs() > 1e-9 {
            return Err(Error::config(format!(
                "run total_bw {} differs from shaper total_bw {}",
                self.total_bw, config.total_bw
            )));
        }
        if self.node_size == 0 || self.pool_size == 0 {
            return Err(Error::config("node_size and pool_size must be at least 1"));
        }
        if !(self.epsilon_fraction > 0.0 && self.epsilon_fraction < 1.0) {
            return Err(Error::config("epsilon_fraction must lie in (0, 1)"));
        }
        self.robustness_params(config.n).validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Enrich,
    Baseline,
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::Enrich => "enrich",
            Approach::Baseline => "baseline",
        })
    }
}

/// One round: the tree and reduction it started from (none in the
/// explorative round), the ranges in force and the tests it ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub tree: Option<RegressionTree>,
    pub reduction: Option<Reduction>,
    pub ranges: RangeSet,
    pub search_box: SearchBox,
    pub tests: Vec<TestInput>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub approach: Approach,
    pub config: ShaperConfig,
    pub quality: QualityConstants,
    pub params: RunParams,
    pub iterations: Vec<IterationRecord>,
    pub final_ranges: RangeSet,
    pub simulator_calls: usize,
}

impl RunRecord {
    pub fn test_count(&self) -> usize {
        self.iterations.iter().map(|it| it.tests.len()).sum()
    }

    pub fn tree_count(&self) -> usize {
        self.iterations.iter().filter(|it| it.tree.is_some()).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One CSV row per executed test: `iteration, tr_1..tr_n, score, label`.
    /// `labels`, when given, is indexed by execution order.
    pub fn write_tests_csv<W: Write>(&self, out: W, labels: Option<&[Label]>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.config.n;
        let mut header = vec!["iteration".to_string()];
        header.extend((1..=n).map(|i| format!("tr_{i}")));
        header.extend(["score".to_string(), "label".to_string()]);
        w.write_record(&header)?;
        let mut idx = 0;
        for it in &self.iterations {
            for (test, score) in it.tests.iter().zip(&it.scores) {
                let mut row = vec![it.iteration.to_string()];
                row.extend(test.tr.iter().map(f64::to_string));
                row.push(score.to_string());
                row.push(labels.and_then(|l| l.get(idx)).map_or(String::new(), |l| l.to_string()));
                w.write_record(&row)?;
                idx += 1;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-test noise seed derived from the run seed and the execution index.
fn test_seed(run_seed: u64, index: usize) -> u64 {
    run_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64)
        .rotate_left(17)
}

struct Scorer<'a> {
    config: &'a ShaperConfig,
    quality: &'a QualityConstants,
    robustness: RobustnessParams,
    seed: u64,
    calls: usize,
}

impl Scorer<'_> {
    /// Scores a batch concurrently; results come back in input order.
    fn score(&mut self, tests: &[TestInput]) -> Result<Vec<f64>> {
        let start = self.calls;
        let scores = tests
            .par_iter()
            .enumerate()
            .map(|(i, t)| {
                let seed = Some(test_seed(self.seed, start + i));
                score_input(self.config, t, self.quality, &self.robustness, seed).map(|s| s.0)
            })
            .collect::<Result<Vec<f64>>>()?;
        self.calls += tests.len();
        Ok(scores)
    }
}

fn dataset(tests: &[TestInput], scores: &[f64]) -> Dataset {
    Dataset::from_rows(tests.iter().zip(scores).map(|(t, &s)| (t.tr.clone(), s)))
}

pub fn run_enrich(config: &ShaperConfig, quality: &QualityConstants, params: &RunParams) -> Result<RunRecord> {
    params.validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut scorer = Scorer {
        config,
        quality,
        robustness: params.robustness_params(config.n),
        seed: params.seed,
        calls: 0,
    };
    let mut all_tests: Vec<TestInput> = Vec::with_capacity(params.budget());
    let mut all_scores: Vec<f64> = Vec::with_capacity(params.budget());
    let mut iterations = Vec::with_capacity(params.iterations + 1);

    let full = SearchBox::full(config);
    let tests = gen_tests(&full, params.initial_suite, &[], params.pool_size, &mut rng)?;
    let scores = scorer.score(&tests)?;
    all_tests.extend(tests.iter().cloned());
    all_scores.extend(&scores);
    iterations.push(IterationRecord {
        iteration: 0,
        tree: None,
        reduction: None,
        ranges: RangeSet::empty(config.n),
        search_box: full.clone(),
        tests,
        scores,
    });

    let mut ranges = RangeSet::empty(config.n);
    for iteration in 1..=params.iterations {
        let (tree, reduction) = if all_tests.is_empty() {
            (None, None)
        } else {
            let tree = build_tree(&dataset(&all_tests, &all_scores), params.node_size)?;
            let reduction = reduce(&tree, params.rb_threshold, params.epsilon_fraction, config)?;
            ranges = merge_ranges(&ranges, &reduction.ranges)?;
            (Some(tree), Some(reduction))
        };
        let search_box = SearchBox::focused(config, &ranges.anchors())?;
        let tests = gen_tests(&search_box, params.suite_size, &all_tests, params.pool_size, &mut rng)?;
        let scores = scorer.score(&tests)?;
        all_tests.extend(tests.iter().cloned());
        all_scores.extend(&scores);
        iterations.push(IterationRecord {
            iteration,
            tree,
            reduction,
            ranges: ranges.clone(),
            search_box,
            tests,
            scores,
        });
    }

    Ok(RunRecord {
        approach: Approach::Enrich,
        config: config.clone(),
        quality: quality.clone(),
        params: params.clone(),
        iterations,
        final_ranges: ranges,
        simulator_calls: scorer.calls,
    })
}

pub fn run_baseline(config: &ShaperConfig, quality: &QualityConstants, params: &RunParams) -> Result<RunRecord> {
    params.validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut scorer = Scorer {
        config,
        quality,
        robustness: params.robustness_params(config.n),
        seed: params.seed,
        calls: 0,
    };
    let full = SearchBox::full(config);
    let tests = gen_tests(&full, params.budget(), &[], params.pool_size, &mut rng)?;
    let scores = scorer.score(&tests)?;
    let (tree, reduction, ranges) = if tests.is_empty() {
        (None, None, RangeSet::empty(config.n))
    } else {
        let tree = build_tree(&dataset(&tests, &scores), params.node_size)?;
        let reduction = reduce(&tree, params.rb_threshold, params.epsilon_fraction, config)?;
        let ranges = reduction.ranges.clone();
        (Some(tree), Some(reduction), ranges)
    };
    Ok(RunRecord {
        approach: Approach::Baseline,
        config: config.clone(),
        quality: quality.clone(),
        params: params.clone(),
        iterations: vec![IterationRecord {
            iteration: 0,
            tree,
            reduction,
            ranges: ranges.clone(),
            search_box: full,
            tests,
            scores,
        }],
        final_ranges: ranges,
        simulator_calls: scorer.calls,
    })
}

pub fn run(
    approach: Approach,
    config: &ShaperConfig,
    quality: &QualityConstants,
    params: &RunParams,
) -> Result<RunRecord> {
    match approach {
        Approach::Enrich => run_enrich(config, quality, params),
        Approach::Baseline => run_baseline(config, quality, params),
    }
}
