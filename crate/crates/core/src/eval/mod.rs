//! Evaluation harness: labelled test sets, range-based classification,
//! confusion metrics and run-combination sweeps.
//!
//! Non-robust is the positive class throughout.

pub mod stats;
pub mod swing;

use std::collections::BTreeSet;
use std::io::{Read, Write};

use itertools::Itertools;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::quality::QualityConstants;
use crate::reduce::RangeSet;
use crate::robustness::{perturbation_outcome, Label, RobustnessParams};
use crate::shaper::{ShaperConfig, TestInput};

pub use stats::{mae, mann_whitney_u, MannWhitney};
pub use swing::{range_swing, RangePair};

/// Tests with ground-truth labels from the perturbation oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledTestSet {
    pub seed: u64,
    pub tests: Vec<TestInput>,
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

impl LabelledTestSet {
    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Labels given tests with the oracle, concurrently but in input order.
    pub fn label(
        config: &ShaperConfig,
        quality: &QualityConstants,
        params: &RobustnessParams,
        tests: Vec<TestInput>,
        seed: u64,
    ) -> Result<Self> {
        let outcomes = tests
            .par_iter()
            .enumerate()
            .map(|(i, t)| {
                let noise_seed = seed.wrapping_add(i as u64);
                perturbation_outcome(config, t, quality, params, Some(noise_seed))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabelledTestSet {
            seed,
            tests,
            scores: outcomes.iter().map(|o| o.score.0).collect(),
            labels: outcomes.iter().map(|o| o.label).collect(),
        })
    }

    /// CSV with columns `tr_1..tr_n, score, label`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.tests.first().map_or(0, TestInput::len);
        let mut header: Vec<String> = (1..=n).map(|i| format!("tr_{i}")).collect();
        header.extend(["score".into(), "label".into()]);
        w.write_record(&header)?;
        for ((t, s), l) in self.tests.iter().zip(&self.scores).zip(&self.labels) {
            let mut row: Vec<String> = t.tr.iter().map(f64::to_string).collect();
            row.push(s.to_string());
            row.push(l.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, seed: u64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut set = LabelledTestSet {
            seed,
            tests: Vec::new(),
            scores: Vec::new(),
            labels: Vec::new(),
        };
        for record in r.records() {
            let record = record?;
            let k = record.len();
            if k < 3 {
                return Err(Error::input("labelled CSV rows need inputs, score and label"));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::input(format!("bad number {s:?}: {e}")))
            };
            let tr = record.iter().take(k - 2).map(parse).collect::<Result<Vec<_>>>()?;
            set.tests.push(TestInput::new(tr));
            set.scores.push(parse(&record[k - 2])?);
            set.labels.push(record[k - 1].parse()?);
        }
        Ok(set)
    }
}

/// Samples `size` uniform tests over the default box and labels them.
pub fn build_labelled_testset(
    config: &ShaperConfig,
    quality: &QualityConstants,
    params: &RobustnessParams,
    size: usize,
    seed: u64,
) -> Result<LabelledTestSet> {
    if size == 0 {
        return Err(Error::input("labelled test set needs at least one test"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tests = (0..size)
        .map(|_| TestInput::new(config.thresholds.iter().map(|&bw| rng.random_range(0.0..=bw)).collect()))
        .collect();
    LabelledTestSet::label(config, quality, params, tests, seed)
}

/// Ensemble prediction: non-robust iff at least one run's ranges, widened
/// to `epsilon_fraction`, cover the test.
pub fn classify_with_ranges(
    rangesets: &[RangeSet],
    test: &TestInput,
    epsilon_fraction: f64,
    config: &ShaperConfig,
) -> Result<Label> {
    if rangesets.is_empty() {
        return Err(Error::input("need at least one run to classify"));
    }
    check_dim(config.n, test.len())?;
    for rs in rangesets {
        if rs.with_epsilon(epsilon_fraction, config)?.covers(&test.tr)? {
            return Ok(Label::NonRobust);
        }
    }
    Ok(Label::Robust)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    /// Non-robust predicted non-robust.
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Confusion counts and derived rates. A rate with an empty denominator is
/// reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision_nr: f64,
    pub recall_nr: f64,
    pub precision_r: f64,
    pub recall_r: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(predicted: &[Label], actual: &[Label]) -> Result<MetricsReport> {
    check_dim(actual.len(), predicted.len())?;
    if actual.is_empty() {
        return Err(Error::input("no predictions to score"));
    }
    let mut c = Confusion::default();
    for (p, a) in predicted.iter().zip(actual) {
        match (p, a) {
            (Label::NonRobust, Label::NonRobust) => c.tp += 1,
            (Label::NonRobust, Label::Robust) => c.fp += 1,
            (Label::Robust, Label::Robust) => c.tn += 1,
            (Label::Robust, Label::NonRobust) => c.fn_ += 1,
        }
    }
    Ok(MetricsReport {
        confusion: c,
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision_nr: ratio(c.tp, c.tp + c.fp),
        recall_nr: ratio(c.tp, c.tp + c.fn_),
        precision_r: ratio(c.tn, c.tn + c.fn_),
        recall_r: ratio(c.tn, c.tn + c.fp),
    })
}

/// Mean, quartiles and extremes of one metric across combinations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Distribution {
            mean: stats::mean(&sorted),
            min: sorted.first().copied().unwrap_or(f64::NAN),
            q1: stats::quantile(&sorted, 0.25),
            median: stats::quantile(&sorted, 0.5),
            q3: stats::quantile(&sorted, 0.75),
            max: sorted.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboResult {
    pub combo_id: usize,
    /// Zero-based run indices.
    pub runs: Vec<usize>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationSweep {
    pub n_runs: usize,
    pub epsilon_fraction: f64,
    pub combos: Vec<ComboResult>,
    pub accuracy: Distribution,
    pub precision_nr: Distribution,
    pub recall_nr: Distribution,
    pub precision_r: Distribution,
    pub recall_r: Distribution,
}

/// Which run subsets of size `n` out of `runs` get evaluated.
///
/// Size 1 and sizes `runs − 1` and `runs` use every subset; other sizes use
/// every subset when there are at most `samples` of them and otherwise
/// `samples` distinct random ones, in draw order.
pub fn combination_plan<R: Rng + ?Sized>(
    runs: usize,
    n: usize,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if n == 0 || n > runs {
        return Err(Error::input(format!("combination size {n} outside 1..={runs}")));
    }
    let exhaustive = n == 1 || n + 1 >= runs;
    if exhaustive || binomial_at_most(runs, n, samples) {
        return Ok((0..runs).combinations(n).collect());
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let mut combo = index::sample(rng, runs, n).into_vec();
        combo.sort_unstable();
        if seen.insert(combo.clone()) {
            out.push(combo);
        }
    }
    Ok(out)
}

fn binomial_at_most(n: usize, k: usize, limit: usize) -> bool {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > limit as u128 {
            return false;
        }
    }
    true
}

/// Coverage matrix `[run][test]` at one ε.
pub fn coverage(
    rangesets: &[RangeSet],
    testset: &LabelledTestSet,
    epsilon_fraction: f64,
    config: &ShaperConfig,
) -> Result<Vec<Vec<bool>>> {
    rangesets
        .iter()
        .map(|rs| {
            let widened = rs.with_epsilon(epsilon_fraction, config)?;
            testset.tests.iter().map(|t| widened.covers(&t.tr)).collect()
        })
        .collect()
}

/// Scores every planned combination of `n` runs.
pub fn run_combinations<R: Rng + ?Sized>(
    rangesets: &[RangeSet],
    n: usize,
    samples: usize,
    testset: &LabelledTestSet,
    epsilon_fraction: f64,
    config: &ShaperConfig,
    rng: &mut R,
) -> Result<CombinationSweep> {
    let covered = coverage(rangesets, testset, epsilon_fraction, config)?;
    sweep_from_coverage(&covered, n, samples, testset, epsilon_fraction, rng)
}

pub fn sweep_from_coverage<R: Rng + ?Sized>(
    covered: &[Vec<bool>],
    n: usize,
    samples: usize,
    testset: &LabelledTestSet,
    epsilon_fraction: f64,
    rng: &mut R,
) -> Result<CombinationSweep> {
    let plan = combination_plan(covered.len(), n, samples, rng)?;
    let combos = plan
        .into_iter()
        .enumerate()
        .map(|(combo_id, runs)| {
            let predicted: Vec<Label> = (0..testset.len())
                .map(|t| {
                    if runs.iter().any(|&r| covered[r][t]) {
                        Label::NonRobust
                    } else {
                        Label::Robust
                    }
                })
                .collect();
            Ok(ComboResult {
                combo_id,
                runs,
                report: metrics(&predicted, &testset.labels)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let column = |f: fn(&MetricsReport) -> f64| -> Distribution {
        Distribution::of(&combos.iter().map(|c| f(&c.report)).collect::<Vec<_>>())
    };
    Ok(CombinationSweep {
        n_runs: n,
        epsilon_fraction,
        accuracy: column(|m| m.accuracy),
        precision_nr: column(|m| m.precision_nr),
        recall_nr: column(|m| m.recall_nr),
        precision_r: column(|m| m.precision_r),
        recall_r: column(|m| m.recall_r),
        combos,
    })
}

/// Per-combination rows: `n_runs, combo_id, accuracy, precision_nr,
/// recall_nr, precision_r, recall_r`.
pub fn write_sweeps_csv<W: Write>(out: W, sweeps: &[CombinationSweep]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n_runs",
        "combo_id",
        "accuracy",
        "precision_nr",
        "recall_nr",
        "precision_r",
        "recall_r",
    ])?;
    for s in sweeps {
        for c in &s.combos {
            let m = &c.report;
            w.write_record([
                s.n_runs.to_string(),
                c.combo_id.to_string(),
                m.accuracy.to_string(),
                m.precision_nr.to_string(),
                m.recall_nr.to_string(),
                m.precision_r.to_string(),
                m.recall_r.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per combination size with mean and quartiles of each metric.
pub fn write_summary_csv<W: Write>(out: W, sweeps: &[CombinationSweep]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let metrics = ["accuracy", "precision_nr", "recall_nr", "precision_r", "recall_r"];
    let mut header = vec!["epsilon".to_string(), "n_runs".to_string(), "combos".to_string()];
    for m in metrics {
        for stat in ["mean", "q1", "median", "q3"] {
            header.push(format!("{m}_{stat}"));
        }
    }
    w.write_record(&header)?;
    for s in sweeps {
        let mut row = vec![
            s.epsilon_fraction.to_string(),
            s.n_runs.to_string(),
            s.combos.len().to_string(),
        ];
        for d in [&s.accuracy, &s.precision_nr, &s.recall_nr, &s.precision_r, &s.recall_r] {
            row.extend([d.mean, d.q1, d.median, d.q3].iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduce::VarRange;
    use proptest::prelude::*;

    fn two_class() -> ShaperConfig {
        ShaperConfig::with_default_thresholds(2, 400.0).unwrap()
    }

    fn worked_ranges() -> RangeSet {
        // [180, 280] × [32, 42]: ε is 12.5% of bwR_1 = 400 and 5% of bwR_2 = 100
        RangeSet {
            n: 2,
            ranges: vec![
                VarRange {
                    variable: 1,
                    anchor: 230.0,
                    lo: 180.0,
                    hi: 280.0,
                    epsilon_fraction: 0.125,
                },
                VarRange {
                    variable: 2,
                    anchor: 37.0,
                    lo: 32.0,
                    hi: 42.0,
                    epsilon_fraction: 0.05,
                },
            ],
        }
    }

    #[test]
    fn classify_examples() {
        let c = two_class();
        let rs = RangeSet {
            n: 2,
            ranges: vec![
                VarRange::new(1, 230.0, 0.125, 400.0),
                VarRange::new(2, 37.0, 0.05, 100.0),
            ],
        };
        assert_eq!(rs, worked_ranges());
        assert!(rs.covers(&[200.0, 35.0]).unwrap());
        assert!(!rs.covers(&[200.0, 50.0]).unwrap());
        let single = RangeSet {
            n: 2,
            ranges: vec![VarRange::new(2, 37.0, 0.05, 100.0)],
        };
        let t = TestInput::new(vec![10.0, 35.0]);
        assert_eq!(
            classify_with_ranges(std::slice::from_ref(&single), &t, 0.05, &c).unwrap(),
            Label::NonRobust
        );
        let far = TestInput::new(vec![10.0, 50.0]);
        assert_eq!(
            classify_with_ranges(std::slice::from_ref(&single), &far, 0.05, &c).unwrap(),
            Label::Robust
        );
        assert_eq!(
            classify_with_ranges(&[RangeSet::empty(2)], &t, 0.05, &c).unwrap(),
            Label::Robust
        );
        assert_eq!(
            classify_with_ranges(&[RangeSet::empty(2), single], &t, 0.05, &c).unwrap(),
            Label::NonRobust
        );
        assert!(classify_with_ranges(&[], &t, 0.05, &c).is_err());
        assert!(classify_with_ranges(&[RangeSet::empty(2)], &TestInput::zeros(3), 0.05, &c).is_err());
    }

    #[test]
    fn metric_examples() {
        use Label::*;
        let actual: Vec<Label> = (0..200).map(|i| if i < 60 { NonRobust } else { Robust }).collect();
        let perfect = metrics(&actual, &actual).unwrap();
        assert_eq!(perfect.accuracy, 1.0);
        let all_nr = metrics(&[NonRobust; 200], &actual).unwrap();
        assert_eq!(all_nr.recall_nr, 1.0);
        assert!((all_nr.accuracy - 0.30).abs() < 1e-12);
        assert!((all_nr.precision_nr - 0.30).abs() < 1e-12);
        assert_eq!(all_nr.recall_r, 0.0);
        assert_eq!(all_nr.precision_r, 0.0);
        let flipped: Vec<Label> = actual
            .iter()
            .map(|l| if *l == Robust { NonRobust } else { Robust })
            .collect();
        assert_eq!(metrics(&flipped, &actual).unwrap().accuracy, 0.0);
        assert!(metrics(&[], &[]).is_err());
        assert!(metrics(&[Robust], &[]).is_err());
    }

    #[test]
    fn combination_plan_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sizes: Vec<usize> = (1..=15)
            .map(|n| combination_plan(15, n, 20, &mut rng).unwrap().len())
            .collect();
        assert_eq!(sizes, vec![15, 20, 20, 20, 20, 20, 20, 20, 20, 20, 20, 20, 20, 15, 1]);
        assert!(combination_plan(15, 0, 20, &mut rng).is_err());
        assert!(combination_plan(15, 16, 20, &mut rng).is_err());
        // small collections fall back to full enumeration
        assert_eq!(combination_plan(5, 2, 20, &mut rng).unwrap().len(), 10);
        let plan = combination_plan(15, 5, 20, &mut rng).unwrap();
        let distinct: BTreeSet<_> = plan.iter().cloned().collect();
        assert_eq!(distinct.len(), 20);
        assert!(plan.iter().all(|c| c.windows(2).all(|w| w[0] < w[1])));
    }

    fn toy_testset() -> LabelledTestSet {
        LabelledTestSet {
            seed: 0,
            tests: (0..10)
                .map(|i| TestInput::new(vec![40.0 * i as f64, 10.0 * i as f64]))
                .collect(),
            scores: vec![2.0; 10],
            labels: (0..10)
                .map(|i| if i % 3 == 0 { Label::NonRobust } else { Label::Robust })
                .collect(),
        }
    }

    #[test]
    fn sweep_counts_and_csv() {
        let c = two_class();
        let runs: Vec<RangeSet> = (0..4)
            .map(|i| RangeSet {
                n: 2,
                ranges: vec![VarRange::new(1, 40.0 * (2 * i) as f64, 0.05, 400.0)],
            })
            .collect();
        let set = toy_testset();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sweeps: Vec<_> = (1..=4)
            .map(|n| run_combinations(&runs, n, 20, &set, 0.05, &c, &mut rng).unwrap())
            .collect();
        assert_eq!(
            sweeps.iter().map(|s| s.combos.len()).collect::<Vec<_>>(),
            vec![4, 6, 4, 1]
        );
        let all = &sweeps[3].combos[0].report;
        // runs cover tests 0, 2, 4, 6
        assert_eq!(
            all.confusion,
            Confusion {
                tp: 2,
                fp: 2,
                tn: 4,
                fn_: 2
            }
        );
        let mut buf = Vec::new();
        write_sweeps_csv(&mut buf, &sweeps).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n_runs,combo_id,accuracy,precision_nr,recall_nr,precision_r,recall_r\n"));
        assert_eq!(text.lines().count(), 1 + 15);
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &sweeps).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    #[test]
    fn labelled_set_is_reproducible_and_round_trips() {
        let c = ShaperConfig::with_default_thresholds(8, 400.0).unwrap();
        let q = QualityConstants::default();
        let p = RobustnessParams::uniform(8);
        let a = build_labelled_testset(&c, &q, &p, 40, 5).unwrap();
        let b = build_labelled_testset(&c, &q, &p, 40, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.tests.iter().all(|t| t.validate(&c).is_ok()));
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(LabelledTestSet::read_csv(buf.as_slice(), 5).unwrap(), a);
        assert!(build_labelled_testset(&c, &q, &p, 0, 5).is_err());

        let idle = LabelledTestSet::label(&c, &q, &p, vec![TestInput::zeros(8)], 1).unwrap();
        assert_eq!(idle.labels, vec![Label::Robust]);
    }

    fn anchored_runs() -> impl Strategy<Value = Vec<RangeSet>> {
        proptest::collection::vec(proptest::collection::vec(proptest::option::of(0.0f64..400.0), 2), 1..6).prop_map(
            |runs| {
                runs.into_iter()
                    .map(|anchors| RangeSet {
                        n: 2,
                        ranges: anchors
                            .iter()
                            .enumerate()
                            .filter_map(|(i, a)| a.map(|v| VarRange::new(i + 1, v, 0.05, [400.0, 100.0][i])))
                            .collect(),
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn adding_runs_only_adds_non_robust(runs in anchored_runs(), x in 0.0f64..400.0, y in 0.0f64..100.0, eps in 0.01f64..0.5) {
            let c = two_class();
            let t = TestInput::new(vec![x, y]);
            let mut previous = Label::Robust;
            for k in 1..=runs.len() {
                let now = classify_with_ranges(&runs[..k], &t, eps, &c).unwrap();
                prop_assert!(!(previous == Label::NonRobust && now == Label::Robust));
                previous = now;
            }
        }

        #[test]
        fn widening_epsilon_keeps_non_robust(runs in anchored_runs(), x in 0.0f64..400.0, y in 0.0f64..100.0, eps in 0.01f64..0.5, extra in 0.0f64..0.49) {
            let c = two_class();
            let t = TestInput::new(vec![x, y]);
            let narrow = classify_with_ranges(&runs, &t, eps, &c).unwrap();
            let wide = classify_with_ranges(&runs, &t, (eps + extra).min(0.99), &c).unwrap();
            prop_assert!(!(narrow == Label::NonRobust && wide == Label::Robust));
        }

        #[test]
        fn precision_and_recall_identities(bits in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..100)) {
            let to = |b: bool| if b { Label::NonRobust } else { Label::Robust };
            let predicted: Vec<Label> = bits.iter().map(|b| to(b.0)).collect();
            let actual: Vec<Label> = bits.iter().map(|b| to(b.1)).collect();
            let m = metrics(&predicted, &actual).unwrap();
            let c = m.confusion;
            prop_assert_eq!(c.total(), bits.len());
            if c.tp + c.fp > 0 {
                prop_assert!((m.precision_nr * (c.tp + c.fp) as f64 - c.tp as f64).abs() < 1e-9);
            }
            if c.tp + c.fn_ > 0 {
                prop_assert!((m.recall_nr * (c.tp + c.fn_) as f64 - c.tp as f64).abs() < 1e-9);
            }
            prop_assert!((m.accuracy - (c.tp + c.tn) as f64 / bits.len() as f64).abs() < 1e-12);
        }
    }
}
