//! Priority-preserving robustness measure and the perturbation labelling
//! oracle.
//!
//! MOS values are normalized with `ω(x) = x / (x + 1)`. The measure counts how
//! many of the highest-priority classes meet their MOS threshold (`k`) and
//! adds the normalized MOS of the first class that fails, so a score in
//! `[k, k + 1)` means exactly the top `k` classes are good.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::quality::{class_mos, QualityConstants};
use crate::shaper::{simulate, ShaperConfig, TestInput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessParams {
    /// Raw-scale MOS threshold per class, lowest priority first.
    pub mos_thresholds: Vec<f64>,
    pub rb_threshold: f64,
    /// Perturbation size as a fraction of total bandwidth.
    pub perturbation: f64,
}

impl RobustnessParams {
    pub const DEFAULT_MOS_THRESHOLD: f64 = 4.0;
    pub const DEFAULT_RB_THRESHOLD: f64 = 3.6;
    pub const DEFAULT_PERTURBATION: f64 = 0.02;

    /// Uniform MOS threshold 4.0, `rbTh = 3.6` and a 2% perturbation.
    pub fn uniform(n: usize) -> Self {
        RobustnessParams {
            mos_thresholds: vec![Self::DEFAULT_MOS_THRESHOLD; n],
            rb_threshold: Self::DEFAULT_RB_THRESHOLD,
            perturbation: Self::DEFAULT_PERTURBATION,
        }
    }

    pub fn with_rb_threshold(mut self, rb_threshold: f64) -> Self {
        self.rb_threshold = rb_threshold;
        self
    }

    pub fn n(&self) -> usize {
        self.mos_thresholds.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < 2 {
            return Err(Error::config("need MOS thresholds for at least 2 classes"));
        }
        if let Some(t) = self.mos_thresholds.iter().find(|t| !(**t > 1.0 && **t < 5.0)) {
            return Err(Error::config(format!("MOS threshold {t} outside (1, 5)")));
        }
        if !(self.rb_threshold > 0.5 && self.rb_threshold < n as f64) {
            return Err(Error::config(format!(
                "rb_threshold {} outside (0.5, {n})",
                self.rb_threshold
            )));
        }
        if !(self.perturbation > 0.0 && self.perturbation <= 0.1) {
            return Err(Error::config(format!(
                "perturbation {} outside (0, 0.1]",
                self.perturbation
            )));
        }
        Ok(())
    }
}

/// Robustness measure value, within `[0.5, n]` for valid MOS vectors.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RobustnessScore(pub f64);

impl RobustnessScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for RobustnessScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Robust,
    NonRobust,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Robust => "robust",
            Label::NonRobust => "non-robust",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robust" => Ok(Label::Robust),
            "non-robust" => Ok(Label::NonRobust),
            other => Err(Error::input(format!("unknown label {other:?}"))),
        }
    }
}

/// `ω(x) = x / (x + 1)`.
pub fn normalize(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::input(format!("cannot normalize negative value {x}")));
    }
    Ok(x / (x + 1.0))
}

/// Scores a per-class MOS vector (lowest priority first).
///
/// A class passes when its normalized MOS is at least its normalized
/// threshold; equality counts as passing.
pub fn robustness_measure(mos: &[f64], params: &RobustnessParams) -> Result<RobustnessScore> {
    let n = params.n();
    check_dim(n, mos.len())?;
    if let Some(m) = mos.iter().find(|m| !(1.0..=5.0).contains(*m)) {
        return Err(Error::input(format!("MOS {m} outside [1, 5]")));
    }
    let mut passing = 0;
    for i in (0..n).rev() {
        if normalize(mos[i])? >= normalize(params.mos_thresholds[i])? {
            passing += 1;
        } else {
            break;
        }
    }
    if passing == n {
        return Ok(RobustnessScore(n as f64));
    }
    let first_failing = n - passing - 1;
    Ok(RobustnessScore(passing as f64 + normalize(mos[first_failing])?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interpretation {
    /// Number of top-priority classes with good quality.
    pub good_class_count: usize,
    pub acceptable: bool,
}

pub fn interpret(score: RobustnessScore, n: usize, rb_threshold: f64) -> Interpretation {
    let good_class_count = if score.0 < n as f64 {
        score.0.floor().max(0.0) as usize
    } else {
        n
    };
    Interpretation {
        good_class_count,
        acceptable: is_acceptable(score, rb_threshold),
    }
}

pub fn is_acceptable(score: RobustnessScore, rb_threshold: f64) -> bool {
    score.0 >= rb_threshold
}

/// Full pipeline: simulate, per-class MOS, robustness measure.
pub fn score_input(
    config: &ShaperConfig,
    input: &TestInput,
    quality: &QualityConstants,
    params: &RobustnessParams,
    seed: Option<u64>,
) -> Result<RobustnessScore> {
    let metrics = simulate(config, input, seed)?;
    let mos = class_mos(&metrics, quality)?;
    robustness_measure(&mos, params)
}

/// The two scores behind a perturbation verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationOutcome {
    pub score: RobustnessScore,
    pub perturbed_score: RobustnessScore,
    pub label: Label,
}

/// Moves every class by `±perturbation·total_bw` toward the threshold:
/// down when the score is unacceptable, up otherwise, clamped to the box.
pub fn perturb(config: &ShaperConfig, input: &TestInput, params: &RobustnessParams, acceptable: bool) -> TestInput {
    let delta = params.perturbation * config.total_bw;
    let tr = input
        .tr
        .iter()
        .zip(&config.thresholds)
        .map(|(&tr, &bw)| {
            if acceptable {
                (tr + delta).min(bw)
            } else {
                (tr - delta).max(0.0)
            }
        })
        .collect();
    TestInput::new(tr)
}

pub fn perturbation_outcome(
    config: &ShaperConfig,
    input: &TestInput,
    quality: &QualityConstants,
    params: &RobustnessParams,
    seed: Option<u64>,
) -> Result<PerturbationOutcome> {
    let score = score_input(config, input, quality, params, seed)?;
    let acceptable = is_acceptable(score, params.rb_threshold);
    let moved = perturb(config, input, params, acceptable);
    let perturbed_score = score_input(config, &moved, quality, params, seed)?;
    let label = if is_acceptable(perturbed_score, params.rb_threshold) != acceptable {
        Label::NonRobust
    } else {
        Label::Robust
    };
    Ok(PerturbationOutcome {
        score,
        perturbed_score,
        label,
    })
}

/// Ground-truth label: non-robust iff a small perturbation flips the
/// acceptable/unacceptable verdict.
pub fn label_by_perturbation(
    config: &ShaperConfig,
    input: &TestInput,
    quality: &QualityConstants,
    params: &RobustnessParams,
    seed: Option<u64>,
) -> Result<Label> {
    Ok(perturbation_outcome(config, input, quality, params, seed)?.label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eight() -> (ShaperConfig, QualityConstants, RobustnessParams) {
        (
            ShaperConfig::with_default_thresholds(8, 400.0).unwrap(),
            QualityConstants::default(),
            RobustnessParams::uniform(8),
        )
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(0.0).unwrap(), 0.0);
        assert_eq!(normalize(1.0).unwrap(), 0.5);
        assert!((normalize(4.41).unwrap() - 0.815_157).abs() < 1e-6);
        assert!(normalize(-0.1).is_err());
    }

    #[test]
    fn measure_examples() {
        let params = RobustnessParams::uniform(4);
        let r = robustness_measure(&[2.51, 3.3, 4.41, 4.49], &params).unwrap();
        assert!((r.0 - (2.0 + 3.3 / 4.3)).abs() < 1e-12);
        assert!((r.0 - 2.7674).abs() < 1e-4);
        assert_eq!(robustness_measure(&[5.0; 4], &params).unwrap().0, 4.0);
        assert_eq!(robustness_measure(&[1.0; 4], &params).unwrap().0, 0.5);
        assert!(robustness_measure(&[5.0; 3], &params).is_err());
        assert!(robustness_measure(&[0.5, 5.0, 5.0, 5.0], &params).is_err());
    }

    #[test]
    fn threshold_equality_passes() {
        let params = RobustnessParams::uniform(2);
        assert_eq!(robustness_measure(&[4.0, 4.0], &params).unwrap().0, 2.0);
    }

    #[test]
    fn interpretation_ladder() {
        let i = interpret(RobustnessScore(2.7674), 4, 3.6);
        assert_eq!(
            i,
            Interpretation {
                good_class_count: 2,
                acceptable: false
            }
        );
        let i = interpret(RobustnessScore(4.0), 4, 3.6);
        assert_eq!(
            i,
            Interpretation {
                good_class_count: 4,
                acceptable: true
            }
        );
        let i = interpret(RobustnessScore(0.5), 8, 3.6);
        assert_eq!(
            i,
            Interpretation {
                good_class_count: 0,
                acceptable: false
            }
        );
        assert!(interpret(RobustnessScore(3.6), 8, 3.6).acceptable);
    }

    #[test]
    fn idle_network_scores_n() {
        let (c, q, p) = eight();
        let r = score_input(&c, &TestInput::zeros(8), &q, &p, None).unwrap();
        assert_eq!(r.0, 8.0);
        assert_eq!(
            label_by_perturbation(&c, &TestInput::zeros(8), &q, &p, None).unwrap(),
            Label::Robust
        );
    }

    #[test]
    fn saturated_network_is_robustly_bad() {
        let (c, q, p) = eight();
        let full = TestInput::new(c.thresholds.clone());
        let outcome = perturbation_outcome(&c, &full, &q, &p, None).unwrap();
        // Every class demands its full threshold: class 8 sits at ρ = 1 and
        // fails, so the score is the normalized MOS of class 8 alone.
        assert!((outcome.score.0 - 0.5).abs() < 1e-12, "{outcome:?}");
        assert!(outcome.perturbed_score.0 < p.rb_threshold);
        assert_eq!(outcome.label, Label::Robust);
    }

    #[test]
    fn knee_input_is_non_robust() {
        // Frozen from a bisection along tr = t·bwR: the verdict flips between
        // t = 0.6 (acceptable) and t = 0.65 (unacceptable).
        let (c, q, p) = eight();
        let at = |t: f64| TestInput::new(c.thresholds.iter().map(|b| t * b).collect());
        let ok = |t: f64| is_acceptable(score_input(&c, &at(t), &q, &p, None).unwrap(), p.rb_threshold);
        let (mut lo, mut hi) = (0.6, 0.65);
        assert!(ok(lo) && !ok(hi));
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((hi - KNEE_T).abs() < 1e-9, "knee at {hi}");
        let label = label_by_perturbation(&c, &at(KNEE_T + 1e-6), &q, &p, None).unwrap();
        assert_eq!(label, Label::NonRobust);
        assert_eq!(
            label_by_perturbation(&c, &at(0.1), &q, &p, None).unwrap(),
            Label::Robust
        );
    }

    const KNEE_T: f64 = 0.608_695_652_173_913_2;

    #[test]
    fn label_parsing() {
        assert_eq!("robust".parse::<Label>().unwrap(), Label::Robust);
        assert_eq!("non-robust".parse::<Label>().unwrap(), Label::NonRobust);
        assert!("maybe".parse::<Label>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(RobustnessParams::uniform(8).validate().is_ok());
        assert!(RobustnessParams::uniform(3).with_rb_threshold(3.0).validate().is_err());
        let mut p = RobustnessParams::uniform(4);
        p.perturbation = 0.2;
        assert!(p.validate().is_err());
        p.perturbation = 0.02;
        p.mos_thresholds[0] = 5.0;
        assert!(p.validate().is_err());
    }

    fn mos_vec() -> impl Strategy<Value = Vec<f64>> {
        prop_oneof![Just(2usize), Just(4), Just(8)].prop_flat_map(|n| proptest::collection::vec(1.0f64..=5.0, n))
    }

    proptest! {
        #[test]
        fn measure_in_range_and_monotone(mos in mos_vec(), idx in 0usize..8, bump in 0.0f64..1.0) {
            let n = mos.len();
            let params = RobustnessParams::uniform(n);
            let r = robustness_measure(&mos, &params).unwrap();
            prop_assert!(r.0 >= 0.5 && r.0 <= n as f64);
            let mut up = mos.clone();
            up[idx % n] = (up[idx % n] + bump).min(5.0);
            prop_assert!(robustness_measure(&up, &params).unwrap().0 >= r.0);
        }

        #[test]
        fn failing_top_class_dominates(mos in mos_vec()) {
            let n = mos.len();
            let params = RobustnessParams::uniform(n);
            let mut failing = mos.clone();
            failing[n - 1] = failing[n - 1].min(3.99);
            let mut passing = mos;
            passing[n - 1] = passing[n - 1].max(4.0);
            passing[n - 2] = passing[n - 2].max(4.0);
            let low = robustness_measure(&failing, &params).unwrap().0;
            let high = robustness_measure(&passing, &params).unwrap().0;
            prop_assert!(low < 1.0);
            prop_assert!(high >= 2.0);
        }
    }
}
