//! Effective latency → R-factor → MOS chain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shaper::ClassMetrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConstants {
    /// Multiplier applied to jitter.
    pub latency_impact: f64,
    pub comp_time_ms: f64,
    pub default_r: f64,
    /// R-factor base once effective latency exceeds 500 ms.
    pub degraded_r: f64,
    /// R deduction per percent of loss.
    pub loss_penalty: f64,
}

impl Default for QualityConstants {
    fn default() -> Self {
        QualityConstants {
            latency_impact: 2.0,
            comp_time_ms: 10.0,
            default_r: 93.0,
            degraded_r: 10.0,
            loss_penalty: 2.5,
        }
    }
}

impl QualityConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.latency_impact,
            self.comp_time_ms,
            self.default_r,
            self.degraded_r,
            self.loss_penalty,
        ];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config("quality constants must be positive"));
        }
        if self.degraded_r >= self.default_r {
            return Err(Error::config("degraded_r must be below default_r"));
        }
        Ok(())
    }
}

const DEGRADED_LATENCY_MS: f64 = 500.0;
const SECOND_SEGMENT_MS: f64 = 160.0;

pub fn effective_latency(latency_ms: f64, jitter_ms: f64, c: &QualityConstants) -> Result<f64> {
    if !(latency_ms >= 0.0 && jitter_ms >= 0.0) {
        return Err(Error::input(format!(
            "latency and jitter must be non-negative, got ({latency_ms}, {jitter_ms})"
        )));
    }
    Ok(latency_ms + jitter_ms * c.latency_impact + c.comp_time_ms)
}

/// R-factor clamped to `[0, 100]`.
///
/// The first segment is strict (`eff < 160`). The two segments do not meet:
/// R steps up by three points at exactly 160 ms, so R is non-increasing in
/// effective latency only within each segment.
pub fn r_factor(eff_latency_ms: f64, loss_pct: f64, c: &QualityConstants) -> Result<f64> {
    if !(eff_latency_ms >= 0.0) {
        return Err(Error::input(format!("negative effective latency {eff_latency_ms}")));
    }
    if !(0.0..=100.0).contains(&loss_pct) {
        return Err(Error::input(format!("loss {loss_pct}% outside [0, 100]")));
    }
    let base = if eff_latency_ms > DEGRADED_LATENCY_MS {
        c.degraded_r
    } else {
        c.default_r
    };
    let r = if eff_latency_ms < SECOND_SEGMENT_MS {
        base - eff_latency_ms / 40.0
    } else {
        base - (eff_latency_ms - 120.0) / 40.0
    };
    Ok((r - loss_pct * c.loss_penalty).clamp(0.0, 100.0))
}

/// E-model R → MOS mapping.
///
/// The cubic dips below 1.0 for `0 < R < 6.52`; the result is floored at 1.0,
/// which also makes the mapping non-decreasing on `[0, 100]`.
pub fn mos_from_r(r: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&r) {
        return Err(Error::input(format!("R-factor {r} outside [0, 100]")));
    }
    Ok(if r <= 0.0 {
        1.0
    } else if r >= 100.0 {
        4.5
    } else {
        (1.0 + 0.035 * r + 7e-6 * r * (r - 60.0) * (100.0 - r)).max(1.0)
    })
}

pub fn mos(latency_ms: f64, jitter_ms: f64, loss_pct: f64, c: &QualityConstants) -> Result<f64> {
    let eff = effective_latency(latency_ms, jitter_ms, c)?;
    mos_from_r(r_factor(eff, loss_pct, c)?)
}

/// Per-class MOS, lowest priority first.
pub fn class_mos(metrics: &ClassMetrics, c: &QualityConstants) -> Result<Vec<f64>> {
    (0..metrics.len())
        .map(|i| mos(metrics.latency_ms[i], metrics.jitter_ms[i], metrics.loss_pct[i], c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shaper::{simulate, ShaperConfig, TestInput};
    use proptest::prelude::*;

    fn k() -> QualityConstants {
        QualityConstants::default()
    }

    #[test]
    fn effective_latency_examples() {
        assert_eq!(effective_latency(20.0, 5.0, &k()).unwrap(), 40.0);
        assert_eq!(effective_latency(0.0, 0.0, &k()).unwrap(), 10.0);
        assert_eq!(effective_latency(100.0, 50.0, &k()).unwrap(), 210.0);
        assert!(effective_latency(-1.0, 0.0, &k()).is_err());
        assert!(effective_latency(1.0, -0.5, &k()).is_err());
    }

    #[test]
    fn r_factor_examples() {
        assert_eq!(r_factor(40.0, 0.0, &k()).unwrap(), 92.0);
        assert_eq!(r_factor(600.0, 0.0, &k()).unwrap(), 0.0);
        assert_eq!(r_factor(40.0, 2.0, &k()).unwrap(), 87.0);
        let below = r_factor(160.0 - 1e-9, 0.0, &k()).unwrap();
        let at = r_factor(160.0, 0.0, &k()).unwrap();
        assert!((at - below - 3.0).abs() < 1e-6);
        assert!(r_factor(10.0, 101.0, &k()).is_err());
    }

    #[test]
    fn mos_examples() {
        assert_eq!(mos_from_r(0.0).unwrap(), 1.0);
        assert_eq!(mos_from_r(100.0).unwrap(), 4.5);
        let m93 = mos_from_r(93.0).unwrap();
        assert!((m93 - 4.405_1).abs() < 1e-3, "{m93}");
        assert_eq!(mos_from_r(3.0).unwrap(), 1.0);
        assert!(mos_from_r(-0.1).is_err());
        assert!(mos_from_r(100.5).is_err());
    }

    #[test]
    fn idle_classes_have_good_mos() {
        let config = ShaperConfig::with_default_thresholds(8, 400.0).unwrap();
        let m = simulate(&config, &TestInput::zeros(8), None).unwrap();
        let scores = class_mos(&m, &k()).unwrap();
        assert_eq!(scores.len(), 8);
        assert!(scores.iter().all(|&s| s > 4.0), "{scores:?}");
        // higher priority, lower latency, better MOS
        assert!(scores.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn full_loss_floors_mos() {
        let metrics = ClassMetrics {
            alloc: vec![0.0, 10.0],
            latency_ms: vec![20.0, 20.0],
            jitter_ms: vec![2.0, 2.0],
            loss_pct: vec![100.0, 0.0],
        };
        let scores = class_mos(&metrics, &k()).unwrap();
        assert_eq!(scores[0], 1.0);
        assert!(scores[1] > 4.0);
    }

    #[test]
    fn jitter_slope_is_latency_impact() {
        let c = k();
        let h = 0.5;
        let a = effective_latency(30.0, 4.0, &c).unwrap();
        let b = effective_latency(30.0, 4.0 + h, &c).unwrap();
        assert_eq!((b - a) / h, c.latency_impact);
    }

    proptest! {
        #[test]
        fn mos_stays_in_band(r in 0.0f64..=100.0) {
            let m = mos_from_r(r).unwrap();
            prop_assert!((1.0..=4.5).contains(&m));
        }

        #[test]
        fn mos_is_monotone_in_r(a in 0.0f64..=100.0, b in 0.0f64..=100.0) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(mos_from_r(lo).unwrap() <= mos_from_r(hi).unwrap() + 1e-12);
        }

        #[test]
        fn mos_degrades_with_latency_and_loss(
            lat in 0.0f64..7000.0,
            dlat in 0.0f64..500.0,
            loss in 0.0f64..90.0,
            dloss in 0.0f64..10.0,
        ) {
            let c = k();
            let eff = |l: f64| effective_latency(l, 0.1 * l, &c).unwrap();
            prop_assume!((eff(lat) < SECOND_SEGMENT_MS) == (eff(lat + dlat) < SECOND_SEGMENT_MS));
            let base = mos(lat, 0.1 * lat, loss, &c).unwrap();
            let slower = mos(lat + dlat, 0.1 * (lat + dlat), loss, &c).unwrap();
            let lossier = mos(lat, 0.1 * lat, loss + dloss, &c).unwrap();
            prop_assert!(slower <= base + 1e-12);
            prop_assert!(lossier <= base + 1e-12);
        }
    }
}
