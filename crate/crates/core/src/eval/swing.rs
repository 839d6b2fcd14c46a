//! RangeSwing: how far a variable's ranges moved between two iterations.
//!
//! Each variable may carry up to two ranges per iteration. Only the lower
//! edges enter the metric; each displacement is scaled by the larger distance
//! from the earlier edge to either end of `[0, threshold]`. Lower is more
//! converged.

use crate::art::Interval;

/// Up to two ranges of one variable in one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RangePair {
    pub first: Option<Interval>,
    pub second: Option<Interval>,
}

impl RangePair {
    pub fn one(r: Interval) -> Self {
        RangePair {
            first: Some(r),
            second: None,
        }
    }

    pub fn two(r1: Interval, r2: Interval) -> Self {
        RangePair {
            first: Some(r1),
            second: Some(r2),
        }
    }
}

fn term(from: f64, to: f64, threshold: f64) -> Option<f64> {
    let scale = from.abs().max((from - threshold).abs());
    (scale > 0.0).then(|| (from - to).abs() / scale)
}

/// Swing of variable ranges from iteration `earlier` to `later`.
///
/// Returns `None` when either first range is missing (no case applies) or a
/// scale term is zero.
pub fn range_swing(earlier: &RangePair, later: &RangePair, threshold: f64) -> Option<f64> {
    let x = earlier.first?.lo;
    let a = later.first?.lo;
    match (earlier.second, later.second) {
        (None, None) => term(x, a, threshold),
        (Some(r2), None) => {
            let h = r2.lo;
            Some(term(x, a, threshold)?.min(term(h, a, threshold)?))
        }
        (None, Some(r2)) => {
            let c = r2.lo;
            Some(term(x, a, threshold)?.min(term(x, c, threshold)?))
        }
        (Some(r2), Some(r2_later)) => {
            let (h, c) = (r2.lo, r2_later.lo);
            let toward_a = term(x, a, threshold)?.min(term(h, a, threshold)?);
            let toward_c = term(x, c, threshold)?.min(term(h, c, threshold)?);
            Some(0.5 * (toward_a + toward_c))
        }
    }
}
