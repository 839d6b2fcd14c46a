//! Adaptive random testing with a fixed-size candidate set.
//!
//! Each new test is the best of `pool_size` uniform candidates, where "best"
//! means farthest (in the minimum-distance sense) from every test generated so
//! far. Distances are taken after dividing each coordinate by its class
//! threshold so wide classes do not dominate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::shaper::{ShaperConfig, TestInput};

pub const DEFAULT_POOL_SIZE: usize = 10;

/// Focus half-width as a fraction of total bandwidth.
pub const FOCUS_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

/// Box-constrained input space with optional per-variable focus intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub ranges: Vec<Interval>,
    /// Sampling window per variable, already clipped to its range.
    pub focus: Vec<Option<Interval>>,
    /// Per-dimension scale used for distance normalization (`bwR_i`).
    pub scale: Vec<f64>,
}

impl SearchBox {
    /// The default box `[0, bwR_1] × … × [0, bwR_n]` without focus.
    pub fn full(config: &ShaperConfig) -> Self {
        SearchBox {
            ranges: config.thresholds.iter().map(|&bw| Interval::new(0.0, bw)).collect(),
            focus: vec![None; config.n],
            scale: config.thresholds.clone(),
        }
    }

    /// Adds a focus window `v ± FOCUS_FRACTION·total_bw` around each anchor.
    pub fn focused(config: &ShaperConfig, anchors: &[Option<f64>]) -> Result<Self> {
        check_dim(config.n, anchors.len())?;
        let half = FOCUS_FRACTION * config.total_bw;
        let mut b = SearchBox::full(config);
        for (i, anchor) in anchors.iter().enumerate() {
            if let Some(v) = anchor {
                b.focus[i] = Some(Interval::new(v - half, v + half).intersect(&b.ranges[i]));
            }
        }
        b.validate()?;
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.dim(), self.focus.len())?;
        check_dim(self.dim(), self.scale.len())?;
        if self.dim() == 0 {
            return Err(Error::input("search box has no dimensions"));
        }
        for (i, r) in self.ranges.iter().enumerate() {
            if r.is_empty() {
                return Err(Error::input(format!("empty range for tr_{}", i + 1)));
            }
            if let Some(f) = &self.focus[i] {
                if f.intersect(r).is_empty() {
                    return Err(Error::input(format!("focus of tr_{} misses its range", i + 1)));
                }
            }
        }
        if self.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::input("distance scales must be positive"));
        }
        Ok(())
    }

    /// Whether the test lies in the box (focus windows included).
    pub fn contains(&self, input: &TestInput) -> bool {
        input.len() == self.dim()
            && input
                .tr
                .iter()
                .enumerate()
                .all(|(i, &x)| self.ranges[i].contains(x) && self.focus[i].is_none_or(|f| f.contains(x)))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TestInput {
        let tr = self
            .ranges
            .iter()
            .zip(&self.focus)
            .map(|(range, focus)| match focus {
                Some(f) => f.intersect(range).sample(rng),
                None => range.sample(rng),
            })
            .collect();
        TestInput::new(tr)
    }

    fn normalized(&self, input: &TestInput) -> Vec<f64> {
        input.tr.iter().zip(&self.scale).map(|(x, s)| x / s).collect()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index of the candidate whose nearest previous point is farthest away.
///
/// With no previous points every candidate ties and index 0 wins; ties are
/// always broken toward the lowest index.
pub fn select_candidate(candidates: &[Vec<f64>], previous: &[Vec<f64>]) -> usize {
    if previous.is_empty() {
        return 0;
    }
    let mut best = 0;
    let mut best_dist = f64::NEG_INFINITY;
    for (idx, c) in candidates.iter().enumerate() {
        let nearest = previous
            .iter()
            .map(|p| squared_distance(c, p))
            .fold(f64::INFINITY, f64::min);
        if nearest > best_dist {
            best = idx;
            best_dist = nearest;
        }
    }
    best
}

/// Generates `k` tests inside `search_box`, spread away from `existing` and
/// from each other.
pub fn gen_tests<R: Rng + ?Sized>(
    search_box: &SearchBox,
    k: usize,
    existing: &[TestInput],
    pool_size: usize,
    rng: &mut R,
) -> Result<Vec<TestInput>> {
    search_box.validate()?;
    if pool_size == 0 {
        return Err(Error::input("candidate pool size must be at least 1"));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut previous: Vec<Vec<f64>> = Vec::with_capacity(existing.len() + k);
    for t in existing {
        check_dim(search_box.dim(), t.len())?;
        previous.push(search_box.normalized(t));
    }
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let candidates: Vec<TestInput> = (0..pool_size).map(|_| search_box.sample(rng)).collect();
        let normalized: Vec<Vec<f64>> = candidates.iter().map(|c| search_box.normalized(c)).collect();
        let pick = select_candidate(&normalized, &previous);
        previous.push(normalized[pick].clone());
        out.push(candidates[pick].clone());
    }
    Ok(out)
}
