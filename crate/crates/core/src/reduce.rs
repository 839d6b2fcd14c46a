//! Tree-guided search-space reduction.
//!
//! From a regression tree over robustness scores we pick the two leaves
//! closest to the robustness threshold, keep only the predicates on their
//! paths whose split actually separates acceptable from unacceptable
//! children, collapse them to one lower and one upper bound per variable, and
//! turn each bound into an ε-window `[max(v − ε, 0), min(v + ε, bwR_i)]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::regtree::{Comparison, Predicate, RegressionTree, TreePath};
use crate::shaper::ShaperConfig;

/// Up to two paths whose leaf means are nearest `rb_threshold`.
///
/// The nearest leaf always comes first. The second is the nearest leaf on the
/// other side of the threshold when one exists, otherwise the runner-up by
/// distance. Equal distances are broken by the lexicographically smaller
/// node-id sequence.
pub fn select_boundary_paths(tree: &RegressionTree, rb_threshold: f64) -> Vec<TreePath> {
    let mut paths = tree.enumerate_paths();
    paths.sort_by(|a, b| {
        let da = (a.leaf_mean - rb_threshold).abs();
        let db = (b.leaf_mean - rb_threshold).abs();
        da.total_cmp(&db).then_with(|| a.node_ids().cmp(&b.node_ids()))
    });
    let mut iter = paths.into_iter();
    let Some(first) = iter.next() else {
        return Vec::new();
    };
    let rest: Vec<TreePath> = iter.collect();
    let first_above = first.leaf_mean >= rb_threshold;
    let second = rest
        .iter()
        .position(|p| (p.leaf_mean >= rb_threshold) != first_above)
        .or(if rest.is_empty() { None } else { Some(0) });
    let mut out = vec![first];
    if let Some(idx) = second {
        out.push(rest[idx].clone());
    }
    out
}

/// Keeps the predicates whose inner node has one child at or above the
/// threshold and one below it. Order is preserved.
pub fn filter_predicates(tree: &RegressionTree, path: &TreePath, rb_threshold: f64) -> Vec<Predicate> {
    path.steps
        .iter()
        .filter(|step| {
            tree.children(step.node)
                .is_some_and(|(l, r)| (l.mean >= rb_threshold) != (r.mean >= rb_threshold))
        })
        .map(|step| step.predicate)
        .collect()
}

/// Tightest lower (`tr_i > v`) and upper (`tr_i <= v`) bound of one variable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl BoundPair {
    /// Where the ε-window is centered: the single bound, or the midpoint of
    /// both.
    pub fn anchor(&self) -> Option<f64> {
        match (self.lower, self.upper) {
            (Some(lo), Some(hi)) => Some(0.5 * (lo + hi)),
            (Some(v), None) | (None, Some(v)) => Some(v),
            (None, None) => None,
        }
    }

    pub fn predicates(&self, var: usize) -> Vec<Predicate> {
        let mut out = Vec::new();
        if let Some(v) = self.lower {
            out.push(Predicate::gt(var, v));
        }
        if let Some(v) = self.upper {
            out.push(Predicate::le(var, v));
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Simplified {
    /// Zero-based variable index to its bounds.
    pub bounds: BTreeMap<usize, BoundPair>,
    /// Variables dropped because their lower bound exceeded their upper bound.
    pub conflicts: Vec<usize>,
}

impl Simplified {
    pub fn predicates(&self) -> Vec<Predicate> {
        self.bounds.iter().flat_map(|(&var, b)| b.predicates(var)).collect()
    }
}

/// Collapses predicates to one lower and one upper bound per variable.
///
/// A lower bound equal to the upper bound is kept: two complementary branches
/// of the same split pin the variable to that split value. Only a lower bound
/// strictly above the upper bound is treated as a contradiction.
pub fn simplify(predicates: &[Predicate]) -> Simplified {
    let mut bounds: BTreeMap<usize, BoundPair> = BTreeMap::new();
    for p in predicates {
        let b = bounds.entry(p.var).or_default();
        match p.cmp {
            Comparison::Le => b.upper = Some(b.upper.map_or(p.value, |u| u.min(p.value))),
            Comparison::Gt => b.lower = Some(b.lower.map_or(p.value, |l| l.max(p.value))),
        }
    }
    let conflicts: Vec<usize> = bounds
        .iter()
        .filter(|(_, b)| matches!((b.lower, b.upper), (Some(lo), Some(hi)) if lo > hi))
        .map(|(&var, _)| var)
        .collect();
    for var in &conflicts {
        bounds.remove(var);
    }
    Simplified { bounds, conflicts }
}

/// Materialized window around an anchor; `variable` is one-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarRange {
    pub variable: usize,
    pub anchor: f64,
    pub lo: f64,
    pub hi: f64,
    pub epsilon_fraction: f64,
}

impl VarRange {
    /// Window `[max(v − ε, 0), min(v + ε, max_bw)]` with `ε = epsilon_fraction·max_bw`.
    /// The anchor itself is clamped into `[0, max_bw]`.
    pub fn new(variable: usize, anchor: f64, epsilon_fraction: f64, max_bw: f64) -> Self {
        let anchor = anchor.clamp(0.0, max_bw);
        let eps = epsilon_fraction * max_bw;
        VarRange {
            variable,
            anchor,
            lo: (anchor - eps).max(0.0),
            hi: (anchor + eps).min(max_bw),
            epsilon_fraction,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Anchored ranges for the constrained variables, sorted by variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeSet {
    pub n: usize,
    pub ranges: Vec<VarRange>,
}

impl RangeSet {
    pub fn empty(n: usize) -> Self {
        RangeSet { n, ranges: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn get(&self, variable: usize) -> Option<&VarRange> {
        self.ranges.iter().find(|r| r.variable == variable)
    }

    /// Anchor per zero-based variable.
    pub fn anchors(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.n];
        for r in &self.ranges {
            out[r.variable - 1] = Some(r.anchor);
        }
        out
    }

    /// Same anchors, windows rebuilt for another ε.
    pub fn with_epsilon(&self, epsilon_fraction: f64, config: &ShaperConfig) -> Result<RangeSet> {
        check_epsilon(epsilon_fraction)?;
        check_dim(config.n, self.n)?;
        Ok(RangeSet {
            n: self.n,
            ranges: self
                .ranges
                .iter()
                .map(|r| {
                    VarRange::new(
                        r.variable,
                        r.anchor,
                        epsilon_fraction,
                        config.thresholds[r.variable - 1],
                    )
                })
                .collect(),
        })
    }

    /// True iff at least one variable is constrained and every constrained
    /// variable's window contains the test value.
    pub fn covers(&self, tr: &[f64]) -> Result<bool> {
        check_dim(self.n, tr.len())?;
        Ok(!self.ranges.is_empty() && self.ranges.iter().all(|r| r.contains(tr[r.variable - 1])))
    }
}

fn check_epsilon(epsilon_fraction: f64) -> Result<()> {
    if epsilon_fraction > 0.0 && epsilon_fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!(
            "epsilon fraction {epsilon_fraction} outside (0, 1)"
        )))
    }
}

pub fn to_ranges(
    bounds: &BTreeMap<usize, BoundPair>,
    epsilon_fraction: f64,
    config: &ShaperConfig,
) -> Result<RangeSet> {
    check_epsilon(epsilon_fraction)?;
    let mut ranges = Vec::with_capacity(bounds.len());
    for (&var, b) in bounds {
        if var >= config.n {
            return Err(Error::Dimension {
                expected: config.n,
                actual: var + 1,
            });
        }
        if let Some(anchor) = b.anchor() {
            ranges.push(VarRange::new(var + 1, anchor, epsilon_fraction, config.thresholds[var]));
        }
    }
    Ok(RangeSet { n: config.n, ranges })
}

/// New anchors replace old ones; variables the new set leaves out keep their
/// previous range.
pub fn merge_ranges(previous: &RangeSet, new: &RangeSet) -> Result<RangeSet> {
    check_dim(previous.n, new.n)?;
    let mut merged: Vec<VarRange> = new.ranges.clone();
    for old in &previous.ranges {
        if new.get(old.variable).is_none() {
            merged.push(*old);
        }
    }
    merged.sort_by_key(|r| r.variable);
    Ok(RangeSet {
        n: new.n,
        ranges: merged,
    })
}

/// Everything one reduction step produced, for inspection and records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    /// Node-id sequences of the selected paths.
    pub paths: Vec<Vec<usize>>,
    pub kept: Vec<Predicate>,
    pub simplified: Simplified,
    pub ranges: RangeSet,
}

/// Runs selection, filtering, simplification and materialization.
pub fn reduce(
    tree: &RegressionTree,
    rb_threshold: f64,
    epsilon_fraction: f64,
    config: &ShaperConfig,
) -> Result<Reduction> {
    let selected = select_boundary_paths(tree, rb_threshold);
    let kept: Vec<Predicate> = selected
        .iter()
        .flat_map(|p| filter_predicates(tree, p, rb_threshold))
        .collect();
    let simplified = simplify(&kept);
    let ranges = to_ranges(&simplified.bounds, epsilon_fraction, config)?;
    Ok(Reduction {
        paths: selected.iter().map(TreePath::node_ids).collect(),
        kept,
        simplified,
        ranges,
    })
}
