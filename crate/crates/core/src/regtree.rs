//! CART regression trees over test inputs and their robustness scores.
//!
//! Inner nodes carry a predicate `tr_i <= v`; the left child holds the rows
//! that satisfy it and the right child the rows with `tr_i > v`. Nodes are
//! numbered breadth-first from 1 over the nodes that actually exist.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Training rows: one input vector and one score per row.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: impl IntoIterator<Item = (Vec<f64>, f64)>) -> Self {
        let (inputs, scores) = rows.into_iter().unzip();
        Dataset { inputs, scores }
    }

    pub fn push(&mut self, input: Vec<f64>, score: f64) {
        self.inputs.push(input);
        self.scores.push(score);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::input("cannot build a tree from an empty dataset"));
        }
        check_dim(self.inputs.len(), self.scores.len())?;
        let d = self.dim();
        if d == 0 {
            return Err(Error::input("rows have no variables"));
        }
        for row in &self.inputs {
            check_dim(d, row.len())?;
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::input("non-finite input value"));
            }
        }
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::input("non-finite score"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `tr_i <= v`
    Le,
    /// `tr_i > v`
    Gt,
}

/// `tr_{var+1} ~ value` with a zero-based variable index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub var: usize,
    pub cmp: Comparison,
    pub value: f64,
}

impl Predicate {
    pub fn le(var: usize, value: f64) -> Self {
        Predicate {
            var,
            cmp: Comparison::Le,
            value,
        }
    }

    pub fn gt(var: usize, value: f64) -> Self {
        Predicate {
            var,
            cmp: Comparison::Gt,
            value,
        }
    }

    pub fn holds(&self, input: &[f64]) -> bool {
        match self.cmp {
            Comparison::Le => input[self.var] <= self.value,
            Comparison::Gt => input[self.var] > self.value,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.cmp {
            Comparison::Le => "<=",
            Comparison::Gt => ">",
        };
        write!(f, "tr_{} {} {}", self.var + 1, op, self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub var: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    /// Split predicate `tr_var <= value`; `None` for leaves.
    pub split: Option<Split>,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub mean: f64,
    pub count: usize,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

/// Recursive tree description, used both by the builder and for hand-made
/// fixtures.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeShape {
    Leaf {
        mean: f64,
        count: usize,
    },
    Split {
        var: usize,
        value: f64,
        left: Box<TreeShape>,
        right: Box<TreeShape>,
    },
}

impl TreeShape {
    pub fn leaf(mean: f64, count: usize) -> Self {
        TreeShape::Leaf { mean, count }
    }

    pub fn split(var: usize, value: f64, left: TreeShape, right: TreeShape) -> Self {
        TreeShape::Split {
            var,
            value,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn totals(&self) -> (f64, usize) {
        match self {
            TreeShape::Leaf { mean, count } => (mean * *count as f64, *count),
            TreeShape::Split { left, right, .. } => {
                let (ls, lc) = left.totals();
                let (rs, rc) = right.totals();
                (ls + rs, lc + rc)
            }
        }
    }
}

/// An immutable regression tree; `nodes[id - 1]` is the node with that id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

/// One inner node on a root-to-leaf path and the branch taken there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub node: usize,
    pub predicate: Predicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreePath {
    pub steps: Vec<PathStep>,
    pub leaf: usize,
    pub leaf_mean: f64,
}

impl TreePath {
    pub fn predicates(&self) -> Vec<Predicate> {
        self.steps.iter().map(|s| s.predicate).collect()
    }

    /// Node ids from the root to the leaf.
    pub fn node_ids(&self) -> Vec<usize> {
        self.steps
            .iter()
            .map(|s| s.node)
            .chain(std::iter::once(self.leaf))
            .collect()
    }
}

impl RegressionTree {
    /// Numbers a shape breadth-first. Inner-node means are the count-weighted
    /// means of their leaves.
    pub fn from_shape(shape: TreeShape) -> Self {
        let mut nodes: Vec<Node> = Vec::new();
        let mut queue: VecDeque<(TreeShape, Option<(usize, bool)>)> = VecDeque::new();
        queue.push_back((shape, None));
        while let Some((shape, parent)) = queue.pop_front() {
            let id = nodes.len() + 1;
            if let Some((p, is_left)) = parent {
                let parent = &mut nodes[p - 1];
                if is_left {
                    parent.left = Some(id);
                } else {
                    parent.right = Some(id);
                }
            }
            let (sum, count) = shape.totals();
            let mean = if count == 0 { 0.0 } else { sum / count as f64 };
            match shape {
                TreeShape::Leaf { mean, count } => nodes.push(Node {
                    id,
                    split: None,
                    left: None,
                    right: None,
                    mean,
                    count,
                }),
                TreeShape::Split {
                    var,
                    value,
                    left,
                    right,
                } => {
                    nodes.push(Node {
                        id,
                        split: Some(Split { var, value }),
                        left: None,
                        right: None,
                        mean,
                        count,
                    });
                    queue.push_back((*left, Some((id, true))));
                    queue.push_back((*right, Some((id, false))));
                }
            }
        }
        RegressionTree { nodes }
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id - 1]
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Children of an inner node as `(left, right)`.
    pub fn children(&self, id: usize) -> Option<(&Node, &Node)> {
        let n = self.node(id);
        match (n.left, n.right) {
            (Some(l), Some(r)) => Some((self.node(l), self.node(r))),
            _ => None,
        }
    }

    /// Id of the leaf an input routes to.
    pub fn route(&self, input: &[f64]) -> usize {
        let mut node = self.root();
        while let Some(split) = node.split {
            let next = if input[split.var] <= split.value {
                node.left
            } else {
                node.right
            };
            node = self.node(next.expect("inner node has two children"));
        }
        node.id
    }

    pub fn predict(&self, input: &[f64]) -> f64 {
        self.node(self.route(input)).mean
    }

    /// All root-to-leaf paths, depth-first with the `<=` branch first.
    pub fn enumerate_paths(&self) -> Vec<TreePath> {
        let mut out = Vec::with_capacity(self.leaf_count());
        let mut steps = Vec::new();
        self.walk(1, &mut steps, &mut out);
        out
    }

    fn walk(&self, id: usize, steps: &mut Vec<PathStep>, out: &mut Vec<TreePath>) {
        let node = self.node(id);
        match (node.split, node.left, node.right) {
            (Some(split), Some(l), Some(r)) => {
                steps.push(PathStep {
                    node: id,
                    predicate: Predicate::le(split.var, split.value),
                });
                self.walk(l, steps, out);
                steps.pop();
                steps.push(PathStep {
                    node: id,
                    predicate: Predicate::gt(split.var, split.value),
                });
                self.walk(r, steps, out);
                steps.pop();
            }
            _ => out.push(TreePath {
                steps: steps.clone(),
                leaf: id,
                leaf_mean: node.mean,
            }),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Candidate split found at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub var: usize,
    pub value: f64,
    pub sse: f64,
}

/// Relative slack under which two split costs count as tied.
const SSE_TIE: f64 = 1e-12;

fn sse_of(scores: &[f64], rows: &[usize]) -> f64 {
    let mean = rows.iter().map(|&r| scores[r]).sum::<f64>() / rows.len() as f64;
    rows.iter().map(|&r| (scores[r] - mean).powi(2)).sum()
}

/// Best split of `rows` by summed child SSE.
///
/// Candidates are midpoints between consecutive distinct values, and both
/// children must keep at least `node_size` rows. Ties go to the lowest
/// variable index, then the smallest split value.
pub fn best_split(data: &Dataset, rows: &[usize], node_size: usize) -> Option<SplitChoice> {
    let m = rows.len();
    if m < 2 * node_size.max(1) {
        return None;
    }
    let mut best: Option<SplitChoice> = None;
    let mut order = rows.to_vec();
    for var in 0..data.dim() {
        order.sort_by(|&a, &b| data.inputs[a][var].total_cmp(&data.inputs[b][var]));
        let total: f64 = order.iter().map(|&r| data.scores[r]).sum();
        let total_sq: f64 = order.iter().map(|&r| data.scores[r].powi(2)).sum();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for j in 1..m {
            let y = data.scores[order[j - 1]];
            sum += y;
            sum_sq += y * y;
            let (x_prev, x_next) = (data.inputs[order[j - 1]][var], data.inputs[order[j]][var]);
            if x_prev == x_next || j < node_size || m - j < node_size {
                continue;
            }
            let left = (sum_sq - sum * sum / j as f64).max(0.0);
            let (rs, rsq) = (total - sum, total_sq - sum_sq);
            let right = (rsq - rs * rs / (m - j) as f64).max(0.0);
            let sse = left + right;
            let better = match best {
                None => true,
                Some(b) => sse < b.sse - SSE_TIE * (1.0 + b.sse.abs()),
            };
            if better {
                best = Some(SplitChoice {
                    var,
                    value: 0.5 * (x_prev + x_next),
                    sse,
                });
            }
        }
    }
    best
}

/// Grows a tree until nodes are pure, too small to split, or unsplittable.
pub fn build_tree(data: &Dataset, node_size: usize) -> Result<RegressionTree> {
    data.validate()?;
    if node_size == 0 {
        return Err(Error::input("node size must be at least 1"));
    }
    let rows: Vec<usize> = (0..data.len()).collect();
    Ok(RegressionTree::from_shape(grow(data, &rows, node_size)))
}

fn grow(data: &Dataset, rows: &[usize], node_size: usize) -> TreeShape {
    let leaf = || {
        let mean = rows.iter().map(|&r| data.scores[r]).sum::<f64>() / rows.len() as f64;
        TreeShape::leaf(mean, rows.len())
    };
    let first = data.scores[rows[0]];
    if rows.iter().all(|&r| data.scores[r] == first) || sse_of(&data.scores, rows) == 0.0 {
        return leaf();
    }
    let Some(split) = best_split(data, rows, node_size) else {
        return leaf();
    };
    let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| data.inputs[r][split.var] <= split.value);
    TreeShape::split(
        split.var,
        split.value,
        grow(data, &left, node_size),
        grow(data, &right, node_size),
    )
}
