//! Regression trees grown by variance reduction.
//!
//! Nodes live in a flat vector with the root at index 0. A sample goes to
//! the left child when `x[feature] < threshold`.

use rand::seq::index;
use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] < threshold { left } else { right },
            }
        }
    }

    /// Depth of the deepest leaf; a single leaf has depth 0.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => {
                    1 + walk(nodes, left).max(walk(nodes, right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    /// Structural check used after deserialization.
    pub fn is_well_formed(&self, n_features: usize) -> bool {
        !self.nodes.is_empty()
            && self.nodes.iter().enumerate().all(|(i, n)| match *n {
                TreeNode::Leaf { value } => value.is_finite(),
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    feature < n_features
                        && !threshold.is_nan()
                        && left > i
                        && right > i
                        && left < self.nodes.len()
                        && right < self.nodes.len()
                }
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitter {
    /// Exhaustive search over midpoints of adjacent distinct values.
    Best,
    /// One uniformly drawn threshold per candidate feature.
    Random,
}

#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub max_depth: usize,
    /// Number of features examined per split (clamped to the feature count).
    pub max_features: usize,
    pub splitter: Splitter,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Grows one tree on the rows named by `rows` (duplicates allowed, as
/// produced by bootstrap sampling).
pub fn grow<R: Rng>(
    x: &Matrix,
    y: &[f64],
    rows: Vec<usize>,
    params: &GrowParams,
    rng: &mut R,
) -> Tree {
    let mut nodes = Vec::new();
    grow_node(x, y, rows, 0, params, rng, &mut nodes);
    Tree { nodes }
}

fn mean_of(y: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64
}

fn grow_node<R: Rng>(
    x: &Matrix,
    y: &[f64],
    rows: Vec<usize>,
    depth: usize,
    params: &GrowParams,
    rng: &mut R,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let id = nodes.len();
    nodes.push(TreeNode::Leaf {
        value: mean_of(y, &rows),
    });
    if rows.len() < 2 || depth >= params.max_depth {
        return id;
    }
    let first = y[rows[0]];
    if rows.iter().all(|&r| y[r] == first) {
        return id;
    }
    let Some(split) = find_split(x, y, &rows, params, rng) else {
        return id;
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&r| x.get(r, split.feature) < split.threshold);
    if left_rows.is_empty() || right_rows.is_empty() {
        return id;
    }
    drop(rows);
    let left = grow_node(x, y, left_rows, depth + 1, params, rng, nodes);
    let right = grow_node(x, y, right_rows, depth + 1, params, rng, nodes);
    nodes[id] = TreeNode::Internal {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    id
}

fn candidate_features<R: Rng>(n_features: usize, max_features: usize, rng: &mut R) -> Vec<usize> {
    if max_features >= n_features {
        return (0..n_features).collect();
    }
    let mut chosen = index::sample(rng, n_features, max_features.max(1)).into_vec();
    chosen.sort_unstable();
    chosen
}

/// Split score `S_l^2 / n_l + S_r^2 / n_r`; maximizing it minimizes the
/// summed squared error of the children.
fn split_score(sum_l: f64, n_l: usize, sum_r: f64, n_r: usize) -> f64 {
    sum_l * sum_l / n_l as f64 + sum_r * sum_r / n_r as f64
}

fn find_split<R: Rng>(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    params: &GrowParams,
    rng: &mut R,
) -> Option<Candidate> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&r| y[r]).sum();
    let parent = total * total / n as f64;
    let features = candidate_features(x.n_cols(), params.max_features, rng);
    let mut best: Option<Candidate> = None;
    let consider = |c: Candidate, best: &mut Option<Candidate>| {
        // Features and thresholds are visited in ascending order, so a strict
        // comparison keeps the lowest feature index and threshold on ties.
        if best.as_ref().is_none_or(|b| c.score > b.score) {
            *best = Some(c);
        }
    };
    match params.splitter {
        Splitter::Best => {
            let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
            for &f in &features {
                pairs.clear();
                pairs.extend(rows.iter().map(|&r| (x.get(r, f), y[r])));
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut sum_l = 0.0;
                for i in 0..n - 1 {
                    sum_l += pairs[i].1;
                    let (lo, hi) = (pairs[i].0, pairs[i + 1].0);
                    if lo == hi {
                        continue;
                    }
                    let score = split_score(sum_l, i + 1, total - sum_l, n - i - 1);
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold <= lo {
                        threshold = hi;
                    }
                    consider(Candidate { feature: f, threshold, score }, &mut best);
                }
            }
        }
        Splitter::Random => {
            for &f in &features {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for &r in rows {
                    let v = x.get(r, f);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                if lo == hi {
                    continue;
                }
                let u: f64 = rng.sample(Open01);
                let mut threshold = lo + u * (hi - lo);
                if !(threshold > lo && threshold <= hi) {
                    threshold = hi;
                }
                let (mut sum_l, mut n_l) = (0.0, 0usize);
                for &r in rows {
                    if x.get(r, f) < threshold {
                        sum_l += y[r];
                        n_l += 1;
                    }
                }
                let score = split_score(sum_l, n_l, total - sum_l, n - n_l);
                consider(Candidate { feature: f, threshold, score }, &mut best);
            }
        }
    }
    best.filter(|b| b.score > parent)
}
