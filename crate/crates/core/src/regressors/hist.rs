//! Histogram-binned, leaf-wise tree growth (the LightGBM-style learner).

use super::tree::{Tree, TreeNode};
use super::Matrix;

/// Per-feature bin edges. A value falls in bin `b` when
/// `edges[b - 1] <= x < edges[b]`, so bin `b` lies left of a split at edge
/// index `s` exactly when `x < edges[s]`.
#[derive(Debug, Clone)]
pub struct BinMapper {
    edges: Vec<Vec<f64>>,
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m <= lo {
        hi
    } else {
        m
    }
}

impl BinMapper {
    pub fn fit(x: &Matrix, max_bins: usize) -> Self {
        let edges = (0..x.n_cols())
            .map(|f| {
                let mut col: Vec<f64> = (0..x.n_rows()).map(|r| x.get(r, f)).collect();
                col.sort_by(f64::total_cmp);
                feature_edges(&col, max_bins)
            })
            .collect();
        Self { edges }
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }

    pub fn edge(&self, feature: usize, idx: usize) -> f64 {
        self.edges[feature][idx]
    }

    pub fn bin(&self, feature: usize, v: f64) -> u8 {
        self.edges[feature].partition_point(|&e| e <= v) as u8
    }

    pub fn transform(&self, x: &Matrix) -> Vec<Vec<u8>> {
        (0..x.n_cols())
            .map(|f| (0..x.n_rows()).map(|r| self.bin(f, x.get(r, f))).collect())
            .collect()
    }
}

fn feature_edges(sorted: &[f64], max_bins: usize) -> Vec<f64> {
    let mut unique = sorted.to_vec();
    unique.dedup();
    let mut edges = Vec::new();
    if unique.len() <= max_bins {
        for w in unique.windows(2) {
            edges.push(midpoint(w[0], w[1]));
        }
        return edges;
    }
    let n = sorted.len();
    for k in 1..max_bins {
        let pos = k * n / max_bins;
        if pos == 0 || pos >= n {
            continue;
        }
        let (lo, hi) = (sorted[pos - 1], sorted[pos]);
        if lo == hi {
            continue;
        }
        let e = midpoint(lo, hi);
        if edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    edges
}

#[derive(Debug, Clone, Copy)]
pub struct LeafWiseParams {
    pub max_leaves: usize,
}

struct OpenLeaf {
    node: usize,
    rows: Vec<usize>,
    best: Option<BinSplit>,
}

#[derive(Clone, Copy)]
struct BinSplit {
    feature: usize,
    /// Rows with bin < `bin` go left.
    bin: usize,
    gain: f64,
}

/// Grows one tree on gradient targets `g` using pre-binned features. Leaves
/// are split best-gain first until `max_leaves` is reached or no split
/// reduces the squared error.
pub fn grow_leaf_wise(
    mapper: &BinMapper,
    binned: &[Vec<u8>],
    g: &[f64],
    params: &LeafWiseParams,
) -> Tree {
    let all: Vec<usize> = (0..g.len()).collect();
    let mut nodes = vec![TreeNode::Leaf {
        value: mean(g, &all),
    }];
    let best = best_bin_split(mapper, binned, g, &all);
    let mut open = vec![OpenLeaf { node: 0, rows: all, best }];
    let mut n_leaves = 1;
    while n_leaves < params.max_leaves {
        // Highest gain wins; on ties the earliest-created leaf.
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.best.map(|b| (i, b.gain)))
            .fold(None::<(usize, f64)>, |acc, (i, gain)| match acc {
                Some((_, g0)) if g0 >= gain => acc,
                _ => Some((i, gain)),
            });
        let Some((i, _)) = pick else { break };
        let leaf = open.remove(i);
        let split = leaf.best.expect("picked leaf has a split");
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = leaf
            .rows
            .iter()
            .partition(|&&r| (binned[split.feature][r] as usize) < split.bin);
        let left = nodes.len();
        nodes.push(TreeNode::Leaf {
            value: mean(g, &left_rows),
        });
        let right = nodes.len();
        nodes.push(TreeNode::Leaf {
            value: mean(g, &right_rows),
        });
        nodes[leaf.node] = TreeNode::Internal {
            feature: split.feature,
            threshold: mapper.edge(split.feature, split.bin - 1),
            left,
            right,
        };
        n_leaves += 1;
        for (node, rows) in [(left, left_rows), (right, right_rows)] {
            let best = best_bin_split(mapper, binned, g, &rows);
            open.push(OpenLeaf { node, rows, best });
        }
    }
    Tree { nodes }
}

fn mean(g: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&r| g[r]).sum::<f64>() / rows.len() as f64
}

fn best_bin_split(
    mapper: &BinMapper,
    binned: &[Vec<u8>],
    g: &[f64],
    rows: &[usize],
) -> Option<BinSplit> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let first = g[rows[0]];
    if rows.iter().all(|&r| g[r] == first) {
        return None;
    }
    let total: f64 = rows.iter().map(|&r| g[r]).sum();
    let parent = total * total / n as f64;
    let mut best: Option<BinSplit> = None;
    let mut sums = [0.0f64; 256];
    let mut counts = [0usize; 256];
    for (f, col) in binned.iter().enumerate() {
        let n_bins = mapper.n_bins(f);
        sums[..n_bins].fill(0.0);
        counts[..n_bins].fill(0);
        for &r in rows {
            let b = col[r] as usize;
            sums[b] += g[r];
            counts[b] += 1;
        }
        let (mut sum_l, mut n_l) = (0.0, 0usize);
        for s in 1..n_bins {
            sum_l += sums[s - 1];
            n_l += counts[s - 1];
            if n_l == 0 || counts[s - 1] == 0 {
                continue;
            }
            if n_l == n {
                break;
            }
            let n_r = n - n_l;
            let sum_r = total - sum_l;
            let gain = sum_l * sum_l / n_l as f64 + sum_r * sum_r / n_r as f64 - parent;
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                best = Some(BinSplit { feature: f, bin: s, gain });
            }
        }
    }
    best
}
