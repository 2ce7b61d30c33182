//! Brute-force k-nearest-neighbour regression on standardized features.

use serde::{Deserialize, Serialize};

use super::Matrix;

/// Training rows standardized with the training mean and population
/// standard deviation. Features with zero spread are excluded from the
/// distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnState {
    pub k: usize,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Row-major standardized training matrix (inactive features hold 0).
    pub train_x: Vec<f64>,
    pub train_y: Vec<f64>,
}

impl KnnState {
    pub fn fit(x: &Matrix, y: &[f64], k: usize) -> Self {
        let (n, d) = (x.n_rows(), x.n_cols());
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        for f in 0..d {
            let m = (0..n).map(|r| x.get(r, f)).sum::<f64>() / n as f64;
            let var = (0..n).map(|r| (x.get(r, f) - m).powi(2)).sum::<f64>() / n as f64;
            means[f] = m;
            stds[f] = var.sqrt();
        }
        let mut train_x = Vec::with_capacity(n * d);
        for r in 0..n {
            for f in 0..d {
                train_x.push(standardize(x.get(r, f), means[f], stds[f]));
            }
        }
        Self {
            k,
            means,
            stds,
            train_x,
            train_y: y.to_vec(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn standardized(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&v, (&m, &s))| standardize(v, m, s))
            .collect()
    }

    /// Training-row indices of the k nearest neighbours, nearest first, ties
    /// broken by lower row index.
    pub fn neighbours(&self, x: &[f64]) -> Vec<usize> {
        let z = self.standardized(x);
        let d = z.len();
        let mut dist: Vec<(f64, usize)> = self
            .train_x
            .chunks_exact(d)
            .enumerate()
            .map(|(i, row)| {
                let d2: f64 = row.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = self.k.min(dist.len());
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let nn = self.neighbours(x);
        nn.iter().map(|&i| self.train_y[i]).sum::<f64>() / nn.len() as f64
    }
}

fn standardize(v: f64, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        (v - mean) / std
    } else {
        0.0
    }
}
