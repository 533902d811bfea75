use ndarray::{ArrayView1, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{Execution, map_range};
use crate::rng;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { dim: usize, value: f64, left: usize, right: usize },
    Leaf { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoTree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoForestModel {
    pub trees: Vec<IsoTree>,
    pub subsample: usize,
    pub seed: u64,
}

/// Average unsuccessful-search path length in a binary search tree of `n`
/// points.
pub fn average_path(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
        }
    }
}

/// Columns ordered by their values, so that split dimensions are drawn by
/// content rather than by position.
fn canonical_dims(x: ArrayView2<f64>) -> Vec<usize> {
    let mut dims: Vec<usize> = (0..x.ncols()).collect();
    dims.sort_by(|&a, &b| {
        x.column(a)
            .iter()
            .zip(x.column(b).iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    dims
}

pub fn fit_iforest(x: ArrayView2<f64>, trees: usize, subsample: usize, seed: u64, exec: Execution) -> Result<IsoForestModel> {
    let n = x.nrows();
    if n == 0 || trees == 0 || subsample == 0 {
        return Err(Error::config("isolation forest needs points, trees and a positive subsample size"));
    }
    let psi = if subsample > n {
        log::warn!("subsample {subsample} exceeds {n} training points; clamping");
        n
    } else {
        subsample
    };
    let max_depth = (psi as f64).log2().ceil() as usize;
    let dims = canonical_dims(x);
    let trees = map_range(exec, trees, |t| {
        let mut r = rng::derived(seed, "iforest-tree", t as u64);
        let rows = rand::seq::index::sample(&mut r, n, psi).into_vec();
        let mut nodes = Vec::new();
        grow(x, &dims, rows, 0, max_depth, &mut r, &mut nodes);
        IsoTree { nodes }
    });
    Ok(IsoForestModel { trees, subsample: psi, seed })
}

fn grow(
    x: ArrayView2<f64>,
    dims: &[usize],
    rows: Vec<usize>,
    depth: usize,
    max_depth: usize,
    r: &mut rng::Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    nodes.push(Node::Leaf { size: rows.len() });
    if rows.len() <= 1 || depth >= max_depth {
        return id;
    }
    let spread: Vec<(usize, f64, f64)> = dims
        .iter()
        .filter_map(|&d| {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = x[[i, d]];
                (lo.min(v), hi.max(v))
            });
            (hi > lo).then_some((d, lo, hi))
        })
        .collect();
    if spread.is_empty() {
        return id;
    }
    let (dim, lo, hi) = spread[r.random_range(0..spread.len())];
    let mut value = r.random_range(lo..hi);
    if value <= lo {
        value = lo + (hi - lo) * 0.5;
    }
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| x[[i, dim]] < value);
    let left = grow(x, dims, left_rows, depth + 1, max_depth, r, nodes);
    let right = grow(x, dims, right_rows, depth + 1, max_depth, r, nodes);
    nodes[id] = Node::Split { dim, value, left, right };
    id
}

impl IsoTree {
    pub fn path_length(&self, x: ArrayView1<f64>) -> f64 {
        let mut id = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[id] {
                Node::Leaf { size } => return depth + average_path(size),
                Node::Split { dim, value, left, right } => {
                    id = if x[dim] < value { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

impl IsoForestModel {
    /// `2^(−E[h(x)] / c(ψ))`, in (0, 1).
    pub fn score(&self, x: ArrayView1<f64>) -> f64 {
        let mean = self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64;
        let c = average_path(self.subsample).max(f64::MIN_POSITIVE);
        2f64.powf(-mean / c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Axis};
    use rand_distr::{Distribution, Normal};

    fn cluster_with_outlier(seed: u64) -> Array2<f64> {
        let mut r = rng::seeded(seed);
        let normal = Normal::new(0.0, 0.1).unwrap();
        let mut x = Array2::from_shape_simple_fn((101, 2), || normal.sample(&mut r));
        x.row_mut(100).assign(&ndarray::array![5.0, 5.0]);
        x
    }

    #[test]
    fn normalizer_values() {
        assert_eq!(average_path(1), 0.0);
        assert_eq!(average_path(2), 1.0);
        let c256 = 2.0 * (255f64.ln() + EULER_GAMMA) - 2.0 * 255.0 / 256.0;
        assert!((average_path(256) - c256).abs() < 1e-12);
    }

    #[test]
    fn outlier_ranks_first() {
        for seed in 0..20 {
            let x = cluster_with_outlier(seed);
            let m = fit_iforest(x.view(), 100, 64, seed, Execution::Parallel).unwrap();
            let scores: Vec<f64> = x.rows().into_iter().map(|r| m.score(r)).collect();
            let top = (0..101).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
            assert_eq!(top, 100, "seed {seed}");
            assert!(scores.iter().all(|&s| s > 0.0 && s < 1.0));
            assert!(m.trees.iter().all(|t| t.depth() <= 6));
        }
    }

    #[test]
    fn repeated_point_scores_equal() {
        let x = Array2::from_elem((50, 3), 1.5);
        let m = fit_iforest(x.view(), 20, 16, 1, Execution::Sequential).unwrap();
        let s0 = m.score(x.row(0));
        assert!(x.rows().into_iter().all(|r| m.score(r) == s0));
    }

    #[test]
    fn subsample_is_clamped() {
        let x = cluster_with_outlier(0);
        let m = fit_iforest(x.view(), 5, 1000, 1, Execution::Sequential).unwrap();
        assert_eq!(m.subsample, 101);
    }

    #[test]
    fn feature_permutation_invariance() {
        let mut r = rng::seeded(8);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = Array2::from_shape_simple_fn((200, 4), || normal.sample(&mut r));
        let perm = [2usize, 0, 3, 1];
        let xp = x.select(Axis(1), &perm);
        let a = fit_iforest(x.view(), 30, 64, 5, Execution::Sequential).unwrap();
        let b = fit_iforest(xp.view(), 30, 64, 5, Execution::Sequential).unwrap();
        for i in 0..200 {
            assert_eq!(a.score(x.row(i)), b.score(xp.row(i)));
        }
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let x = cluster_with_outlier(3);
        let a = fit_iforest(x.view(), 40, 32, 9, Execution::Sequential).unwrap();
        let b = fit_iforest(x.view(), 40, 32, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
