//! Bagged regression trees with per-split feature subsampling.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestOptions {
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
}

impl Default for ForestOptions {
    fn default() -> Self {
        ForestOptions { bootstrap: true, max_depth: None }
    }
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
    split_at: usize,
}

/// Finds the variance-reducing split of `idx` on feature `f`; `idx` is
/// sorted by that feature as a side effect.
fn best_split_on(rows: &[Vec<f64>], targets: &[f64], idx: &mut [usize], f: usize) -> Option<Best> {
    idx.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]));
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| targets[i]).sum();
    let mut left = 0.0;
    let mut best: Option<Best> = None;
    for k in 1..n {
        left += targets[idx[k - 1]];
        let (lo, hi) = (rows[idx[k - 1]][f], rows[idx[k]][f]);
        if lo == hi {
            continue;
        }
        let right = total - left;
        // maximizing S_L^2/n_L + S_R^2/n_R maximizes the variance reduction
        let score = left * left / k as f64 + right * right / (n - k) as f64;
        if best.as_ref().map_or(true, |b| score > b.score) {
            best = Some(Best { feature: f, threshold: lo + (hi - lo) / 2.0, score, split_at: k });
        }
    }
    best
}

fn grow_tree(
    rows: &[Vec<f64>],
    targets: &[f64],
    sample: Vec<usize>,
    per_split: usize,
    opts: ForestOptions,
    rng: &mut seed::Rng,
) -> Tree {
    let dim = rows[0].len();
    let mut nodes: Vec<Node> = Vec::new();
    // (node slot, sample indices, depth)
    let mut stack = alloc::vec![(0usize, sample, 0usize)];
    nodes.push(Node::Leaf { value: 0.0 });
    let mut features: Vec<usize> = (0..dim).collect();

    while let Some((slot, mut idx, depth)) = stack.pop() {
        let mean = idx.iter().map(|&i| targets[i]).sum::<f64>() / idx.len() as f64;
        let pure = idx.iter().all(|&i| targets[i] == targets[idx[0]]);
        let depth_capped = opts.max_depth.is_some_and(|d| depth >= d);
        if idx.len() < 2 || pure || depth_capped {
            nodes[slot] = Node::Leaf { value: if pure { targets[idx[0]] } else { mean } };
            continue;
        }

        // Sample candidate features; fall through to the rest only when none
        // of the sampled ones admits a split.
        features.shuffle(rng);
        let base_score = {
            let s: f64 = idx.iter().map(|&i| targets[i]).sum();
            s * s / idx.len() as f64
        };
        let mut best: Option<Best> = None;
        for (k, &f) in features.iter().enumerate() {
            if k >= per_split && best.is_some() {
                break;
            }
            if let Some(b) = best_split_on(rows, targets, &mut idx, f) {
                if b.score > base_score && best.as_ref().map_or(true, |cur| b.score > cur.score) {
                    best = Some(b);
                }
            }
        }
        let Some(best) = best else {
            nodes[slot] = Node::Leaf { value: mean };
            continue;
        };
        idx.sort_by(|&a, &b| rows[a][best.feature].total_cmp(&rows[b][best.feature]));
        let right_idx = idx.split_off(best.split_at);
        let left_slot = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        let right_slot = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[slot] = Node::Split { feature: best.feature, threshold: best.threshold, left: left_slot, right: right_slot };
        stack.push((right_slot, right_idx, depth + 1));
        stack.push((left_slot, idx, depth + 1));
    }
    Tree { nodes }
}

/// Fits `trees` regression trees; fully deterministic given `seed`.
pub fn fit_forest(
    rows: &[Vec<f64>],
    targets: &[f64],
    trees: usize,
    feature_ratio: f64,
    seed: u64,
    opts: ForestOptions,
) -> Result<Forest> {
    if trees == 0 {
        return Err(Error::invalid("forest needs at least one tree"));
    }
    if !(feature_ratio > 0.0 && feature_ratio <= 1.0) {
        return Err(Error::invalid(alloc::format!("feature ratio must lie in (0, 1], got {feature_ratio}")));
    }
    let n = rows.len();
    if n == 0 || n != targets.len() {
        return Err(Error::invalid("forest needs matching, non-empty rows and targets"));
    }
    if targets.iter().chain(rows.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite forest input"));
    }
    let dim = rows[0].len();
    let per_split = (libm::ceil(feature_ratio * dim as f64) as usize).clamp(1, dim.max(1));
    let trees = (0..trees)
        .map(|t| {
            let mut rng = seed::rng(seed::derive(seed, t as u64));
            let sample: Vec<usize> = if opts.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(rows, targets, sample, per_split, opts, &mut rng)
        })
        .collect();
    Ok(Forest { trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_unbagged_tree_interpolates() {
        let rows: Vec<Vec<f64>> = (0..25).map(|i| vec![(i * 7 % 25) as f64, (i % 4) as f64]).collect();
        let y: Vec<f64> = (0..25).map(|i| ((i * 13) % 11) as f64 * 0.1).collect();
        let f = fit_forest(&rows, &y, 1, 1.0, 3, ForestOptions { bootstrap: false, max_depth: None }).unwrap();
        for (r, t) in rows.iter().zip(&y) {
            assert_eq!(f.predict(r), *t);
        }
    }

    #[test]
    fn constant_targets() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let f = fit_forest(&rows, &[0.3; 10], 5, 0.5, 1, ForestOptions::default()).unwrap();
        assert!((f.predict(&[100.0]) - 0.3).abs() < 1e-15);
        assert_eq!(f.trees().iter().map(Tree::node_count).max(), Some(1));
    }
}
