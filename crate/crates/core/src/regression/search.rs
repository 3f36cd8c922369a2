//! Cross-validated random hyperparameter search.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{fit, r_squared, Backend, RegressorSpec, DEFAULT_RIDGE};
use crate::curve::FeatureKey;
use crate::error::{Error, Result};
use crate::seed;

/// Sampling distributions for backend hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Log-uniform bounds for C.
    pub c: (f64, f64),
    /// Uniform bounds for ν; the lower end is open.
    pub nu: (f64, f64),
    /// Log-uniform bounds for the RBF width.
    pub gamma: (f64, f64),
    /// Inclusive uniform integer bounds on the tree count.
    pub trees: (usize, usize),
    /// Uniform bounds on the per-split feature ratio.
    pub feature_ratio: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace { c: (1e-5, 10.0), nu: (0.0, 1.0), gamma: (1e-5, 10.0), trees: (10, 800), feature_ratio: (0.1, 0.5) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub search_budget: usize,
    pub seed: u64,
    pub space: SearchSpace,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { folds: 3, search_budget: 1000, seed: 0, space: SearchSpace::default() }
    }
}

impl CvConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.search_budget = budget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid("cross-validation needs at least 2 folds"));
        }
        if self.search_budget == 0 {
            return Err(Error::invalid("search budget must be at least 1"));
        }
        Ok(())
    }
}

fn log_uniform(rng: &mut seed::Rng, (lo, hi): (f64, f64)) -> f64 {
    libm::exp(rng.random_range(libm::log(lo)..=libm::log(hi)))
}

/// Draws one spec for `backend` from `space`.
pub fn sample_spec(backend: Backend, space: &SearchSpace, rng: &mut seed::Rng) -> RegressorSpec {
    // (lo, hi] so that nu = 0 is never produced
    let nu = |rng: &mut seed::Rng| space.nu.1 - rng.random::<f64>() * (space.nu.1 - space.nu.0);
    match backend {
        Backend::NuSvrLinear => {
            let c = log_uniform(rng, space.c);
            RegressorSpec::NuSvrLinear { c, nu: nu(rng) }
        }
        Backend::NuSvrRbf => {
            let c = log_uniform(rng, space.c);
            let nu = nu(rng);
            RegressorSpec::NuSvrRbf { c, nu, gamma: log_uniform(rng, space.gamma) }
        }
        Backend::KernelOls => RegressorSpec::KernelOls { gamma: log_uniform(rng, space.gamma), ridge: DEFAULT_RIDGE },
        Backend::RandomForest => {
            let trees = rng.random_range(space.trees.0..=space.trees.1);
            let feature_ratio = rng.random_range(space.feature_ratio.0..=space.feature_ratio.1);
            RegressorSpec::RandomForest { trees, feature_ratio, seed: rng.random() }
        }
        Backend::LastSeenValue => RegressorSpec::LastSeenValue,
    }
}

/// Fold index for every row: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let order = seed::permutation(n, &mut seed::rng(seed));
    let mut fold = alloc::vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        fold[i] = k % folds;
    }
    fold
}

/// Mean held-out R^2 of `spec` across folds.
pub fn cross_val_score(
    spec: &RegressorSpec,
    rows: &[Vec<f64>],
    targets: &[f64],
    layout: &[FeatureKey],
    fold: &[usize],
    folds: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..folds {
        let (mut tr_rows, mut tr_y, mut te_rows, mut te_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, (r, y)) in rows.iter().zip(targets).enumerate() {
            if fold[i] == k {
                te_rows.push(r.clone());
                te_y.push(*y);
            } else {
                tr_rows.push(r.clone());
                tr_y.push(*y);
            }
        }
        let model = fit(spec, &tr_rows, &tr_y, layout)?;
        let pred = model.predict_rows(&te_rows)?;
        total += r_squared(&pred, &te_y)?;
    }
    Ok(total / folds as f64)
}

/// Samples `search_budget` specs, scores each by mean fold R^2 and returns
/// the best one. Ties go to the earliest sample.
pub fn random_search_cv(
    rows: &[Vec<f64>],
    targets: &[f64],
    layout: &[FeatureKey],
    cv: &CvConfig,
    backend: Backend,
) -> Result<(RegressorSpec, f64)> {
    cv.validate()?;
    if rows.len() < cv.folds {
        return Err(Error::precondition(format!("{} rows cannot fill {} folds", rows.len(), cv.folds)));
    }
    let fold = fold_assignment(rows.len(), cv.folds, seed::derive(cv.seed, u64::MAX));
    let budget = if backend == Backend::LastSeenValue { 1 } else { cv.search_budget };
    let mut best: Option<(RegressorSpec, f64)> = None;
    let mut failures: Vec<String> = Vec::new();
    for i in 0..budget {
        let mut rng = seed::rng(seed::derive(cv.seed, i as u64));
        let spec = sample_spec(backend, &cv.space, &mut rng);
        match cross_val_score(&spec, rows, targets, layout, &fold, cv.folds) {
            Ok(score) if score.is_finite() => {
                if best.as_ref().map_or(true, |(_, s)| score > *s) {
                    best = Some((spec, score));
                }
            }
            Ok(score) => failures.push(format!("candidate {i}: non-finite score {score}")),
            Err(e) => failures.push(format!("candidate {i}: {e}")),
        }
    }
    best.ok_or(Error::AllCandidatesFailed(failures))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn folds_are_balanced() {
        let f = fold_assignment(10, 3, 1);
        let counts: Vec<usize> = (0..3).map(|k| f.iter().filter(|&&x| x == k).count()).collect();
        assert_eq!(counts, vec![4, 3, 3]);
    }

    #[test]
    fn samples_stay_in_range() {
        let space = SearchSpace::default();
        let mut rng = seed::rng(5);
        for _ in 0..500 {
            match sample_spec(Backend::NuSvrRbf, &space, &mut rng) {
                RegressorSpec::NuSvrRbf { c, nu, gamma } => {
                    assert!((1e-5..=10.0).contains(&c));
                    assert!(nu > 0.0 && nu <= 1.0);
                    assert!((1e-5..=10.0).contains(&gamma));
                }
                other => panic!("unexpected {other:?}"),
            }
            match sample_spec(Backend::RandomForest, &space, &mut rng) {
                RegressorSpec::RandomForest { trees, feature_ratio, .. } => {
                    assert!((10..=800).contains(&trees));
                    assert!((0.1..=0.5).contains(&feature_ratio));
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }
}
