//! Frequentist regression backends used to predict final curve values.
//!
//! Every trained model carries its own [`Scaler`]; inputs are standardized
//! before they reach a kernel or a tree, except for the last-seen-value
//! baseline which reads the raw `y_tau` slot.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::curve::{FeatureKey, PartialCurve};
use crate::error::{Error, Result};

mod forest;
mod kernel;
mod kernel_ols;
mod linalg;
mod metrics;
mod scaler;
mod search;
pub mod svr;

pub use forest::{fit_forest, Forest, ForestOptions, Node, Tree};
pub use kernel::Kernel;
pub use kernel_ols::{solve_kernel_ols, KernelOlsSolution};
pub use linalg::cholesky_solve;
pub use metrics::r_squared;
pub use scaler::{fit_scaler, Scaler};
pub use search::{cross_val_score, fold_assignment, random_search_cv, sample_spec, CvConfig, SearchSpace};
pub use svr::{solve_nu_svr, NuSvrDual, SmoOptions};

/// Default ridge added to kernel OLS Gram matrices.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Regression backend families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    NuSvrLinear,
    NuSvrRbf,
    KernelOls,
    RandomForest,
    LastSeenValue,
}

impl Backend {
    pub const ALL: [Backend; 5] =
        [Backend::NuSvrLinear, Backend::NuSvrRbf, Backend::KernelOls, Backend::RandomForest, Backend::LastSeenValue];

    pub fn as_str(self) -> &'static str {
        match self {
            Backend::NuSvrLinear => "nu_svr_linear",
            Backend::NuSvrRbf => "nu_svr_rbf",
            Backend::KernelOls => "kernel_ols",
            Backend::RandomForest => "random_forest",
            Backend::LastSeenValue => "last_seen_value",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Backend::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown backend `{s}`")))
    }
}

/// A backend together with concrete hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum RegressorSpec {
    NuSvrLinear { c: f64, nu: f64 },
    NuSvrRbf { c: f64, nu: f64, gamma: f64 },
    KernelOls { gamma: f64, ridge: f64 },
    RandomForest { trees: usize, feature_ratio: f64, seed: u64 },
    LastSeenValue,
}

impl RegressorSpec {
    pub fn backend(&self) -> Backend {
        match self {
            RegressorSpec::NuSvrLinear { .. } => Backend::NuSvrLinear,
            RegressorSpec::NuSvrRbf { .. } => Backend::NuSvrRbf,
            RegressorSpec::KernelOls { .. } => Backend::KernelOls,
            RegressorSpec::RandomForest { .. } => Backend::RandomForest,
            RegressorSpec::LastSeenValue => Backend::LastSeenValue,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::invalid(what));
        match *self {
            RegressorSpec::NuSvrLinear { c, .. } | RegressorSpec::NuSvrRbf { c, .. } if !(c > 0.0 && c.is_finite()) => {
                bad(format!("C must be positive, got {c}"))
            }
            RegressorSpec::NuSvrLinear { nu, .. } | RegressorSpec::NuSvrRbf { nu, .. } if !(nu > 0.0 && nu <= 1.0) => {
                bad(format!("nu must lie in (0, 1], got {nu}"))
            }
            RegressorSpec::NuSvrRbf { gamma, .. } | RegressorSpec::KernelOls { gamma, .. } if !(gamma > 0.0 && gamma.is_finite()) => {
                bad(format!("gamma must be positive, got {gamma}"))
            }
            RegressorSpec::KernelOls { ridge, .. } if !(ridge > 0.0) => bad(format!("ridge must be positive, got {ridge}")),
            RegressorSpec::RandomForest { trees, feature_ratio, .. } if trees == 0 || !(feature_ratio > 0.0 && feature_ratio <= 1.0) => {
                bad(format!("invalid forest parameters: trees={trees}, feature_ratio={feature_ratio}"))
            }
            _ => Ok(()),
        }
    }
}

/// Backend-specific learned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    /// `f(x) = sum_i coef_i K(sv_i, x) + bias` on standardized inputs.
    KernelExpansion { kernel: Kernel, support: Vec<Vec<f64>>, coef: Vec<f64>, bias: f64 },
    Forest(Forest),
    /// Returns the raw input slot holding `y_tau`.
    LastSeen { index: usize },
}

/// A fitted regressor; prediction is a pure function of its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedRegressor {
    spec: RegressorSpec,
    scaler: Scaler,
    params: ModelParams,
}

impl TrainedRegressor {
    pub fn spec(&self) -> &RegressorSpec {
        &self.spec
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.scaler.dim()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!("expected {} features, got {}", self.dim(), x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(match &self.params {
            ModelParams::LastSeen { index } => x[*index],
            ModelParams::KernelExpansion { kernel, support, coef, bias } => {
                let z = self.scaler.transform(x);
                support.iter().zip(coef).map(|(sv, c)| c * kernel.eval(sv, &z)).sum::<f64>() + bias
            }
            ModelParams::Forest(forest) => forest.predict(&self.scaler.transform(x)),
        })
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

fn check_problem(rows: &[Vec<f64>], targets: &[f64]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("no training rows"));
    }
    if rows.len() != targets.len() {
        return Err(Error::invalid(format!("{} rows but {} targets", rows.len(), targets.len())));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("non-finite target"));
    }
    Ok(())
}

/// Keeps only nonzero expansion terms.
fn sparse_expansion(rows: Vec<Vec<f64>>, coef: Vec<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    rows.into_iter().zip(coef).filter(|(_, c)| *c != 0.0).unzip()
}

/// Fits a ν-SVR with the given kernel; rows are standardized internally.
pub fn fit_nu_svr(rows: &[Vec<f64>], targets: &[f64], c: f64, nu: f64, kernel: Kernel) -> Result<TrainedRegressor> {
    fit_nu_svr_with(rows, targets, c, nu, kernel, SmoOptions::default())
}

pub fn fit_nu_svr_with(
    rows: &[Vec<f64>],
    targets: &[f64],
    c: f64,
    nu: f64,
    kernel: Kernel,
    opts: SmoOptions,
) -> Result<TrainedRegressor> {
    check_problem(rows, targets)?;
    let scaler = fit_scaler(rows)?;
    let z = scaler.transform_rows(rows);
    let gram = kernel.gram(&z);
    let dual = solve_nu_svr(&gram, targets, c, nu, opts)?;
    let (support, coef) = sparse_expansion(z, dual.coefficients());
    let spec = match kernel {
        Kernel::Linear => RegressorSpec::NuSvrLinear { c, nu },
        Kernel::Rbf { gamma } => RegressorSpec::NuSvrRbf { c, nu, gamma },
    };
    Ok(TrainedRegressor { spec, scaler, params: ModelParams::KernelExpansion { kernel, support, coef, bias: dual.bias } })
}

/// Kernel least squares with a small ridge for conditioning.
pub fn fit_kernel_ols(rows: &[Vec<f64>], targets: &[f64], kernel: Kernel, ridge: f64) -> Result<TrainedRegressor> {
    check_problem(rows, targets)?;
    let scaler = fit_scaler(rows)?;
    let z = scaler.transform_rows(rows);
    let sol = solve_kernel_ols(&z, targets, kernel, ridge)?;
    let gamma = match kernel {
        Kernel::Rbf { gamma } => gamma,
        // A linear-kernel fit is recorded with gamma 0; it is only reachable
        // through this function, never through a sampled spec.
        Kernel::Linear => 0.0,
    };
    let (support, coef) = sparse_expansion(z, sol.weights);
    Ok(TrainedRegressor {
        spec: RegressorSpec::KernelOls { gamma, ridge },
        scaler,
        params: ModelParams::KernelExpansion { kernel, support, coef, bias: sol.intercept },
    })
}

pub fn fit_random_forest(
    rows: &[Vec<f64>],
    targets: &[f64],
    trees: usize,
    feature_ratio: f64,
    seed: u64,
) -> Result<TrainedRegressor> {
    fit_random_forest_with(rows, targets, trees, feature_ratio, seed, ForestOptions::default())
}

pub fn fit_random_forest_with(
    rows: &[Vec<f64>],
    targets: &[f64],
    trees: usize,
    feature_ratio: f64,
    seed: u64,
    opts: ForestOptions,
) -> Result<TrainedRegressor> {
    check_problem(rows, targets)?;
    let scaler = fit_scaler(rows)?;
    let z = scaler.transform_rows(rows);
    let forest = fit_forest(&z, targets, trees, feature_ratio, seed, opts)?;
    Ok(TrainedRegressor {
        spec: RegressorSpec::RandomForest { trees, feature_ratio, seed },
        scaler,
        params: ModelParams::Forest(forest),
    })
}

/// The most recent observation `y_tau`.
pub fn predict_last_seen(curve: PartialCurve<'_>) -> f64 {
    curve.last()
}

/// Wraps the last-seen heuristic as a regressor reading the last `y_t` slot.
pub fn fit_last_seen(rows: &[Vec<f64>], layout: &[FeatureKey]) -> Result<TrainedRegressor> {
    let index = layout
        .iter()
        .enumerate()
        .filter_map(|(i, k)| match k {
            FeatureKey::Value(t) => Some((t, i)),
            _ => None,
        })
        .max_by_key(|(t, _)| **t)
        .map(|(_, i)| i)
        .ok_or_else(|| Error::invalid("last-seen-value needs the time-series feature block"))?;
    let scaler = fit_scaler(rows)?;
    if scaler.dim() != layout.len() {
        return Err(Error::invalid("layout does not match row width"));
    }
    Ok(TrainedRegressor { spec: RegressorSpec::LastSeenValue, scaler, params: ModelParams::LastSeen { index } })
}

/// Fits any spec on the given rows.
pub fn fit(spec: &RegressorSpec, rows: &[Vec<f64>], targets: &[f64], layout: &[FeatureKey]) -> Result<TrainedRegressor> {
    spec.validate()?;
    match *spec {
        RegressorSpec::NuSvrLinear { c, nu } => fit_nu_svr(rows, targets, c, nu, Kernel::Linear),
        RegressorSpec::NuSvrRbf { c, nu, gamma } => fit_nu_svr(rows, targets, c, nu, Kernel::Rbf { gamma }),
        RegressorSpec::KernelOls { gamma, ridge } => fit_kernel_ols(rows, targets, Kernel::Rbf { gamma }, ridge),
        RegressorSpec::RandomForest { trees, feature_ratio, seed } => {
            fit_random_forest(rows, targets, trees, feature_ratio, seed)
        }
        RegressorSpec::LastSeenValue => {
            check_problem(rows, targets)?;
            fit_last_seen(rows, layout)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn svr_constant_targets() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i) as f64]).collect();
        for kernel in [Kernel::Linear, Kernel::Rbf { gamma: 0.3 }] {
            let m = fit_nu_svr(&rows, &[0.61; 8], 2.0, 0.5, kernel).unwrap();
            for x in [vec![0.0, 0.0], vec![-40.0, 3.0], vec![7.0, 1000.0]] {
                assert!((m.predict(&x).unwrap() - 0.61).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn kernel_ols_single_point() {
        let m = fit_kernel_ols(&[vec![1.0, 2.0]], &[0.7], Kernel::Rbf { gamma: 1.0 }, DEFAULT_RIDGE).unwrap();
        assert!((m.predict(&[1.0, 2.0]).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn kernel_ols_interpolates_parabola() {
        let rows: Vec<Vec<f64>> = [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|&x| vec![x]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * r[0]).collect();
        let m = fit_kernel_ols(&rows, &y, Kernel::Rbf { gamma: 1.0 }, DEFAULT_RIDGE).unwrap();
        for (r, t) in rows.iter().zip(&y) {
            assert!((m.predict(r).unwrap() - t).abs() <= 1e-6);
        }
    }

    #[test]
    fn kernel_ols_linear_matches_normal_equations() {
        let xs = [0.5, 1.0, 2.5, 3.0, 4.25, 7.0];
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let y: Vec<f64> = xs.iter().map(|x| -1.5 * x + 4.0).collect();
        // normal equations for slope/intercept
        let n = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&y).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n;
        let m = fit_kernel_ols(&rows, &y, Kernel::Linear, DEFAULT_RIDGE).unwrap();
        for x in [0.0, 1.0, 10.0] {
            assert!((m.predict(&[x]).unwrap() - (slope * x + intercept)).abs() < 1e-6);
        }
    }

    #[test]
    fn forest_is_deterministic() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i % 5) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + 0.1 * r[1]).collect();
        let a = fit_random_forest(&rows, &y, 20, 0.5, 9).unwrap();
        let b = fit_random_forest(&rows, &y, 20, 0.5, 9).unwrap();
        for r in &rows {
            assert_eq!(a.predict(r).unwrap().to_bits(), b.predict(r).unwrap().to_bits());
        }
        let c = fit_random_forest(&rows, &[0.2; 40], 7, 0.3, 1).unwrap();
        assert!((c.predict(&[5.0, 5.0]).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn last_seen_reads_final_observation() {
        let layout = vec![
            FeatureKey::Value(1),
            FeatureKey::Value(2),
            FeatureKey::Value(3),
            FeatureKey::FirstDiff(2),
            FeatureKey::FirstDiff(3),
            FeatureKey::SecondDiff(3),
        ];
        let rows = vec![vec![0.1, 0.3, 0.4, 0.2, 0.1, -0.1], vec![0.2, 0.2, 0.2, 0.0, 0.0, 0.0]];
        let m = fit(&RegressorSpec::LastSeenValue, &rows, &[0.5, 0.5], &layout).unwrap();
        assert_eq!(m.predict(&rows[0]).unwrap(), 0.4);
        assert!(fit_last_seen(&rows, &vec![FeatureKey::Ap("x".into()); 6]).is_err());
    }

    #[test]
    fn last_seen_free_function() {
        let v = [0.1, 0.3, 0.4];
        assert_eq!(predict_last_seen(PartialCurve::new(&v, 5).unwrap()), 0.4);
        assert_eq!(predict_last_seen(PartialCurve::new(&[0.9], 2).unwrap()), 0.9);
        assert!(PartialCurve::new(&[], 2).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(RegressorSpec::NuSvrRbf { c: 1.0, nu: 1.5, gamma: 1.0 }.validate().is_err());
        assert!(RegressorSpec::NuSvrLinear { c: -1.0, nu: 0.5 }.validate().is_err());
        assert!(RegressorSpec::RandomForest { trees: 0, feature_ratio: 0.3, seed: 0 }.validate().is_err());
        assert!(RegressorSpec::KernelOls { gamma: 1.0, ridge: 1e-8 }.validate().is_ok());
        assert_eq!("nu_svr_rbf".parse::<Backend>().unwrap(), Backend::NuSvrRbf);
    }
}
