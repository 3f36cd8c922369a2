//! Offline experiments over complete curve datasets: sequential search with
//! early termination, prediction-quality sweeps, feature ablations and depth
//! generalization.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::curve::{FeatureSchema, FeatureSpace};
use crate::dataset::CurveDataset;
use crate::error::{Error, Result};
use crate::regression::{self, r_squared, random_search_cv, Backend, CvConfig};
use crate::seed;
use crate::srm::{featurize, fit_srm, SequentialRegressionModel, SrmOptions};
use crate::stopping::{should_terminate, BestScores, TerminationPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub orderings: usize,
    /// Configurations trained fully before the predictors are fitted.
    pub burn_in: usize,
    pub policy: TerminationPolicy,
    pub srm: SrmOptions,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            orderings: 10,
            burn_in: 100,
            policy: TerminationPolicy::default(),
            srm: SrmOptions::default(),
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.orderings == 0 {
            return Err(Error::invalid("at least one ordering is required"));
        }
        if self.burn_in >= n {
            return Err(Error::precondition(format!("burn-in {} must be below the dataset size {n}", self.burn_in)));
        }
        self.policy.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingResult {
    /// Record indices in reveal order.
    pub order: Vec<usize>,
    pub epochs_used: usize,
    pub epochs_saved: usize,
    pub terminated: usize,
    /// Terminations whose true final value reached the reference they were
    /// judged against.
    pub terminated_good: usize,
    pub recovered_optimal: bool,
    /// Best true final value among fully trained configurations, after each
    /// configuration.
    pub cumulative_best: Vec<f64>,
    /// Set when the ordering was aborted; it then contributes no metrics.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub orderings: Vec<OrderingResult>,
    /// `N * T`.
    pub full_epochs: usize,
    /// `N * T` over the mean epochs used by completed orderings.
    pub speedup: f64,
    /// Fraction of completed orderings that kept the optimum.
    pub recovery_rate: f64,
}

impl SimulationResult {
    pub fn recovered(&self) -> usize {
        self.completed().filter(|o| o.recovered_optimal).count()
    }

    pub fn completed(&self) -> impl Iterator<Item = &OrderingResult> {
        self.orderings.iter().filter(|o| o.error.is_none())
    }
}

/// An ordering with its predictors, reusable across policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedOrdering {
    pub order: Vec<usize>,
    pub model: core::result::Result<SequentialRegressionModel, String>,
}

/// Draws ordering `k` and fits its predictors on the burn-in curves.
pub fn prepare_ordering(dataset: &CurveDataset, sim: &SimulationConfig, k: usize) -> Result<PreparedOrdering> {
    sim.validate(dataset.len())?;
    let order = seed::permutation(dataset.len(), &mut seed::rng(seed::derive_path(sim.seed, &[k as u64, 0])));
    let mut srm = sim.srm.clone();
    srm.cv = srm.cv.with_seed(seed::derive_path(sim.seed, &[k as u64, 1]));
    let model = dataset
        .subset(&order[..sim.burn_in])
        .and_then(|train| fit_srm(&train, &srm))
        .map_err(|e| e.to_string());
    Ok(PreparedOrdering { order, model })
}

pub fn prepare_orderings(dataset: &CurveDataset, sim: &SimulationConfig) -> Result<Vec<PreparedOrdering>> {
    (0..sim.orderings).map(|k| prepare_ordering(dataset, sim, k)).collect()
}

/// Reveals the configurations of `prepared` in order under `policy`.
pub fn replay_ordering(
    dataset: &CurveDataset,
    prepared: &PreparedOrdering,
    burn_in: usize,
    policy: &TerminationPolicy,
) -> Result<OrderingResult> {
    policy.validate()?;
    let horizon = dataset.horizon();
    let finals = dataset.normalized_finals();
    let order = prepared.order.clone();
    let model = match &prepared.model {
        Ok(m) => m,
        Err(e) => {
            return Ok(OrderingResult {
                order,
                epochs_used: 0,
                epochs_saved: 0,
                terminated: 0,
                terminated_good: 0,
                recovered_optimal: false,
                cumulative_best: Vec::new(),
                error: Some(e.clone()),
            })
        }
    };
    let o = dataset.orientation();
    let mut ledger = BestScores::new();
    let mut best_true = f64::NEG_INFINITY;
    let mut cumulative_best = Vec::with_capacity(order.len());
    let (mut epochs_used, mut terminated, mut terminated_good) = (0, 0, 0);
    let mut completed = alloc::vec![false; dataset.len()];
    for (pos, &i) in order.iter().enumerate() {
        let record = &dataset.records()[i];
        let mut stopped_at = None;
        if pos >= burn_in && ledger.len() >= policy.top_n {
            let curve = o.normalize_all(record.curve.values());
            for tau in 1..horizon {
                if !model.has_tau(tau) {
                    continue;
                }
                let (y_hat, sigma) = model.predict_normalized(&record.config, &curve[..tau])?;
                let d = should_terminate(policy, y_hat, sigma, ledger.values())?;
                if d.terminate() {
                    stopped_at = Some((tau, y_hat, d.reference));
                    break;
                }
            }
        }
        match stopped_at {
            Some((tau, y_hat, reference)) => {
                epochs_used += tau;
                terminated += 1;
                if reference.is_some_and(|r| finals[i] >= r) {
                    terminated_good += 1;
                }
                ledger.update(y_hat)?;
            }
            None => {
                epochs_used += horizon;
                completed[i] = true;
                ledger.update(finals[i])?;
                if finals[i] > best_true {
                    best_true = finals[i];
                }
            }
        }
        cumulative_best.push(best_true);
    }
    let optimum = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let recovered_optimal = finals.iter().zip(&completed).any(|(f, c)| *c && *f == optimum);
    let full = dataset.len() * horizon;
    Ok(OrderingResult {
        order,
        epochs_used,
        epochs_saved: full - epochs_used,
        terminated,
        terminated_good,
        recovered_optimal,
        cumulative_best,
        error: None,
    })
}

/// Aggregates per-ordering results.
pub fn summarize(dataset: &CurveDataset, orderings: Vec<OrderingResult>) -> Result<SimulationResult> {
    let full_epochs = dataset.len() * dataset.horizon();
    let done: Vec<&OrderingResult> = orderings.iter().filter(|o| o.error.is_none()).collect();
    if done.is_empty() {
        let why = orderings.iter().filter_map(|o| o.error.clone()).collect();
        return Err(Error::AllCandidatesFailed(why));
    }
    let mean_used = done.iter().map(|o| o.epochs_used as f64).sum::<f64>() / done.len() as f64;
    let recovery_rate = done.iter().filter(|o| o.recovered_optimal).count() as f64 / done.len() as f64;
    Ok(SimulationResult { orderings, full_epochs, speedup: full_epochs as f64 / mean_used, recovery_rate })
}

/// Replays prepared orderings under several policies.
pub fn simulate_policies(
    dataset: &CurveDataset,
    prepared: &[PreparedOrdering],
    burn_in: usize,
    policies: &[TerminationPolicy],
) -> Result<Vec<SimulationResult>> {
    policies
        .iter()
        .map(|p| {
            let runs = prepared.iter().map(|o| replay_ordering(dataset, o, burn_in, p)).collect::<Result<Vec<_>>>()?;
            summarize(dataset, runs)
        })
        .collect()
}

pub fn simulate_sequential_search(dataset: &CurveDataset, sim: &SimulationConfig) -> Result<SimulationResult> {
    let prepared = prepare_orderings(dataset, sim)?;
    let mut results = simulate_policies(dataset, &prepared, sim.burn_in, &[sim.policy])?;
    Ok(results.remove(0))
}

/// Shared settings of the prediction-quality experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub train_size: usize,
    pub repeats: usize,
    pub cv: CvConfig,
    pub schema: FeatureSchema,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { train_size: 100, repeats: 10, cv: CvConfig::default(), schema: FeatureSchema::ALL, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub backend: Backend,
    pub schema: FeatureSchema,
    pub fraction: f64,
    pub tau: usize,
    pub mean_r2: f64,
    pub std: f64,
    pub std_err: f64,
    pub r2: Vec<f64>,
}

/// `ceil(fraction * T)` kept inside `1..T`.
pub fn tau_for_fraction(fraction: f64, horizon: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    Ok((libm::ceil(fraction * horizon as f64 - 1e-9) as usize).clamp(1, horizon.saturating_sub(1).max(1)))
}

/// Mean, sample standard deviation and standard error of the mean.
pub fn mean_std_err(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let std = libm::sqrt(var);
    (mean, std, std / libm::sqrt(n))
}

/// What a sweep needs from a regressor: fit on `train` at `tau`, predict
/// normalized final values for `test`.
pub trait SweepPredictor {
    fn predict(
        &mut self,
        backend: Backend,
        schema: FeatureSchema,
        train: &CurveDataset,
        test: &CurveDataset,
        tau: usize,
        cv: &CvConfig,
    ) -> Result<Vec<f64>>;
}

/// Random-search CV, refit, predict.
#[derive(Debug, Clone, Copy, Default)]
pub struct CvPredictor;

impl SweepPredictor for CvPredictor {
    fn predict(
        &mut self,
        backend: Backend,
        schema: FeatureSchema,
        train: &CurveDataset,
        test: &CurveDataset,
        tau: usize,
        cv: &CvConfig,
    ) -> Result<Vec<f64>> {
        let space = FeatureSpace::new(schema, train.keys().clone());
        let (rows, targets, layout) = featurize(train, &space, tau)?;
        let (spec, _) = random_search_cv(&rows, &targets, &layout, cv, backend)?;
        let model = regression::fit(&spec, &rows, &targets, &layout)?;
        let (test_rows, _, _) = featurize(test, &space, tau)?;
        model.predict_rows(&test_rows)
    }
}

/// Shuffled indices of repeat `rep`; the head is the training split.
pub fn sweep_split(n: usize, seed_value: u64, rep: usize) -> Vec<usize> {
    seed::permutation(n, &mut seed::rng(seed::derive_path(seed_value, &[rep as u64, 0])))
}

/// Held-out R^2 per (schema, backend, fraction) cell; every cell sees the
/// same splits.
pub fn sweep_with<P: SweepPredictor>(
    dataset: &CurveDataset,
    cfg: &SweepConfig,
    schemas: &[FeatureSchema],
    fractions: &[f64],
    backends: &[Backend],
    predictor: &mut P,
) -> Result<Vec<SweepCell>> {
    if cfg.train_size + 2 > dataset.len() {
        return Err(Error::precondition(format!(
            "train size {} leaves fewer than 2 held-out curves of {}",
            cfg.train_size,
            dataset.len()
        )));
    }
    if cfg.repeats == 0 {
        return Err(Error::invalid("at least one repeat is required"));
    }
    let taus = fractions.iter().map(|&f| tau_for_fraction(f, dataset.horizon())).collect::<Result<Vec<_>>>()?;
    let mut r2 = alloc::vec![Vec::with_capacity(cfg.repeats); schemas.len() * fractions.len() * backends.len()];
    for rep in 0..cfg.repeats {
        let perm = sweep_split(dataset.len(), cfg.seed, rep);
        let train = dataset.subset(&perm[..cfg.train_size])?;
        let test = dataset.subset(&perm[cfg.train_size..])?;
        let truth = test.normalized_finals();
        let mut cell = 0;
        for &schema in schemas {
            for &tau in &taus {
                for &backend in backends {
                    let cv = cfg.cv.with_seed(seed::derive_path(cfg.seed, &[rep as u64, 1, tau as u64]));
                    let pred = predictor.predict(backend, schema, &train, &test, tau, &cv)?;
                    r2[cell].push(r_squared(&pred, &truth)?);
                    cell += 1;
                }
            }
        }
    }
    let mut out = Vec::with_capacity(r2.len());
    let mut cell = 0;
    for &schema in schemas {
        for (&fraction, &tau) in fractions.iter().zip(&taus) {
            for &backend in backends {
                let values = core::mem::take(&mut r2[cell]);
                let (mean_r2, std, std_err) = mean_std_err(&values);
                out.push(SweepCell { backend, schema, fraction, tau, mean_r2, std, std_err, r2: values });
                cell += 1;
            }
        }
    }
    Ok(out)
}

/// Mean held-out R^2 and its standard error per backend and fraction.
pub fn prediction_sweep(
    dataset: &CurveDataset,
    cfg: &SweepConfig,
    fractions: &[f64],
    backends: &[Backend],
) -> Result<Vec<SweepCell>> {
    sweep_with(dataset, cfg, &[cfg.schema], fractions, backends, &mut CvPredictor)
}

/// One sweep cell per feature subset.
pub fn ablation_eval(
    dataset: &CurveDataset,
    cfg: &SweepConfig,
    schemas: &[FeatureSchema],
    fraction: f64,
    backend: Backend,
) -> Result<Vec<SweepCell>> {
    sweep_with(dataset, cfg, schemas, &[fraction], &[backend], &mut CvPredictor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSplit {
    pub train: usize,
    pub test: usize,
    pub r2: f64,
}

/// Fits on configurations with `ap[depth_key] <= threshold` and scores the
/// deeper remainder.
pub fn depth_generalization_eval(
    dataset: &CurveDataset,
    depth_key: &str,
    threshold: f64,
    backend: Backend,
    schema: FeatureSchema,
    tau: usize,
    cv: &CvConfig,
) -> Result<DepthSplit> {
    let mut shallow = Vec::new();
    let mut deep = Vec::new();
    for (i, r) in dataset.records().iter().enumerate() {
        let depth = *r.config.ap.get(depth_key).ok_or_else(|| Error::MissingKey { key: format!("ap.{depth_key}") })?;
        if depth <= threshold {
            shallow.push(i);
        } else {
            deep.push(i);
        }
    }
    if shallow.is_empty() || deep.is_empty() {
        return Err(Error::precondition(format!("threshold {threshold} leaves one side of the split empty")));
    }
    if shallow.len() < cv.folds {
        return Err(Error::precondition(format!("{} training curves cannot fill {} folds", shallow.len(), cv.folds)));
    }
    let train = dataset.subset(&shallow)?;
    let test = dataset.subset(&deep)?;
    let pred = CvPredictor.predict(backend, schema, &train, &test, tau, cv)?;
    Ok(DepthSplit { train: shallow.len(), test: deep.len(), r2: r_squared(&pred, &test.normalized_finals())? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_to_tau() {
        assert_eq!(tau_for_fraction(0.25, 20).unwrap(), 5);
        assert_eq!(tau_for_fraction(0.1, 20).unwrap(), 2);
        assert_eq!(tau_for_fraction(0.99, 20).unwrap(), 19);
        assert!(tau_for_fraction(1.0, 20).is_err());
    }

    #[test]
    fn standard_error() {
        let (m, s, se) = mean_std_err(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - libm::sqrt(5.0 / 3.0)).abs() < 1e-15);
        assert!((se - s / 2.0).abs() < 1e-15);
        assert_eq!(mean_std_err(&[0.7]), (0.7, 0.0, 0.0));
    }
}
