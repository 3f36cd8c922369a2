//! Sequential regression models: one regressor per observation length plus a
//! leave-one-out uncertainty estimate for each.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::curve::{ConfigDescriptor, FeatureKey, FeatureSchema, FeatureSpace, MetricOrientation, PartialCurve};
use crate::dataset::CurveTrainingSet;
use crate::error::{Error, Result};
use crate::regression::{self, random_search_cv, Backend, CvConfig, RegressorSpec, TrainedRegressor};
use crate::seed;
use crate::stopping::DEFAULT_SIGMA_FLOOR;

/// How to fit a sequential regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrmOptions {
    pub backend: Backend,
    pub cv: CvConfig,
    pub schema: FeatureSchema,
    /// Observation lengths to fit; `None` means every `1..T`.
    pub taus: Option<Vec<usize>>,
    pub sigma_floor: f64,
}

impl Default for SrmOptions {
    fn default() -> Self {
        SrmOptions {
            backend: Backend::NuSvrRbf,
            cv: CvConfig::default(),
            schema: FeatureSchema::ALL,
            taus: None,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
        }
    }
}

/// Trained per-tau regressors with their uncertainty table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialRegressionModel {
    space: FeatureSpace,
    horizon: usize,
    orientation: MetricOrientation,
    models: BTreeMap<usize, TrainedRegressor>,
    sigma: BTreeMap<usize, f64>,
    sigma_floor: f64,
}

impl SequentialRegressionModel {
    /// Assembles a model from its parts, checking the table invariants.
    pub fn from_parts(
        space: FeatureSpace,
        horizon: usize,
        orientation: MetricOrientation,
        models: BTreeMap<usize, TrainedRegressor>,
        sigma: BTreeMap<usize, f64>,
        sigma_floor: f64,
    ) -> Result<Self> {
        if !models.keys().eq(sigma.keys()) {
            return Err(Error::invalid("model and sigma tables cover different tau keys"));
        }
        if let Some((tau, s)) = sigma.iter().find(|(_, s)| !(s.is_finite() && **s >= sigma_floor)) {
            return Err(Error::invalid(format!("sigma({tau}) = {s} is below the floor {sigma_floor}")));
        }
        if let Some(tau) = models.keys().find(|&&t| t == 0 || t >= horizon) {
            return Err(Error::invalid(format!("tau {tau} outside 1..{horizon}")));
        }
        for (tau, m) in &models {
            if m.dim() != space.layout(*tau).len() {
                return Err(Error::invalid(format!("model at tau {tau} expects {} features", m.dim())));
            }
        }
        if !(sigma_floor > 0.0) {
            return Err(Error::invalid("sigma floor must be positive"));
        }
        Ok(SequentialRegressionModel { space, horizon, orientation, models, sigma, sigma_floor })
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn schema(&self) -> FeatureSchema {
        self.space.schema
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn orientation(&self) -> MetricOrientation {
        self.orientation
    }

    pub fn models(&self) -> &BTreeMap<usize, TrainedRegressor> {
        &self.models
    }

    pub fn sigma_table(&self) -> &BTreeMap<usize, f64> {
        &self.sigma
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    /// Re-checks the invariants of a model obtained by deserialization.
    pub fn validated(self) -> Result<Self> {
        let SequentialRegressionModel { space, horizon, orientation, models, sigma, sigma_floor } = self;
        Self::from_parts(space, horizon, orientation, models, sigma, sigma_floor)
    }

    pub fn taus(&self) -> Vec<usize> {
        self.models.keys().copied().collect()
    }

    pub fn has_tau(&self, tau: usize) -> bool {
        self.models.contains_key(&tau)
    }

    fn model_at(&self, tau: usize) -> Result<(&TrainedRegressor, f64)> {
        match (self.models.get(&tau), self.sigma.get(&tau)) {
            (Some(m), Some(s)) => Ok((m, *s)),
            _ => Err(Error::NotFitted { tau, available: self.taus() }),
        }
    }

    /// Prediction and sigma on the higher-is-better scale for an already
    /// normalized prefix.
    pub fn predict_normalized(&self, config: &ConfigDescriptor, prefix: &[f64]) -> Result<(f64, f64)> {
        let tau = prefix.len();
        let (model, sigma) = self.model_at(tau)?;
        let x = self.space.assemble(PartialCurve::new(prefix, self.horizon)?, config)?;
        Ok((model.predict(x.entries())?, sigma))
    }

    /// Predicts the final value from a raw prefix; the prediction is
    /// reported in raw orientation, sigma is orientation-free.
    pub fn predict_final(&self, config: &ConfigDescriptor, prefix: &[f64]) -> Result<(f64, f64)> {
        let normalized = self.orientation.normalize_all(prefix);
        let (y_hat, sigma) = self.predict_normalized(config, &normalized)?;
        Ok((self.orientation.denormalize(y_hat), sigma))
    }
}

/// Regression rows for every curve observed at `tau`, with normalized final
/// values as targets.
pub fn featurize(train: &CurveTrainingSet, space: &FeatureSpace, tau: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<FeatureKey>)> {
    let o = train.orientation();
    let mut rows = Vec::with_capacity(train.len());
    for r in train.records() {
        let normalized = o.normalize_all(r.curve.values());
        let view = PartialCurve::new(&normalized[..tau.min(normalized.len())], train.horizon())?;
        if view.tau() != tau {
            return Err(Error::precondition(format!("tau = {tau} exceeds horizon {}", train.horizon())));
        }
        rows.push(space.assemble(view, &r.config)?.into_entries());
    }
    Ok((rows, train.normalized_finals(), space.layout(tau)))
}

/// Root mean square of leave-one-out residuals, floored.
///
/// `predict_left_out(i)` must fit on every row except `i` and return the
/// prediction for row `i`.
pub fn loocv_sigma<F>(targets: &[f64], sigma_floor: f64, mut predict_left_out: F) -> Result<f64>
where
    F: FnMut(usize) -> Result<f64>,
{
    if targets.len() < 2 {
        return Err(Error::precondition("leave-one-out needs at least 2 rows"));
    }
    let mut sum_sq = 0.0;
    for (i, y) in targets.iter().enumerate() {
        let r = predict_left_out(i)? - y;
        sum_sq += r * r;
    }
    let sigma = libm::sqrt(sum_sq / targets.len() as f64);
    if !sigma.is_finite() {
        return Err(Error::invalid("leave-one-out residuals are not finite"));
    }
    Ok(sigma.max(sigma_floor))
}

/// LOOCV sigma for a fixed spec on prepared rows.
pub fn loocv_sigma_for_spec(
    spec: &RegressorSpec,
    rows: &[Vec<f64>],
    targets: &[f64],
    layout: &[FeatureKey],
    sigma_floor: f64,
) -> Result<f64> {
    loocv_sigma(targets, sigma_floor, |i| {
        let (tr_rows, tr_y): (Vec<Vec<f64>>, Vec<f64>) = rows
            .iter()
            .zip(targets)
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, (r, y))| (r.clone(), *y))
            .unzip();
        regression::fit(spec, &tr_rows, &tr_y, layout)?.predict(&rows[i])
    })
}

/// LOOCV uncertainty for one observation length, using `spec` unchanged on
/// every fold.
pub fn estimate_sigma_loocv(
    train: &CurveTrainingSet,
    spec: &RegressorSpec,
    schema: FeatureSchema,
    tau: usize,
    sigma_floor: f64,
) -> Result<f64> {
    let space = FeatureSpace::new(schema, train.keys().clone());
    let (rows, targets, layout) = featurize(train, &space, tau)?;
    loocv_sigma_for_spec(spec, &rows, &targets, &layout, sigma_floor)
}

/// Fits the regressor and sigma for one tau.
pub fn fit_tau(
    train: &CurveTrainingSet,
    space: &FeatureSpace,
    tau: usize,
    opts: &SrmOptions,
) -> Result<(TrainedRegressor, f64)> {
    let (rows, targets, layout) = featurize(train, space, tau)?;
    let cv = opts.cv.with_seed(seed::derive(opts.cv.seed, tau as u64));
    let (spec, _) = random_search_cv(&rows, &targets, &layout, &cv, opts.backend)?;
    let model = regression::fit(&spec, &rows, &targets, &layout)?;
    let sigma = loocv_sigma_for_spec(&spec, &rows, &targets, &layout, opts.sigma_floor)?;
    Ok((model, sigma))
}

/// Fits one model per requested tau on complete curves.
pub fn fit_srm(train: &CurveTrainingSet, opts: &SrmOptions) -> Result<SequentialRegressionModel> {
    let horizon = train.horizon();
    if horizon < 2 {
        return Err(Error::precondition("horizon must be at least 2"));
    }
    opts.cv.validate()?;
    if train.len() < opts.cv.folds {
        return Err(Error::precondition(format!("{} curves cannot fill {} folds", train.len(), opts.cv.folds)));
    }
    let taus: Vec<usize> = match &opts.taus {
        Some(t) => t.clone(),
        None => (1..horizon).collect(),
    };
    if let Some(bad) = taus.iter().find(|&&t| t == 0 || t >= horizon) {
        return Err(Error::precondition(format!("tau {bad} outside 1..{horizon}")));
    }
    let space = FeatureSpace::new(opts.schema, train.keys().clone());
    let mut models = BTreeMap::new();
    let mut sigma = BTreeMap::new();
    for &tau in &taus {
        let (m, s) = fit_tau(train, &space, tau, opts).map_err(|e| Error::TauFit { tau, source: Box::new(e) })?;
        models.insert(tau, m);
        sigma.insert(tau, s);
    }
    SequentialRegressionModel::from_parts(space, horizon, train.orientation(), models, sigma, opts.sigma_floor)
}
