//! Hyperband and its predictor-assisted variant.
//!
//! All scores inside the scheduler are on the higher-is-better scale; oracles
//! report raw metric values and declare their orientation.

mod oracle;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use oracle::{ReplayOracle, ReplaySampler, SyntheticOracle, SyntheticSampler};

use crate::curve::{ConfigDescriptor, FeatureSchema, LearningCurve, MetricOrientation};
use crate::dataset::{CurveDataset, CurveRecord};
use crate::error::{Error, Result};
use crate::regression::{Backend, CvConfig};
use crate::seed;
use crate::srm::{fit_srm, SequentialRegressionModel, SrmOptions};
use crate::stopping::{should_terminate, update_best, TerminationPolicy, DEFAULT_SIGMA_FLOOR};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbandParams {
    /// Maximum epochs granted to one configuration.
    pub max_resource: usize,
    pub eta: f64,
}

impl HyperbandParams {
    pub fn new(max_resource: usize, eta: f64) -> Result<Self> {
        let p = HyperbandParams { max_resource, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_resource == 0 {
            return Err(Error::invalid("maximum resource must be at least 1"));
        }
        if !(self.eta > 1.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must exceed 1, got {}", self.eta)));
        }
        Ok(())
    }

    /// `floor(log_eta R)`, exact for integral powers.
    pub fn s_max(&self) -> usize {
        let r = self.max_resource as f64;
        let mut s = libm::floor(libm::log(r) / libm::log(self.eta) + EPS).max(0.0) as usize;
        while s > 0 && libm::pow(self.eta, s as f64) > r * (1.0 + EPS) {
            s -= 1;
        }
        while libm::pow(self.eta, (s + 1) as f64) <= r * (1.0 + EPS) {
            s += 1;
        }
        s
    }

    /// Total budget per bracket, `(s_max + 1) R`.
    pub fn budget(&self) -> usize {
        (self.s_max() + 1) * self.max_resource
    }
}

impl Default for HyperbandParams {
    fn default() -> Self {
        HyperbandParams { max_resource: 81, eta: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub n: usize,
    pub r: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub s: usize,
    pub n: usize,
    /// Starting resource, `R eta^-s` (possibly fractional before rounding).
    pub r: f64,
    pub rounds: Vec<Round>,
}

impl Bracket {
    pub fn head(&self) -> Round {
        self.rounds[0]
    }
}

/// Every bracket from `s_max` down to 0 with its halving rounds.
pub fn bracket_schedule(params: &HyperbandParams) -> Result<Vec<Bracket>> {
    params.validate()?;
    let s_max = params.s_max();
    let big_r = params.max_resource as f64;
    let eta = params.eta;
    let brackets = (0..=s_max)
        .rev()
        .map(|s| {
            let n = libm::ceil((s_max + 1) as f64 * libm::pow(eta, s as f64) / (s + 1) as f64 - EPS) as usize;
            let r = big_r * libm::pow(eta, -(s as f64));
            let rounds = (0..=s)
                .map(|i| Round {
                    n: libm::floor(n as f64 * libm::pow(eta, -(i as f64)) + EPS) as usize,
                    r: (libm::floor(r * libm::pow(eta, i as f64) + EPS) as usize).max(1),
                })
                .collect();
            Bracket { s, n, r, rounds }
        })
        .collect();
    Ok(brackets)
}

/// Survivor count after a round: `floor(n_i / eta)`.
pub fn survivors(n_i: usize, eta: f64) -> usize {
    libm::floor(n_i as f64 / eta + EPS) as usize
}

/// Indices of the `k` highest scores; ties go to the earlier position.
/// `k` larger than the list returns everything.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // NaN never enters the ledger; treat it as worst if it does.
    idx.sort_by(|&a, &b| {
        let (x, y) = (scores[a], scores[b]);
        y.partial_cmp(&x).unwrap_or_else(|| x.is_nan().cmp(&y.is_nan())).then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// The `k`-th largest value, or `None` for the minus-infinity sentinel.
pub fn max_k(values: &[f64], k: usize) -> Option<f64> {
    if k == 0 || values.len() < k {
        return None;
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    Some(v[k - 1]).filter(|x| x.is_finite())
}

/// A configuration handed out by a sampler. `key` addresses the oracle's
/// state for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub key: u64,
    pub config: ConfigDescriptor,
}

pub trait EpochOracle {
    /// Trains `candidate` one more epoch and returns the raw metric.
    fn run_one_epoch(&mut self, candidate: &Candidate) -> Result<f64>;
    /// Forgets all progress of `candidate`.
    fn reset(&mut self, candidate: &Candidate) -> Result<()>;
    fn orientation(&self) -> MetricOrientation;
}

pub trait ConfigSampler {
    fn sample(&mut self, rng: &mut seed::Rng) -> Result<Candidate>;
}

impl<T: EpochOracle + ?Sized> EpochOracle for &mut T {
    fn run_one_epoch(&mut self, candidate: &Candidate) -> Result<f64> {
        (**self).run_one_epoch(candidate)
    }

    fn reset(&mut self, candidate: &Candidate) -> Result<()> {
        (**self).reset(candidate)
    }

    fn orientation(&self) -> MetricOrientation {
        (**self).orientation()
    }
}

impl<T: ConfigSampler + ?Sized> ConfigSampler for &mut T {
    fn sample(&mut self, rng: &mut seed::Rng) -> Result<Candidate> {
        (**self).sample(rng)
    }
}

/// What happens to a configuration promoted to a larger resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResumeMode {
    /// Continue from the recorded curve.
    #[default]
    Resume,
    /// Retrain from epoch 1.
    Restart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub run: usize,
    pub bracket: usize,
    pub round: usize,
    pub n_i: usize,
    pub r_i: usize,
    pub evaluated: usize,
    pub kept: usize,
    /// The survivor count asked for more configurations than were evaluated.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub run: usize,
    pub bracket: usize,
    pub round: usize,
    pub key: u64,
    pub r: usize,
    /// Normalized score entered into the round's list.
    pub score: f64,
    /// Epochs observed when the score was fixed.
    pub observed: usize,
    pub predicted: bool,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub run: usize,
    pub bracket: usize,
    pub round: usize,
    pub key: u64,
    pub r: usize,
    pub tau: usize,
    pub y_hat: f64,
    pub sigma: f64,
    pub probability: f64,
    pub reference: Option<f64>,
    pub terminated: bool,
    /// Length of the round's score list when the decision was taken.
    pub snapshot_len: usize,
}

/// Everything a scheduler run did.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLedger {
    pub resume: ResumeMode,
    pub rounds: Vec<RoundRecord>,
    pub evaluations: Vec<Evaluation>,
    pub decisions: Vec<DecisionRecord>,
    pub epochs_per_config: BTreeMap<u64, usize>,
    /// Best true score at full resource after each full-resource evaluation.
    pub cumulative_best: Vec<f64>,
    pub total_epochs: usize,
    /// Epochs the no-stopping schedule would have spent on terminated rounds.
    pub epochs_saved: usize,
    pub notes: Vec<String>,
}

impl RunLedger {
    fn charge(&mut self, key: u64) {
        *self.epochs_per_config.entry(key).or_insert(0) += 1;
        self.total_epochs += 1;
    }

    /// Appends another run's records.
    pub fn extend(&mut self, other: RunLedger) {
        self.rounds.extend(other.rounds);
        self.evaluations.extend(other.evaluations);
        self.decisions.extend(other.decisions);
        for (k, e) in other.epochs_per_config {
            *self.epochs_per_config.entry(k).or_insert(0) += e;
        }
        let prev = self.cumulative_best.last().copied();
        self.cumulative_best
            .extend(other.cumulative_best.into_iter().map(|b| prev.map_or(b, |p| if b > p { b } else { p })));
        self.total_epochs += other.total_epochs;
        self.epochs_saved += other.epochs_saved;
        self.notes.extend(other.notes);
    }

    pub fn terminations(&self) -> usize {
        self.decisions.iter().filter(|d| d.terminated).count()
    }
}

/// Best configuration of a run with its true full-resource score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub best: Option<Candidate>,
    pub best_score: Option<f64>,
    pub ledger: RunLedger,
}

/// A round score; `genuine` is false for predictions and failures.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    score: f64,
    genuine: bool,
}

/// Per-round progress of one configuration.
struct Slot<'a> {
    candidate: &'a Candidate,
    curve: &'a mut Vec<f64>,
}

struct RoundCtx {
    run: usize,
    bracket: usize,
    round: usize,
    r: usize,
    n_next: usize,
}

/// Brings `curve` (normalized) up to `r` epochs without any checks.
fn extend_curve(
    oracle: &mut dyn EpochOracle,
    ledger: &mut RunLedger,
    candidate: &Candidate,
    curve: &mut Vec<f64>,
    r: usize,
) -> Result<()> {
    let o = oracle.orientation();
    while curve.len() < r {
        let v = oracle.run_one_epoch(candidate)?;
        ledger.charge(candidate.key);
        if !v.is_finite() {
            return Err(Error::Oracle(format!("non-finite value {v} for config {}", candidate.key)));
        }
        curve.push(o.normalize(v));
    }
    Ok(())
}

fn prepare_round(oracle: &mut dyn EpochOracle, resume: ResumeMode, slot: &mut Slot<'_>) -> Result<()> {
    if resume == ResumeMode::Restart && !slot.curve.is_empty() {
        oracle.reset(slot.candidate)?;
        slot.curve.clear();
    }
    Ok(())
}

fn record_failure(ledger: &mut RunLedger, ctx: &RoundCtx, key: u64, observed: usize, err: &Error) -> f64 {
    ledger.notes.push(format!("run {} bracket {} round {}: config {key} failed: {err}", ctx.run, ctx.bracket, ctx.round));
    ledger.evaluations.push(Evaluation {
        run: ctx.run,
        bracket: ctx.bracket,
        round: ctx.round,
        key,
        r: ctx.r,
        score: f64::NEG_INFINITY,
        observed,
        predicted: false,
        failed: true,
    });
    f64::NEG_INFINITY
}

fn record_score(ledger: &mut RunLedger, ctx: &RoundCtx, key: u64, score: f64, observed: usize, predicted: bool) {
    ledger.evaluations.push(Evaluation {
        run: ctx.run,
        bracket: ctx.bracket,
        round: ctx.round,
        key,
        r: ctx.r,
        score,
        observed,
        predicted,
        failed: false,
    });
}

/// Plain successive-halving round: every configuration trains to `r`.
fn vanilla_round(
    oracle: &mut dyn EpochOracle,
    ledger: &mut RunLedger,
    ctx: &RoundCtx,
    slots: &mut [Slot<'_>],
) -> Result<Vec<Scored>> {
    let mut scores = Vec::with_capacity(slots.len());
    for slot in slots.iter_mut() {
        let outcome = prepare_round(oracle, ledger.resume, slot)
            .and_then(|_| extend_curve(oracle, ledger, slot.candidate, slot.curve, ctx.r));
        let score = match outcome {
            Ok(()) => {
                let s = slot.curve[ctx.r - 1];
                record_score(ledger, ctx, slot.candidate.key, s, ctx.r, false);
                Scored { score: s, genuine: true }
            }
            Err(e) => Scored { score: record_failure(ledger, ctx, slot.candidate.key, slot.curve.len(), &e), genuine: false },
        };
        scores.push(score);
    }
    Ok(scores)
}

/// Options for the per-resource predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorOptions {
    pub backend: Backend,
    pub cv: CvConfig,
    pub schema: FeatureSchema,
    pub sigma_floor: f64,
}

impl Default for PredictorOptions {
    fn default() -> Self {
        PredictorOptions {
            backend: Backend::NuSvrRbf,
            cv: CvConfig::default().with_budget(50),
            schema: FeatureSchema::ALL,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FHyperbandParams {
    pub base: HyperbandParams,
    pub delta_threshold: f64,
    pub offset: f64,
    /// Complete curves required at a resource before its predictors train.
    pub d: usize,
    pub kappa: f64,
    pub predictor: PredictorOptions,
    pub resume: ResumeMode,
}

impl FHyperbandParams {
    pub fn new(base: HyperbandParams) -> Self {
        FHyperbandParams {
            base,
            delta_threshold: 0.95,
            offset: 0.0,
            d: 100,
            kappa: 0.5,
            predictor: PredictorOptions::default(),
            resume: ResumeMode::Resume,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.policy(1)?;
        if self.d == 0 {
            return Err(Error::invalid("d must be at least 1"));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::invalid(format!("kappa must lie in (0, 1], got {}", self.kappa)));
        }
        Ok(())
    }

    /// `max(1, ceil(kappa * n_next))`.
    pub fn reference_rank(&self, n_next: usize) -> usize {
        (libm::ceil(self.kappa * n_next as f64 - EPS) as usize).max(1)
    }

    fn policy(&self, top_n: usize) -> Result<TerminationPolicy> {
        let p = TerminationPolicy::new(self.delta_threshold)?
            .with_offset(self.offset)
            .with_top_n(top_n);
        let p = TerminationPolicy { sigma_floor: self.predictor.sigma_floor, ..p };
        p.validate()?;
        Ok(p)
    }
}

/// Training curves and fitted predictors per resource level.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictorStore {
    orientation: MetricOrientation,
    /// Raw curves of exactly `r` epochs with their descriptors.
    data: BTreeMap<usize, Vec<(ConfigDescriptor, Vec<f64>)>>,
    models: BTreeMap<usize, SequentialRegressionModel>,
    failures: BTreeMap<usize, String>,
}

impl PredictorStore {
    pub fn new(orientation: MetricOrientation) -> Self {
        PredictorStore { orientation, ..Default::default() }
    }

    /// Rows held at `D[r][tau]`; equal for every `tau < r`.
    pub fn rows(&self, r: usize, tau: usize) -> usize {
        if tau == 0 || tau >= r {
            return 0;
        }
        self.data.get(&r).map_or(0, Vec::len)
    }

    pub fn curves(&self, r: usize) -> usize {
        self.data.get(&r).map_or(0, Vec::len)
    }

    pub fn model(&self, r: usize) -> Option<&SequentialRegressionModel> {
        self.models.get(&r)
    }

    pub fn has_model(&self, r: usize, tau: usize) -> bool {
        self.models.get(&r).is_some_and(|m| m.has_tau(tau))
    }

    pub fn trained_resources(&self) -> Vec<usize> {
        self.models.keys().copied().collect()
    }

    pub fn failures(&self) -> &BTreeMap<usize, String> {
        &self.failures
    }

    fn push(&mut self, r: usize, d: usize, config: &ConfigDescriptor, normalized: &[f64]) {
        let rows = self.data.entry(r).or_default();
        if rows.len() < d {
            let raw = normalized.iter().map(|&v| self.orientation.denormalize(v)).collect();
            rows.push((config.clone(), raw));
        }
    }

    /// Trains `M[r]` once `D[r]` holds `d` curves.
    fn train_ready(&mut self, d: usize, opts: &PredictorOptions, seed: u64) -> Vec<String> {
        let mut notes = Vec::new();
        let ready: Vec<usize> = self
            .data
            .iter()
            .filter(|(r, rows)| **r >= 2 && rows.len() >= d && !self.models.contains_key(r) && !self.failures.contains_key(r))
            .map(|(r, _)| *r)
            .collect();
        for r in ready {
            match self.fit(r, opts, seed) {
                Ok(m) => {
                    notes.push(format!("trained predictors at r = {r} on {} curves", self.curves(r)));
                    self.models.insert(r, m);
                }
                Err(e) => {
                    notes.push(format!("predictor training at r = {r} failed: {e}"));
                    self.failures.insert(r, e.to_string());
                }
            }
        }
        notes
    }

    fn fit(&self, r: usize, opts: &PredictorOptions, seed: u64) -> Result<SequentialRegressionModel> {
        let records = self.data[&r]
            .iter()
            .enumerate()
            .map(|(i, (config, raw))| {
                Ok(CurveRecord { config: config.clone(), curve: LearningCurve::new(format!("d{r}-{i}"), raw.clone())? })
            })
            .collect::<Result<Vec<_>>>()?;
        let train = CurveDataset::new(self.orientation, records)?;
        let srm = SrmOptions {
            backend: opts.backend,
            cv: opts.cv.with_seed(seed::derive(seed, r as u64)),
            schema: opts.schema,
            taus: Some((1..r).collect()),
            sigma_floor: opts.sigma_floor,
        };
        fit_srm(&train, &srm)
    }
}

/// Checks the configuration at prefix length `tau`; returns the prediction
/// when it must stop.
#[allow(clippy::too_many_arguments)]
fn check(
    params: &FHyperbandParams,
    store: &PredictorStore,
    ledger: &mut RunLedger,
    ctx: &RoundCtx,
    candidate: &Candidate,
    prefix: &[f64],
    sorted_l: &[f64],
) -> Result<Option<f64>> {
    let tau = prefix.len();
    let Some(model) = store.model(ctx.r).filter(|m| m.has_tau(tau)) else {
        return Ok(None);
    };
    let (y_hat, sigma) = model.predict_normalized(&candidate.config, prefix)?;
    let policy = params.policy(params.reference_rank(ctx.n_next))?;
    let d = should_terminate(&policy, y_hat, sigma, sorted_l)?;
    ledger.decisions.push(DecisionRecord {
        run: ctx.run,
        bracket: ctx.bracket,
        round: ctx.round,
        key: candidate.key,
        r: ctx.r,
        tau,
        y_hat,
        sigma,
        probability: d.probability,
        reference: d.reference,
        terminated: d.terminate(),
        snapshot_len: sorted_l.len(),
    });
    Ok(d.terminate().then_some(y_hat))
}

/// One predictor-assisted halving round over `slots` at resource `ctx.r`.
fn predictive_round(
    params: &FHyperbandParams,
    store: &mut PredictorStore,
    oracle: &mut dyn EpochOracle,
    ledger: &mut RunLedger,
    ctx: &RoundCtx,
    slots: &mut [Slot<'_>],
) -> Result<Vec<Scored>> {
    let o = oracle.orientation();
    let mut scores = Vec::with_capacity(slots.len());
    let mut sorted_l: Vec<f64> = Vec::new();
    for slot in slots.iter_mut() {
        let key = slot.candidate.key;
        let run = (|| -> Result<(f64, usize, bool)> {
            prepare_round(oracle, ledger.resume, slot)?;
            // stored prefix: checked but not charged
            let stored = slot.curve.len().min(ctx.r);
            for tau in 1..=stored.min(ctx.r - 1) {
                if let Some(y_hat) = check(params, store, ledger, ctx, slot.candidate, &slot.curve[..tau], &sorted_l)? {
                    return Ok((y_hat, tau, true));
                }
            }
            while slot.curve.len() < ctx.r {
                let v = oracle.run_one_epoch(slot.candidate)?;
                ledger.charge(key);
                if !v.is_finite() {
                    return Err(Error::Oracle(format!("non-finite value {v} for config {key}")));
                }
                slot.curve.push(o.normalize(v));
                let tau = slot.curve.len();
                if tau < ctx.r {
                    if let Some(y_hat) = check(params, store, ledger, ctx, slot.candidate, &slot.curve[..], &sorted_l)? {
                        return Ok((y_hat, tau, true));
                    }
                }
            }
            Ok((slot.curve[ctx.r - 1], ctx.r, false))
        })();
        let score = match run {
            Ok((score, observed, predicted)) => {
                record_score(ledger, ctx, key, score, observed, predicted);
                if predicted {
                    ledger.epochs_saved += ctx.r - observed;
                } else {
                    store.push(ctx.r, params.d, &slot.candidate.config, &slot.curve[..ctx.r]);
                }
                sorted_l = update_best(sorted_l, score)?;
                Scored { score, genuine: !predicted }
            }
            Err(e) => {
                let s = record_failure(ledger, ctx, key, slot.curve.len(), &e);
                sorted_l = update_best(sorted_l, s)?;
                Scored { score: s, genuine: false }
            }
        };
        scores.push(score);
    }
    Ok(scores)
}

/// Shared outer loop; `round` runs one halving round.
fn drive<F>(
    params: &HyperbandParams,
    sampler: &mut dyn ConfigSampler,
    seed_value: u64,
    run: usize,
    resume: ResumeMode,
    mut round: F,
) -> Result<RunOutcome>
where
    F: FnMut(&RoundCtx, &mut [Slot<'_>], &mut RunLedger) -> Result<Vec<Scored>>,
{
    let brackets = bracket_schedule(params)?;
    let mut rng = seed::rng(seed_value);
    let mut ledger = RunLedger { resume, ..Default::default() };
    let mut best: Option<(Candidate, f64)> = None;
    for bracket in &brackets {
        let pool: Vec<Candidate> = (0..bracket.n).map(|_| sampler.sample(&mut rng)).collect::<Result<_>>()?;
        let mut curves: Vec<Vec<f64>> = alloc::vec![Vec::new(); pool.len()];
        let mut alive: Vec<usize> = (0..pool.len()).collect();
        for (i, r) in bracket.rounds.iter().enumerate() {
            let n_next = survivors(r.n, params.eta);
            let ctx = RoundCtx { run, bracket: bracket.s, round: i, r: r.r, n_next };
            let mut slots: Vec<Slot<'_>> = curves
                .iter_mut()
                .enumerate()
                .filter(|(j, _)| alive.binary_search(j).is_ok())
                .map(|(j, curve)| Slot { candidate: &pool[j], curve })
                .collect();
            let results = round(&ctx, &mut slots, &mut ledger)?;
            drop(slots);
            if r.r >= params.max_resource {
                for (&a, res) in alive.iter().zip(&results) {
                    if !res.genuine {
                        continue;
                    }
                    if best.as_ref().map_or(true, |(_, b)| res.score > *b) {
                        best = Some((pool[a].clone(), res.score));
                    }
                    let b = best.as_ref().map_or(res.score, |(_, b)| *b);
                    ledger.cumulative_best.push(b);
                }
            }
            let scores: Vec<f64> = results.iter().map(|x| x.score).collect();
            let kept_n = if i + 1 < bracket.rounds.len() { n_next } else { alive.len() };
            let clamped = kept_n > alive.len();
            let mut kept: Vec<usize> = top_k(&scores, kept_n).into_iter().map(|j| alive[j]).collect();
            kept.sort_unstable();
            if clamped {
                ledger.notes.push(format!(
                    "run {run} bracket {} round {i}: asked for {kept_n} survivors of {}",
                    bracket.s,
                    alive.len()
                ));
            }
            ledger.rounds.push(RoundRecord {
                run,
                bracket: bracket.s,
                round: i,
                n_i: r.n,
                r_i: r.r,
                evaluated: alive.len(),
                kept: kept.len(),
                clamped,
            });
            alive = kept;
        }
    }
    let (best, best_score) = match best {
        Some((c, s)) => (Some(c), Some(s)),
        None => (None, None),
    };
    Ok(RunOutcome { best, best_score, ledger })
}

pub fn run_hyperband(
    params: &HyperbandParams,
    oracle: &mut dyn EpochOracle,
    sampler: &mut dyn ConfigSampler,
    seed_value: u64,
) -> Result<RunOutcome> {
    run_hyperband_with(params, oracle, sampler, seed_value, ResumeMode::Resume)
}

pub fn run_hyperband_with(
    params: &HyperbandParams,
    oracle: &mut dyn EpochOracle,
    sampler: &mut dyn ConfigSampler,
    seed_value: u64,
    resume: ResumeMode,
) -> Result<RunOutcome> {
    drive(params, sampler, seed_value, 0, resume, |ctx, slots, ledger| vanilla_round(oracle, ledger, ctx, slots))
}

/// Algorithm state that persists across consecutive runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FHyperband {
    params: FHyperbandParams,
    store: PredictorStore,
    runs: usize,
}

impl FHyperband {
    pub fn new(params: FHyperbandParams, orientation: MetricOrientation) -> Result<Self> {
        params.validate()?;
        Ok(FHyperband { params, store: PredictorStore::new(orientation), runs: 0 })
    }

    pub fn params(&self) -> &FHyperbandParams {
        &self.params
    }

    pub fn store(&self) -> &PredictorStore {
        &self.store
    }

    /// One complete Hyperband run; training data and predictors carry over
    /// to the next call.
    pub fn run(
        &mut self,
        oracle: &mut dyn EpochOracle,
        sampler: &mut dyn ConfigSampler,
        seed_value: u64,
    ) -> Result<RunOutcome> {
        if oracle.orientation() != self.store.orientation {
            return Err(Error::precondition("oracle orientation differs from the predictor store"));
        }
        let run = self.runs;
        self.runs += 1;
        let params = &self.params;
        let store = &mut self.store;
        let train_seed = seed::derive(seed_value, 0x5eed);
        drive(&params.base, sampler, seed_value, run, params.resume, |ctx, slots, ledger| {
            let scores = run_then_return_validation_loss(params, store, oracle, ledger, ctx, slots)?;
            ledger.notes.extend(store.train_ready(params.d, &params.predictor, train_seed));
            Ok(scores)
        })
    }
}

/// One halving round with early termination. Scores of stopped
/// configurations are their predictions and are flagged in the ledger.
fn run_then_return_validation_loss(
    params: &FHyperbandParams,
    store: &mut PredictorStore,
    oracle: &mut dyn EpochOracle,
    ledger: &mut RunLedger,
    ctx: &RoundCtx,
    slots: &mut [Slot<'_>],
) -> Result<Vec<Scored>> {
    predictive_round(params, store, oracle, ledger, ctx, slots)
}

/// Runs one predictor-assisted round for `configs` at resource `r` outside
/// the bracket loop. `curves` hold normalized progress and are extended in
/// place.
#[allow(clippy::too_many_arguments)]
pub fn run_round(
    params: &FHyperbandParams,
    store: &mut PredictorStore,
    oracle: &mut dyn EpochOracle,
    configs: &[Candidate],
    curves: &mut [Vec<f64>],
    r: usize,
    n_next: usize,
    ledger: &mut RunLedger,
) -> Result<Vec<f64>> {
    if r == 0 {
        return Err(Error::precondition("resource must be at least 1"));
    }
    if configs.len() != curves.len() {
        return Err(Error::precondition("configs and curves differ in length"));
    }
    let ctx = RoundCtx { run: 0, bracket: 0, round: 0, r, n_next };
    let mut slots: Vec<Slot<'_>> =
        configs.iter().zip(curves.iter_mut()).map(|(candidate, curve)| Slot { candidate, curve }).collect();
    let scores = predictive_round(params, store, oracle, ledger, &ctx, &mut slots)?;
    ledger.notes.extend(store.train_ready(params.d, &params.predictor, seed::derive(0, 0x5eed)));
    Ok(scores.into_iter().map(|s| s.score).collect())
}

pub fn run_f_hyperband(
    params: &FHyperbandParams,
    oracle: &mut dyn EpochOracle,
    sampler: &mut dyn ConfigSampler,
    seed_value: u64,
) -> Result<RunOutcome> {
    FHyperband::new(params.clone(), oracle.orientation())?.run(oracle, sampler, seed_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn heads(r: usize, eta: f64) -> Vec<(usize, usize)> {
        bracket_schedule(&HyperbandParams::new(r, eta).unwrap()).unwrap().iter().map(|b| (b.head().n, b.head().r)).collect()
    }

    #[test]
    fn bracket_tables() {
        assert_eq!(heads(81, 3.0), vec![(81, 1), (34, 3), (15, 9), (8, 27), (5, 81)]);
        assert_eq!(heads(9, 3.0), vec![(9, 1), (5, 3), (3, 9)]);
        assert_eq!(heads(1, 3.0), vec![(1, 1)]);
        let p = HyperbandParams::new(81, 3.0).unwrap();
        assert_eq!((p.s_max(), p.budget()), (4, 405));
        let b = &bracket_schedule(&p).unwrap()[0];
        assert_eq!(b.rounds, vec![
            Round { n: 81, r: 1 },
            Round { n: 27, r: 3 },
            Round { n: 9, r: 9 },
            Round { n: 3, r: 27 },
            Round { n: 1, r: 81 }
        ]);
    }

    #[test]
    fn top_k_and_max_k() {
        assert_eq!(top_k(&[0.1, 0.9, 0.5], 1), vec![1]);
        assert!(top_k(&[0.1, 0.9], 0).is_empty());
        assert_eq!(top_k(&[0.5, 0.5, 0.7], 2), vec![2, 0]);
        assert_eq!(top_k(&[0.5], 4), vec![0]);
        assert_eq!(max_k(&[3.0, 1.0, 2.0], 1), Some(3.0));
        assert_eq!(max_k(&[3.0, 1.0, 2.0], 2), Some(2.0));
        assert_eq!(max_k(&[3.0], 5), None);
    }

    #[test]
    fn reference_rank_rounds_up() {
        let p = FHyperbandParams::new(HyperbandParams::default());
        assert_eq!(p.reference_rank(0), 1);
        assert_eq!(p.reference_rank(3), 2);
        assert_eq!(p.reference_rank(4), 2);
    }
}
