//! Parametric synthetic learning curves.
//!
//! Each curve follows `y(t) = y_inf - (y_inf - y0) * exp(-k t)` plus
//! stepwise jumps from scheduled learning-rate drops, per-epoch Gaussian noise
//! and a per-run offset of the asymptote. The curve parameters are linear
//! forms over (transformed) descriptor fields.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::curve::{ConfigDescriptor, LearningCurve, MetricOrientation};
use crate::dataset::{CurveDataset, CurveRecord};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Ap,
    Hp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    Log10,
}

/// `weight * ((transform(value) - center) / scale) ^ power`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingTerm {
    pub block: Block,
    pub key: String,
    pub transform: Transform,
    pub center: f64,
    pub scale: f64,
    pub power: i32,
    pub weight: f64,
}

impl CouplingTerm {
    pub fn new(block: Block, key: &str, transform: Transform, center: f64, scale: f64) -> Self {
        CouplingTerm { block, key: key.to_string(), transform, center, scale, power: 1, weight: 1.0 }
    }

    pub fn power(mut self, power: i32) -> Self {
        self.power = power;
        self
    }

    pub fn weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    fn eval(&self, config: &ConfigDescriptor) -> Result<f64> {
        let (map, prefix) = match self.block {
            Block::Ap => (&config.ap, "ap"),
            Block::Hp => (&config.hp, "hp"),
        };
        let raw = *map.get(&self.key).ok_or_else(|| Error::MissingKey { key: format!("{prefix}.{}", self.key) })?;
        let v = match self.transform {
            Transform::Identity => raw,
            Transform::Log10 => {
                if raw <= 0.0 {
                    return Err(Error::invalid(format!("{prefix}.{} = {raw} has no logarithm", self.key)));
                }
                libm::log10(raw)
            }
        };
        Ok(self.weight * libm::pow((v - self.center) / self.scale, self.power as f64))
    }
}

/// `clamp(base + sum(terms), min, max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearForm {
    pub base: f64,
    pub terms: Vec<CouplingTerm>,
    pub min: f64,
    pub max: f64,
}

impl LinearForm {
    pub fn constant(value: f64) -> Self {
        LinearForm { base: value, terms: Vec::new(), min: f64::NEG_INFINITY, max: f64::INFINITY }
    }

    pub fn new(base: f64, terms: Vec<CouplingTerm>, min: f64, max: f64) -> Self {
        LinearForm { base, terms, min, max }
    }

    pub fn eval(&self, config: &ConfigDescriptor) -> Result<f64> {
        let mut v = self.base;
        for t in &self.terms {
            v += t.eval(config)?;
        }
        Ok(v.clamp(self.min, self.max))
    }

    /// Drops every term reading `block`.
    pub fn without(&self, block: Block) -> Self {
        LinearForm { terms: self.terms.iter().filter(|t| t.block != block).cloned().collect(), ..self.clone() }
    }
}

/// How the curve parameters derive from a descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub y_final: LinearForm,
    pub rate: LinearForm,
    pub y_start: LinearForm,
    /// Multiplier on every drop height.
    pub drop_scale: LinearForm,
}

impl Coupling {
    pub fn constant(y_start: f64, y_final: f64, rate: f64) -> Self {
        Coupling {
            y_final: LinearForm::constant(y_final),
            rate: LinearForm::constant(rate),
            y_start: LinearForm::constant(y_start),
            drop_scale: LinearForm::constant(1.0),
        }
    }

    pub fn without(&self, block: Block) -> Self {
        Coupling {
            y_final: self.y_final.without(block),
            rate: self.rate.without(block),
            y_start: self.y_start.without(block),
            drop_scale: self.drop_scale.without(block),
        }
    }
}

/// A jump of `height` (times the drop scale) applied from `epoch` onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropStep {
    pub epoch: usize,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFamilySpec {
    pub horizon: usize,
    pub coupling: Coupling,
    pub drops: Vec<DropStep>,
    /// Per-epoch observation noise.
    pub noise_std: f64,
    /// Per-run shift of the asymptote, shared by all epochs of one curve.
    pub run_offset_std: f64,
    pub orientation: MetricOrientation,
    /// Values are clipped into this interval.
    pub clip: (f64, f64),
}

/// Curve parameters resolved for one descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    pub y_start: f64,
    pub y_final: f64,
    pub rate: f64,
    pub drop_scale: f64,
}

impl CurveFamilySpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if !(self.noise_std >= 0.0 && self.run_offset_std >= 0.0) {
            return Err(Error::invalid("noise levels must be nonnegative"));
        }
        if !(self.clip.0 < self.clip.1) {
            return Err(Error::invalid("empty clip interval"));
        }
        if let Some(d) = self.drops.iter().find(|d| d.epoch == 0 || !d.height.is_finite()) {
            return Err(Error::invalid(format!("bad drop step at epoch {}", d.epoch)));
        }
        Ok(())
    }

    pub fn params(&self, config: &ConfigDescriptor) -> Result<CurveParams> {
        Ok(CurveParams {
            y_start: self.coupling.y_start.eval(config)?,
            y_final: self.coupling.y_final.eval(config)?,
            rate: self.coupling.rate.eval(config)?,
            drop_scale: self.coupling.drop_scale.eval(config)?,
        })
    }

    /// Noise-free value at epoch `t` (1-based) for an asymptote shifted by
    /// `offset`, before clipping.
    pub fn closed_form(&self, p: &CurveParams, offset: f64, t: usize) -> f64 {
        let y_inf = p.y_final + offset;
        let mut y = y_inf - (y_inf - p.y_start) * libm::exp(-p.rate * t as f64);
        for d in self.drops.iter().filter(|d| d.epoch <= t) {
            y += d.height * p.drop_scale;
        }
        y
    }

    fn run_offset(&self, curve_seed: u64) -> f64 {
        if self.run_offset_std == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut seed::rng(seed::derive(curve_seed, 0)));
        self.run_offset_std * z
    }

    fn noise(&self, curve_seed: u64, t: usize) -> f64 {
        if self.noise_std == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut seed::rng(seed::derive(curve_seed, t as u64)));
        self.noise_std * z
    }

    /// Observed value at epoch `t`; each epoch draws from its own stream, so
    /// any single epoch can be evaluated without the others.
    pub fn value_at(&self, config: &ConfigDescriptor, curve_seed: u64, t: usize) -> Result<f64> {
        let p = self.params(config)?;
        Ok(self.observe(&p, self.run_offset(curve_seed), curve_seed, t))
    }

    fn observe(&self, p: &CurveParams, offset: f64, curve_seed: u64, t: usize) -> f64 {
        let y = self.closed_form(p, offset, t) + self.noise(curve_seed, t);
        y.clamp(self.clip.0, self.clip.1)
    }
}

/// Evaluates a complete curve of `spec.horizon` epochs.
pub fn render_curve(spec: &CurveFamilySpec, id: impl Into<String>, config: &ConfigDescriptor, curve_seed: u64) -> Result<LearningCurve> {
    spec.validate()?;
    let p = spec.params(config)?;
    let offset = spec.run_offset(curve_seed);
    let values = (1..=spec.horizon).map(|t| spec.observe(&p, offset, curve_seed, t)).collect();
    LearningCurve::new(id, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

/// Sampling range of one descriptor field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
    pub scale: Scale,
    /// Round samples to the nearest integer.
    pub integer: bool,
}

impl ParamRange {
    pub fn uniform(min: f64, max: f64) -> Self {
        ParamRange { min, max, scale: Scale::Linear, integer: false }
    }

    pub fn log_uniform(min: f64, max: f64) -> Self {
        ParamRange { min, max, scale: Scale::Log, integer: false }
    }

    pub fn integer(mut self) -> Self {
        self.integer = true;
        self
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::invalid(format!("range of {name} is empty or not finite")));
        }
        if self.scale == Scale::Log && self.min <= 0.0 {
            return Err(Error::invalid(format!("log range of {name} must be positive")));
        }
        Ok(())
    }

    fn sample(&self, u: f64) -> f64 {
        let v = match self.scale {
            Scale::Linear => self.min + u * (self.max - self.min),
            Scale::Log => {
                let (lo, hi) = (libm::log(self.min), libm::log(self.max));
                libm::exp(lo + u * (hi - lo))
            }
        };
        let v = if self.integer { libm::round(v) } else { v };
        v.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Identifies frozen presets; free-form otherwise.
    pub name: String,
    pub family: CurveFamilySpec,
    pub count: usize,
    pub ap: BTreeMap<String, ParamRange>,
    pub hp: BTreeMap<String, ParamRange>,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("count must be at least 1"));
        }
        self.family.validate()?;
        for (k, r) in self.ap.iter().map(|(k, r)| (format!("ap.{k}"), r)).chain(self.hp.iter().map(|(k, r)| (format!("hp.{k}"), r))) {
            r.validate(&k)?;
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_count(mut self, count: usize) -> Self {
        self.count = count;
        self
    }

    /// Seed of the noise streams of configuration `index`.
    pub fn curve_seed(&self, index: usize) -> u64 {
        seed::derive_path(self.seed, &[1, index as u64])
    }

    pub fn record_id(index: usize) -> String {
        format!("c{index:05}")
    }
}

/// Draws descriptor `index` without the `index < count` check; used by
/// open-ended samplers.
pub fn sample_config_unbounded(gen: &GeneratorConfig, index: usize) -> ConfigDescriptor {
    let mut rng = seed::rng(seed::derive_path(gen.seed, &[0, index as u64]));
    let mut draw = |ranges: &BTreeMap<String, ParamRange>| -> BTreeMap<String, f64> {
        ranges.iter().map(|(k, r)| (k.clone(), r.sample(rng.random::<f64>()))).collect()
    };
    let ap = draw(&gen.ap);
    let hp = draw(&gen.hp);
    ConfigDescriptor::new(ap, hp)
}

pub fn sample_config(gen: &GeneratorConfig, index: usize) -> Result<ConfigDescriptor> {
    if index >= gen.count {
        return Err(Error::precondition(format!("index {index} out of range for {} configurations", gen.count)));
    }
    Ok(sample_config_unbounded(gen, index))
}

/// The true final value of configuration `index`, computed from the
/// generator parameters alone.
pub fn final_value(gen: &GeneratorConfig, index: usize) -> Result<f64> {
    let config = sample_config(gen, index)?;
    gen.family.value_at(&config, gen.curve_seed(index), gen.family.horizon)
}

pub fn generate_dataset(gen: &GeneratorConfig) -> Result<CurveDataset> {
    gen.validate()?;
    let records = (0..gen.count)
        .map(|i| {
            let config = sample_config_unbounded(gen, i);
            let curve = render_curve(&gen.family, GeneratorConfig::record_id(i), &config, gen.curve_seed(i))?;
            Ok(CurveRecord { config, curve })
        })
        .collect::<Result<Vec<_>>>()?;
    CurveDataset::new(gen.family.orientation, records)
}

/// Version tag of the frozen benchmark preset.
pub const STANDARD_BENCHMARK: &str = "standard-v1";
pub const HP_DECOUPLED_BENCHMARK: &str = "standard-v1-hp-decoupled";
pub const HYPERBAND_WORKLOAD: &str = "hyperband-workload-v1";

fn lr_term() -> CouplingTerm {
    // log10(lr) in [-4, -1] maps to [-1, 1]
    CouplingTerm::new(Block::Hp, "learning_rate", Transform::Log10, -2.5, 1.5)
}

fn standard_family(horizon: usize, drop_epoch: usize) -> CurveFamilySpec {
    let weights = CouplingTerm::new(Block::Ap, "weights", Transform::Log10, 5.5, 1.5);
    let layers = CouplingTerm::new(Block::Ap, "layers", Transform::Identity, 11.0, 9.0);
    let momentum = CouplingTerm::new(Block::Hp, "momentum", Transform::Identity, 0.75, 0.2);
    CurveFamilySpec {
        horizon,
        coupling: Coupling {
            y_final: LinearForm::new(
                0.66,
                vec![
                    weights.clone().weight(0.065),
                    layers.clone().weight(0.04),
                    lr_term().power(2).weight(-0.13),
                    momentum.weight(0.04),
                ],
                0.2,
                0.92,
            ),
            rate: LinearForm::new(0.30, vec![lr_term().weight(0.12), layers.weight(-0.05)], 0.05, 2.0),
            y_start: LinearForm::new(0.12, vec![lr_term().weight(0.03)], 0.01, 0.5),
            drop_scale: LinearForm::new(1.0, vec![lr_term().weight(0.4)], 0.0, 3.0),
        },
        drops: vec![DropStep { epoch: drop_epoch, height: 0.08 }],
        noise_std: 0.01,
        run_offset_std: 0.012,
        orientation: MetricOrientation::HigherIsBetter,
        clip: (0.0, 1.0),
    }
}

fn standard_ranges() -> (BTreeMap<String, ParamRange>, BTreeMap<String, ParamRange>) {
    let mut ap = BTreeMap::new();
    ap.insert("layers".to_string(), ParamRange::uniform(2.0, 20.0).integer());
    ap.insert("weights".to_string(), ParamRange::log_uniform(1e4, 1e7).integer());
    let mut hp = BTreeMap::new();
    hp.insert("learning_rate".to_string(), ParamRange::log_uniform(1e-4, 1e-1));
    hp.insert("momentum".to_string(), ParamRange::uniform(0.55, 0.95));
    (ap, hp)
}

/// The frozen benchmark: 1000 configurations, 20 epochs, noise 0.01 and a
/// learning-rate drop at epoch 12.
pub fn standard_benchmark() -> GeneratorConfig {
    let (ap, hp) = standard_ranges();
    GeneratorConfig {
        name: STANDARD_BENCHMARK.to_string(),
        family: standard_family(20, 12),
        count: 1000,
        ap,
        hp,
        seed: 20_170_101,
    }
}

/// The benchmark with every coupling on training hyperparameters removed.
/// HP fields are still sampled but carry no signal.
pub fn hp_decoupled_benchmark() -> GeneratorConfig {
    let mut gen = standard_benchmark();
    gen.name = HP_DECOUPLED_BENCHMARK.to_string();
    gen.family.coupling = gen.family.coupling.without(Block::Hp);
    gen
}

/// Open-ended source of 27-epoch curves for scheduler runs.
pub fn hyperband_workload() -> GeneratorConfig {
    let (ap, hp) = standard_ranges();
    GeneratorConfig {
        name: HYPERBAND_WORKLOAD.to_string(),
        family: standard_family(27, 18),
        count: usize::MAX,
        ap,
        hp,
        seed: 27_031_017,
    }
}

/// Descriptors and noise streams addressed by index, for schedulers that
/// request configurations one at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSource {
    gen: GeneratorConfig,
}

impl SyntheticSource {
    pub fn new(gen: GeneratorConfig) -> Result<Self> {
        gen.validate()?;
        Ok(SyntheticSource { gen })
    }

    pub fn generator(&self) -> &GeneratorConfig {
        &self.gen
    }

    pub fn config(&self, index: usize) -> ConfigDescriptor {
        sample_config_unbounded(&self.gen, index)
    }

    /// Observed value of configuration `index` at epoch `t` (1-based).
    pub fn value(&self, index: usize, t: usize) -> Result<f64> {
        if t == 0 || t > self.gen.family.horizon {
            return Err(Error::precondition(format!("epoch {t} outside 1..={}", self.gen.family.horizon)));
        }
        self.gen.family.value_at(&self.config(index), self.gen.curve_seed(index), t)
    }

    pub fn final_value(&self, index: usize) -> Result<f64> {
        self.value(index, self.gen.family.horizon)
    }
}
