//! Learning curves, configuration descriptors and featurization.
//!
//! A regression input is built from three blocks, always in this order:
//! the time-series block (observed values, first differences, second
//! differences), the architecture block (AP) and the hyperparameter block
//! (HP). AP and HP values are emitted in lexicographic key order.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which direction of the raw metric is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricOrientation {
    /// Accuracy-like metrics in `[0, 1]`.
    #[default]
    HigherIsBetter,
    /// Loss-like metrics such as perplexity, strictly positive.
    LowerIsBetter,
}

impl MetricOrientation {
    /// Maps a raw metric value onto the internal higher-is-better scale.
    pub fn normalize(self, raw: f64) -> f64 {
        match self {
            MetricOrientation::HigherIsBetter => raw,
            MetricOrientation::LowerIsBetter => -raw,
        }
    }

    /// Inverse of [`normalize`](Self::normalize) (negation is an involution).
    pub fn denormalize(self, score: f64) -> f64 {
        self.normalize(score)
    }

    pub fn normalize_all(self, raw: &[f64]) -> Vec<f64> {
        raw.iter().map(|&v| self.normalize(v)).collect()
    }

    /// Whether `raw` lies in the valid range for this kind of metric.
    pub fn is_valid_raw(self, raw: f64) -> bool {
        match self {
            MetricOrientation::HigherIsBetter => (0.0..=1.0).contains(&raw),
            MetricOrientation::LowerIsBetter => raw.is_finite() && raw > 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricOrientation::HigherIsBetter => "higher_is_better",
            MetricOrientation::LowerIsBetter => "lower_is_better",
        }
    }
}

impl fmt::Display for MetricOrientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricOrientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "higher_is_better" => Ok(MetricOrientation::HigherIsBetter),
            "lower_is_better" => Ok(MetricOrientation::LowerIsBetter),
            other => Err(Error::invalid(format!("unknown orientation `{other}`"))),
        }
    }
}

/// A complete per-configuration learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    id: String,
    values: Vec<f64>,
}

impl LearningCurve {
    /// Builds a complete curve; the horizon is the number of values.
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::invalid(format!("curve `{id}` has no values")));
        }
        if let Some(t) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("curve `{id}` has a non-finite value at epoch {}", t + 1)));
        }
        Ok(LearningCurve { id, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The final value `y_T`.
    pub fn final_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// The first `tau` observations as a partial view.
    pub fn partial(&self, tau: usize) -> Result<PartialCurve<'_>> {
        if tau == 0 || tau > self.horizon() {
            return Err(Error::precondition(format!(
                "tau = {tau} outside 1..={} for curve `{}`",
                self.horizon(),
                self.id
            )));
        }
        Ok(PartialCurve { values: &self.values[..tau], horizon: self.horizon() })
    }

    /// Checks every value against the metric range of `orientation`.
    pub fn check_range(&self, orientation: MetricOrientation) -> Result<()> {
        match self.values.iter().position(|&v| !orientation.is_valid_raw(v)) {
            None => Ok(()),
            Some(t) => Err(Error::invalid(format!(
                "curve `{}` value {} at epoch {} is out of range for {orientation}",
                self.id,
                self.values[t],
                t + 1
            ))),
        }
    }

    /// The same curve on the higher-is-better scale.
    pub fn normalized(&self, orientation: MetricOrientation) -> LearningCurve {
        LearningCurve { id: self.id.clone(), values: orientation.normalize_all(&self.values) }
    }

    /// Truncates to the first `len` epochs (used for intermediate-resource targets).
    pub fn truncated(&self, len: usize) -> Result<LearningCurve> {
        let view = self.partial(len)?;
        Ok(LearningCurve { id: self.id.clone(), values: view.values.to_vec() })
    }
}

/// A prefix `y_1..y_tau` of a curve with target horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialCurve<'a> {
    values: &'a [f64],
    horizon: usize,
}

impl<'a> PartialCurve<'a> {
    pub fn new(values: &'a [f64], horizon: usize) -> Result<Self> {
        if values.is_empty() || values.len() > horizon {
            return Err(Error::precondition(format!(
                "partial curve of length {} incompatible with horizon {horizon}",
                values.len()
            )));
        }
        Ok(PartialCurve { values, horizon })
    }

    pub fn tau(&self) -> usize {
        self.values.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Architecture parameters and training hyperparameters of one configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigDescriptor {
    pub ap: BTreeMap<String, f64>,
    pub hp: BTreeMap<String, f64>,
}

/// AP keys with integer semantics.
pub const WEIGHTS_KEY: &str = "weights";
pub const LAYERS_KEY: &str = "layers";

impl ConfigDescriptor {
    pub fn new(ap: BTreeMap<String, f64>, hp: BTreeMap<String, f64>) -> Self {
        ConfigDescriptor { ap, hp }
    }

    /// Checks value sanity: finite everywhere, integer weight and layer counts.
    pub fn validate(&self) -> Result<()> {
        for (block, map) in [("ap", &self.ap), ("hp", &self.hp)] {
            if let Some((k, v)) = map.iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::invalid(format!("{block}.{k} = {v} is not finite")));
            }
        }
        if let Some(&w) = self.ap.get(WEIGHTS_KEY) {
            if w < 0.0 || libm::trunc(w) != w {
                return Err(Error::invalid(format!("ap.{WEIGHTS_KEY} = {w} must be a nonnegative integer")));
            }
        }
        if let Some(&l) = self.ap.get(LAYERS_KEY) {
            if l < 1.0 || libm::trunc(l) != l {
                return Err(Error::invalid(format!("ap.{LAYERS_KEY} = {l} must be a positive integer")));
            }
        }
        Ok(())
    }
}

/// The AP and HP key sets shared by every configuration of a dataset,
/// each sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeySet {
    pub ap: Vec<String>,
    pub hp: Vec<String>,
}

impl KeySet {
    pub fn of(config: &ConfigDescriptor) -> Self {
        // BTreeMap iteration is already lexicographic.
        KeySet { ap: config.ap.keys().cloned().collect(), hp: config.hp.keys().cloned().collect() }
    }

    /// Verifies `config` carries exactly these keys.
    pub fn check(&self, config: &ConfigDescriptor) -> Result<()> {
        for (block, keys, map) in [("ap", &self.ap, &config.ap), ("hp", &self.hp, &config.hp)] {
            if let Some(k) = keys.iter().find(|k| !map.contains_key(k.as_str())) {
                return Err(Error::MissingKey { key: format!("{block}.{k}") });
            }
            if map.len() != keys.len() {
                let extra = map.keys().find(|k| !keys.contains(k)).cloned().unwrap_or_default();
                return Err(Error::invalid(format!("unexpected key {block}.{extra}")));
            }
        }
        Ok(())
    }
}

/// Which feature blocks enter the regression input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSchema {
    use_ts: bool,
    use_ap: bool,
    use_hp: bool,
}

impl FeatureSchema {
    pub const TS: FeatureSchema = FeatureSchema { use_ts: true, use_ap: false, use_hp: false };
    pub const AP: FeatureSchema = FeatureSchema { use_ts: false, use_ap: true, use_hp: false };
    pub const HP: FeatureSchema = FeatureSchema { use_ts: false, use_ap: false, use_hp: true };
    pub const ALL: FeatureSchema = FeatureSchema { use_ts: true, use_ap: true, use_hp: true };

    pub fn new(use_ts: bool, use_ap: bool, use_hp: bool) -> Result<Self> {
        if !(use_ts || use_ap || use_hp) {
            return Err(Error::invalid("feature schema must enable at least one block"));
        }
        Ok(FeatureSchema { use_ts, use_ap, use_hp })
    }

    pub fn use_ts(&self) -> bool {
        self.use_ts
    }

    pub fn use_ap(&self) -> bool {
        self.use_ap
    }

    pub fn use_hp(&self) -> bool {
        self.use_hp
    }

    /// The six subsets compared in feature ablations.
    pub fn ablation_subsets() -> [FeatureSchema; 6] {
        [
            FeatureSchema::TS,
            FeatureSchema::AP,
            FeatureSchema::HP,
            FeatureSchema { use_ts: true, use_ap: true, use_hp: false },
            FeatureSchema { use_ts: false, use_ap: true, use_hp: true },
            FeatureSchema::ALL,
        ]
    }
}

impl Default for FeatureSchema {
    fn default() -> Self {
        FeatureSchema::ALL
    }
}

impl fmt::Display for FeatureSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [(self.use_ts, "ts"), (self.use_ap, "ap"), (self.use_hp, "hp")]
            .into_iter()
            .filter_map(|(on, name)| on.then_some(name))
            .collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for FeatureSchema {
    type Err = Error;

    /// Parses `ts+ap+hp`-style strings (any order, `+` or `,` separated).
    fn from_str(s: &str) -> Result<Self> {
        let (mut ts, mut ap, mut hp) = (false, false, false);
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "ts" => ts = true,
                "ap" => ap = true,
                "hp" => hp = true,
                other => return Err(Error::invalid(format!("unknown feature block `{other}`"))),
            }
        }
        FeatureSchema::new(ts, ap, hp)
    }
}

/// Provenance of one slot in a feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKey {
    /// `y_t`
    Value(usize),
    /// `y_t - y_{t-1}`
    FirstDiff(usize),
    /// `y'_t - y'_{t-1}`
    SecondDiff(usize),
    Ap(String),
    Hp(String),
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKey::Value(t) => write!(f, "y{t}"),
            FeatureKey::FirstDiff(t) => write!(f, "dy{t}"),
            FeatureKey::SecondDiff(t) => write!(f, "ddy{t}"),
            FeatureKey::Ap(k) => write!(f, "ap.{k}"),
            FeatureKey::Hp(k) => write!(f, "hp.{k}"),
        }
    }
}

/// A regression input together with its slot layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    entries: Vec<f64>,
    layout: Vec<FeatureKey>,
}

impl FeatureVector {
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn layout(&self) -> &[FeatureKey] {
        &self.layout
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }
}

/// Observed values followed by first and second differences.
///
/// Requires `1 <= tau <= T - 1`; differences that do not exist for tiny
/// `tau` are omitted rather than padded.
pub fn extract_ts_features(curve: PartialCurve<'_>) -> Result<Vec<f64>> {
    let tau = curve.tau();
    if tau == 0 || tau >= curve.horizon() {
        return Err(Error::precondition(format!("tau = {tau} outside 1..{}", curve.horizon())));
    }
    let y = curve.values();
    let first: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let second = first.windows(2).map(|w| w[1] - w[0]);
    let mut out = Vec::with_capacity(3 * tau);
    out.extend_from_slice(y);
    out.extend_from_slice(&first);
    out.extend(second);
    Ok(out)
}

/// Layout of the time-series block for `tau` observations.
fn ts_layout(tau: usize) -> impl Iterator<Item = FeatureKey> {
    (1..=tau)
        .map(FeatureKey::Value)
        .chain((2..=tau).map(FeatureKey::FirstDiff))
        .chain((3..=tau).map(FeatureKey::SecondDiff))
}

/// A feature schema bound to a dataset's key sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub schema: FeatureSchema,
    pub keys: KeySet,
}

impl FeatureSpace {
    pub fn new(schema: FeatureSchema, keys: KeySet) -> Self {
        FeatureSpace { schema, keys }
    }

    /// Slot layout for observation length `tau`.
    pub fn layout(&self, tau: usize) -> Vec<FeatureKey> {
        let mut layout = Vec::new();
        if self.schema.use_ts {
            layout.extend(ts_layout(tau));
        }
        if self.schema.use_ap {
            layout.extend(self.keys.ap.iter().cloned().map(FeatureKey::Ap));
        }
        if self.schema.use_hp {
            layout.extend(self.keys.hp.iter().cloned().map(FeatureKey::Hp));
        }
        layout
    }

    /// Builds the regression input for a partial curve and its configuration.
    pub fn assemble(&self, curve: PartialCurve<'_>, config: &ConfigDescriptor) -> Result<FeatureVector> {
        let mut entries = Vec::new();
        if self.schema.use_ts {
            entries.extend(extract_ts_features(curve)?);
        } else if curve.tau() == 0 || curve.tau() >= curve.horizon() {
            return Err(Error::precondition(format!("tau = {} outside 1..{}", curve.tau(), curve.horizon())));
        }
        for (use_block, block, keys, map) in [
            (self.schema.use_ap, "ap", &self.keys.ap, &config.ap),
            (self.schema.use_hp, "hp", &self.keys.hp, &config.hp),
        ] {
            if !use_block {
                continue;
            }
            for k in keys {
                let v = map.get(k).ok_or_else(|| Error::MissingKey { key: format!("{block}.{k}") })?;
                entries.push(*v);
            }
        }
        Ok(FeatureVector { entries, layout: self.layout(curve.tau()) })
    }
}

/// Free-function form of [`FeatureSpace::assemble`].
pub fn assemble_feature_vector(
    curve: PartialCurve<'_>,
    config: &ConfigDescriptor,
    schema: FeatureSchema,
    keys: &KeySet,
) -> Result<FeatureVector> {
    FeatureSpace::new(schema, keys.clone()).assemble(curve, config)
}

/// Parses `key=value` pairs; handy for tests and command-line input.
pub fn parse_key_values(s: &str) -> Result<BTreeMap<String, f64>> {
    let mut map = BTreeMap::new();
    for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("expected key=value, got `{pair}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::invalid(format!("`{v}` is not a number")))?;
        map.insert(k.trim().to_string(), v);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn curve(values: &[f64]) -> LearningCurve {
        LearningCurve::new("c", values.to_vec()).unwrap()
    }

    #[test]
    fn ts_features_constant_curve() {
        let c = curve(&[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(extract_ts_features(c.partial(3).unwrap()).unwrap(), vec![0.5, 0.5, 0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ts_features_differences() {
        let c = curve(&[0.1, 0.3, 0.4, 0.5]);
        let f = extract_ts_features(c.partial(3).unwrap()).unwrap();
        let expected = [0.1, 0.3, 0.4, 0.2, 0.1, -0.1];
        assert_eq!(f.len(), 6);
        for (a, b) in f.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn ts_features_single_point() {
        let c = curve(&[0.7, 0.8]);
        assert_eq!(extract_ts_features(c.partial(1).unwrap()).unwrap(), vec![0.7]);
    }

    #[test]
    fn ts_features_reject_full_and_empty() {
        let c = curve(&[0.1, 0.2, 0.3]);
        assert!(matches!(extract_ts_features(c.partial(3).unwrap()), Err(Error::Precondition(_))));
        assert!(c.partial(0).is_err());
    }

    #[test]
    fn assemble_all_blocks_in_key_order() {
        let mut ap = BTreeMap::new();
        ap.insert("weights".to_string(), 1000.0);
        ap.insert("layers".to_string(), 2.0);
        let mut hp = BTreeMap::new();
        hp.insert("lr".to_string(), 0.01);
        let config = ConfigDescriptor::new(ap, hp);
        let c = curve(&[0.5, 0.6]);
        let fv = assemble_feature_vector(c.partial(1).unwrap(), &config, FeatureSchema::ALL, &KeySet::of(&config))
            .unwrap();
        assert_eq!(fv.entries(), &[0.5, 2.0, 1000.0, 0.01]);
        assert_eq!(
            fv.layout(),
            &[
                FeatureKey::Value(1),
                FeatureKey::Ap("layers".into()),
                FeatureKey::Ap("weights".into()),
                FeatureKey::Hp("lr".into())
            ]
        );
    }

    #[test]
    fn assemble_ap_only_ignores_tau() {
        let mut ap = BTreeMap::new();
        ap.insert("layers".to_string(), 3.0);
        let config = ConfigDescriptor::new(ap, BTreeMap::new());
        let space = FeatureSpace::new(FeatureSchema::AP, KeySet::of(&config));
        let c = curve(&[0.1, 0.2, 0.3, 0.4]);
        for tau in 1..4 {
            assert_eq!(space.assemble(c.partial(tau).unwrap(), &config).unwrap().entries(), &[3.0]);
        }
    }

    #[test]
    fn assemble_missing_key_is_named() {
        let keys = KeySet { ap: vec!["layers".into()], hp: vec![] };
        let config = ConfigDescriptor::default();
        let c = curve(&[0.1, 0.2]);
        let err = assemble_feature_vector(c.partial(1).unwrap(), &config, FeatureSchema::ALL, &keys).unwrap_err();
        assert_eq!(err, Error::MissingKey { key: "ap.layers".into() });
    }

    #[test]
    fn orientation_round_trip() {
        let o = MetricOrientation::LowerIsBetter;
        assert_eq!(o.normalize(o.normalize(42.5)), 42.5);
        assert_eq!(MetricOrientation::HigherIsBetter.normalize(0.3), 0.3);
        assert!(!MetricOrientation::HigherIsBetter.is_valid_raw(1.2));
        assert!(!o.is_valid_raw(0.0));
    }

    #[test]
    fn schema_parsing() {
        assert_eq!("ts+ap+hp".parse::<FeatureSchema>().unwrap(), FeatureSchema::ALL);
        assert_eq!("hp".parse::<FeatureSchema>().unwrap(), FeatureSchema::HP);
        assert!("".parse::<FeatureSchema>().is_err());
        assert!(FeatureSchema::new(false, false, false).is_err());
        assert_eq!(FeatureSchema::ALL.to_string(), "ts+ap+hp");
    }

    #[test]
    fn descriptor_validation() {
        let mut ap = BTreeMap::new();
        ap.insert(LAYERS_KEY.to_string(), 0.0);
        assert!(ConfigDescriptor::new(ap, BTreeMap::new()).validate().is_err());
        let mut ap = BTreeMap::new();
        ap.insert(WEIGHTS_KEY.to_string(), 10.5);
        assert!(ConfigDescriptor::new(ap, BTreeMap::new()).validate().is_err());
    }
}
