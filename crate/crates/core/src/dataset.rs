use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::curve::{ConfigDescriptor, KeySet, LearningCurve, MetricOrientation};
use crate::error::{Error, Result};

/// One configuration with its complete curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub config: ConfigDescriptor,
    pub curve: LearningCurve,
}

impl CurveRecord {
    pub fn id(&self) -> &str {
        self.curve.id()
    }
}

/// A validated collection of complete curves sharing horizon, key sets and
/// metric orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDataset {
    orientation: MetricOrientation,
    horizon: usize,
    keys: KeySet,
    records: Vec<CurveRecord>,
}

/// Training data for sequential regression models.
pub type CurveTrainingSet = CurveDataset;

impl CurveDataset {
    pub fn new(orientation: MetricOrientation, records: Vec<CurveRecord>) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::invalid("dataset has no records"))?;
        let horizon = first.curve.horizon();
        let keys = KeySet::of(&first.config);
        let mut ids = BTreeSet::new();
        for r in &records {
            let id = r.id();
            if r.curve.horizon() != horizon {
                return Err(Error::invalid(format!(
                    "record `{id}` has {} epochs, expected {horizon}",
                    r.curve.horizon()
                )));
            }
            keys.check(&r.config).map_err(|e| Error::invalid(format!("record `{id}`: {e}")))?;
            r.config.validate().map_err(|e| Error::invalid(format!("record `{id}`: {e}")))?;
            r.curve.check_range(orientation)?;
            if !ids.insert(id) {
                return Err(Error::invalid(format!("duplicate record id `{id}`")));
            }
        }
        Ok(CurveDataset { orientation, horizon, keys, records })
    }

    pub fn orientation(&self) -> MetricOrientation {
        self.orientation
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn keys(&self) -> &KeySet {
        &self.keys
    }

    pub fn records(&self) -> &[CurveRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<CurveDataset> {
        let records = indices
            .iter()
            .map(|&i| {
                self.records.get(i).cloned().ok_or_else(|| Error::invalid(format!("record index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        if records.is_empty() {
            return Err(Error::invalid("empty subset"));
        }
        Ok(CurveDataset { orientation: self.orientation, horizon: self.horizon, keys: self.keys.clone(), records })
    }

    /// Final values on the higher-is-better scale.
    pub fn normalized_finals(&self) -> Vec<f64> {
        self.records.iter().map(|r| self.orientation.normalize(r.curve.final_value())).collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(CurveRecord::id)
    }

    /// Position of the record named `id`.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id() == id)
    }

    /// Every curve truncated to `len` epochs.
    pub fn truncated(&self, len: usize) -> Result<CurveDataset> {
        let records = self
            .records
            .iter()
            .map(|r| Ok(CurveRecord { config: r.config.clone(), curve: r.curve.truncated(len)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(CurveDataset { orientation: self.orientation, horizon: len, keys: self.keys.clone(), records })
    }
}

/// Builds a dataset from `(id, config, values)` triples.
pub fn dataset_from_parts(
    orientation: MetricOrientation,
    parts: impl IntoIterator<Item = (String, ConfigDescriptor, Vec<f64>)>,
) -> Result<CurveDataset> {
    let records = parts
        .into_iter()
        .map(|(id, config, values)| Ok(CurveRecord { config, curve: LearningCurve::new(id, values)? }))
        .collect::<Result<Vec<_>>>()?;
    CurveDataset::new(orientation, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeMap;
    use alloc::string::ToString;
    use alloc::vec;

    fn cfg(layers: f64) -> ConfigDescriptor {
        let mut ap = BTreeMap::new();
        ap.insert("layers".to_string(), layers);
        ConfigDescriptor::new(ap, BTreeMap::new())
    }

    #[test]
    fn rejects_horizon_mismatch() {
        let err = dataset_from_parts(
            MetricOrientation::HigherIsBetter,
            vec![("a".into(), cfg(1.0), vec![0.1, 0.2]), ("b".into(), cfg(2.0), vec![0.1])],
        )
        .unwrap_err();
        assert!(err.to_string().contains("`b`"));
    }

    #[test]
    fn rejects_key_mismatch_and_range() {
        let other = ConfigDescriptor::default();
        assert!(dataset_from_parts(
            MetricOrientation::HigherIsBetter,
            vec![("a".into(), cfg(1.0), vec![0.1]), ("b".into(), other, vec![0.1])],
        )
        .is_err());
        assert!(dataset_from_parts(MetricOrientation::HigherIsBetter, vec![("a".into(), cfg(1.0), vec![1.5])]).is_err());
        assert!(dataset_from_parts(MetricOrientation::LowerIsBetter, vec![("a".into(), cfg(1.0), vec![1.5])]).is_ok());
    }

    #[test]
    fn normalized_finals_negate_perplexity() {
        let d = dataset_from_parts(MetricOrientation::LowerIsBetter, vec![("a".into(), cfg(1.0), vec![90.0, 80.0])])
            .unwrap();
        assert_eq!(d.normalized_finals(), vec![-80.0]);
    }
}
