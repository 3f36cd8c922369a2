use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{Candidate, ConfigSampler, EpochOracle};
use crate::curve::MetricOrientation;
use crate::dataset::CurveDataset;
use crate::error::{Error, Result};
use crate::seed;
use crate::synth::SyntheticSource;

/// Serves epochs of generated curves; a candidate's key is its generator
/// index.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    source: SyntheticSource,
    progress: BTreeMap<u64, usize>,
    epochs: usize,
}

impl SyntheticOracle {
    pub fn new(source: SyntheticSource) -> Self {
        SyntheticOracle { source, progress: BTreeMap::new(), epochs: 0 }
    }

    pub fn source(&self) -> &SyntheticSource {
        &self.source
    }

    /// Epochs executed so far across all candidates.
    pub fn epochs(&self) -> usize {
        self.epochs
    }

    /// True final value of the candidate keyed `key`.
    pub fn final_value(&self, key: u64) -> Result<f64> {
        self.source.final_value(key as usize)
    }
}

impl EpochOracle for SyntheticOracle {
    fn run_one_epoch(&mut self, candidate: &Candidate) -> Result<f64> {
        let done = self.progress.entry(candidate.key).or_insert(0);
        let v = self.source.value(candidate.key as usize, *done + 1)?;
        *done += 1;
        self.epochs += 1;
        Ok(v)
    }

    fn reset(&mut self, candidate: &Candidate) -> Result<()> {
        self.progress.remove(&candidate.key);
        Ok(())
    }

    fn orientation(&self) -> MetricOrientation {
        self.source.generator().family.orientation
    }
}

/// Draws fresh generator indices from the run's random stream.
#[derive(Debug, Clone)]
pub struct SyntheticSampler {
    source: SyntheticSource,
}

impl SyntheticSampler {
    pub fn new(source: SyntheticSource) -> Self {
        SyntheticSampler { source }
    }
}

impl ConfigSampler for SyntheticSampler {
    fn sample(&mut self, rng: &mut seed::Rng) -> Result<Candidate> {
        // 53-bit keys survive a round trip through JSON numbers
        let key = rng.random::<u64>() >> 11;
        Ok(Candidate { key, config: self.source.config(key as usize) })
    }
}

/// Replays stored complete curves; a candidate's key is its record index.
#[derive(Debug, Clone)]
pub struct ReplayOracle<'a> {
    dataset: &'a CurveDataset,
    progress: BTreeMap<u64, usize>,
}

impl<'a> ReplayOracle<'a> {
    pub fn new(dataset: &'a CurveDataset) -> Self {
        ReplayOracle { dataset, progress: BTreeMap::new() }
    }
}

impl EpochOracle for ReplayOracle<'_> {
    fn run_one_epoch(&mut self, candidate: &Candidate) -> Result<f64> {
        let record = self
            .dataset
            .records()
            .get(candidate.key as usize)
            .ok_or_else(|| Error::Oracle(format!("no record {}", candidate.key)))?;
        let done = self.progress.entry(candidate.key).or_insert(0);
        let v = *record
            .curve
            .values()
            .get(*done)
            .ok_or_else(|| Error::Oracle(format!("record `{}` has no epoch {}", record.id(), *done + 1)))?;
        *done += 1;
        Ok(v)
    }

    fn reset(&mut self, candidate: &Candidate) -> Result<()> {
        self.progress.remove(&candidate.key);
        Ok(())
    }

    fn orientation(&self) -> MetricOrientation {
        self.dataset.orientation()
    }
}

/// Draws dataset records without replacement.
#[derive(Debug, Clone)]
pub struct ReplaySampler<'a> {
    dataset: &'a CurveDataset,
    remaining: Vec<usize>,
}

impl<'a> ReplaySampler<'a> {
    pub fn new(dataset: &'a CurveDataset) -> Self {
        ReplaySampler { dataset, remaining: (0..dataset.len()).collect() }
    }
}

impl ConfigSampler for ReplaySampler<'_> {
    fn sample(&mut self, rng: &mut seed::Rng) -> Result<Candidate> {
        if self.remaining.is_empty() {
            return Err(Error::Oracle("replay dataset exhausted".into()));
        }
        let i = self.remaining.swap_remove(rng.random_range(0..self.remaining.len()));
        Ok(Candidate { key: i as u64, config: self.dataset.records()[i].config.clone() })
    }
}
