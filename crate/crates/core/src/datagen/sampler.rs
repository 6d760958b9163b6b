use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::split::Subset;
use crate::error::{LabError, Result};
use crate::Batch;
use crate::rng::stream_rng;

const STREAM_SAMPLER: u64 = 0x5a;

/// Draws batches holding exactly `per_domain_batch` samples from every
/// source domain.
///
/// An epoch is `min_k |D_k| / per_domain_batch` batches (rounded down). Every
/// domain is reshuffled at the start of each epoch; samples that do not fill
/// a whole batch at the end of an epoch are skipped for that epoch.
#[derive(Clone, Debug)]
pub struct MinibatchSampler<'a> {
    source: &'a Subset,
    per_domain: Vec<Vec<usize>>,
    per_domain_batch: usize,
    batches_per_epoch: usize,
    cursor: usize,
    epoch: usize,
    rng: ChaCha8Rng,
}

impl<'a> MinibatchSampler<'a> {
    pub fn new(
        source: &'a Subset,
        source_count: usize,
        per_domain_batch: usize,
        seed: u64,
    ) -> Result<Self> {
        if per_domain_batch == 0 {
            return Err(LabError::Config("per-domain batch size must be positive".into()));
        }
        let per_domain: Vec<Vec<usize>> = (0..source_count)
            .map(|d| source.positions_of_domain(d))
            .collect();
        let smallest = per_domain.iter().map(Vec::len).min().unwrap_or(0);
        if per_domain_batch > smallest {
            return Err(LabError::Config(format!(
                "per-domain batch {per_domain_batch} exceeds the smallest source domain ({smallest} samples)"
            )));
        }
        let mut sampler = MinibatchSampler {
            source,
            per_domain,
            per_domain_batch,
            batches_per_epoch: smallest / per_domain_batch,
            cursor: 0,
            epoch: 0,
            rng: stream_rng(seed, STREAM_SAMPLER),
        };
        sampler.reshuffle();
        Ok(sampler)
    }

    fn reshuffle(&mut self) {
        for d in self.per_domain.iter_mut() {
            d.shuffle(&mut self.rng);
        }
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.batches_per_epoch
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn batch_size(&self) -> usize {
        self.per_domain_batch * self.per_domain.len()
    }

    pub fn next_batch(&mut self) -> Batch {
        if self.cursor == self.batches_per_epoch {
            self.cursor = 0;
            self.epoch += 1;
            self.reshuffle();
        }
        let start = self.cursor * self.per_domain_batch;
        let positions: Vec<usize> = self
            .per_domain
            .iter()
            .flat_map(|d| d[start..start + self.per_domain_batch].iter().copied())
            .collect();
        self.cursor += 1;
        Batch {
            x: self.source.x.select_rows(&positions),
            labels: vec![
                positions.iter().map(|&p| self.source.categories[p]).collect(),
                positions.iter().map(|&p| self.source.domains[p]).collect(),
            ],
            ids: positions.iter().map(|&p| self.source.ids[p]).collect(),
        }
    }
}

impl Iterator for MinibatchSampler<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        Some(self.next_batch())
    }
}
