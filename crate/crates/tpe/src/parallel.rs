//! Thread-pool runners. Work is split by index and results are gathered in
//! index order, so outputs do not depend on the number of workers.

use std::ops::Range;

use rayon::prelude::*;
use rayon::ThreadPool;
use tpe_core::model::ChannelSample;
use tpe_core::sim::{TrialExecutor, TrialOutcome};
use tpe_core::train::{dataset_sample, Dataset, QuadraticStats, Target, TrainingConfig};

use crate::error::{CliError, Result};

/// A pool with `workers` threads; `None` or `0` uses one per core.
pub fn make_pool(workers: Option<usize>) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start worker pool: {e}")))
}

pub struct RayonExecutor {
    pool: ThreadPool,
}

impl RayonExecutor {
    pub fn new(workers: Option<usize>) -> Result<Self> {
        Ok(Self {
            pool: make_pool(workers)?,
        })
    }

    pub fn pool(&self) -> &ThreadPool {
        &self.pool
    }
}

impl TrialExecutor for RayonExecutor {
    fn run_block(
        &self,
        trials: Range<u64>,
        job: &(dyn Fn(u64) -> tpe_core::Result<TrialOutcome> + Sync),
    ) -> Vec<tpe_core::Result<TrialOutcome>> {
        self.pool.install(|| trials.into_par_iter().map(job).collect())
    }
}

pub fn generate_dataset(config: &TrainingConfig, pool: &ThreadPool) -> Result<Dataset> {
    let dims = config.validate()?;
    let samples: Vec<ChannelSample> = pool.install(|| {
        (0..config.dataset_size as u64)
            .into_par_iter()
            .map(|i| dataset_sample(dims, config.master_seed, i))
            .collect()
    });
    Ok(Dataset::from_samples(dims, config.master_seed, samples)?)
}

/// Per-sample quadratic statistics, in sample order.
pub fn dataset_stats(ds: &Dataset, order: usize, target: Target, pool: &ThreadPool) -> Result<Vec<QuadraticStats>> {
    let stats: tpe_core::Result<Vec<_>> = pool.install(|| {
        ds.samples()
            .par_iter()
            .map(|s| QuadraticStats::from_sample(s, order, target))
            .collect()
    });
    Ok(stats?)
}
