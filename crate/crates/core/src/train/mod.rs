//! Offline learning of TPE coefficients.
//!
//! The coefficients minimize the mean squared Frobenius distance between the
//! exact linear filter and its TPE over a set of channel samples. The loss is a
//! convex quadratic in the coefficients, so besides Adam training
//! ([`train`]) the global minimizer is available in closed form
//! ([`closed_form_fit`]).

mod adam;
mod checkpoint;
mod stats;

pub use adam::{adam_step, lr_schedule, AdamHyper, OptimizerState};
pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_SCHEMA_VERSION};
pub use stats::QuadraticStats;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::detect::{
    alpha_constant, coeffs_from_alpha, mmse_matrix, tpe_matrix_from_weights, zf_matrix, TpeCoefficients,
    MAX_ORDER,
};
use crate::model::{sample_channel, ChannelSample, SystemDims};
use crate::rng::{Purpose, Substream};
use crate::{Error, Result};

/// Filter the TPE is trained to match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    #[default]
    Zf,
    /// MMSE with a fixed regularizer baked into the target.
    Mmse { mu: f64 },
}

/// Training hyperparameters. Defaults follow the reference setup
/// (10,000 samples, batches of 200, 2,000 epochs, learning rate 0.001
/// decayed by 0.9 per epoch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub n: usize,
    pub k: usize,
    pub order_j: usize,
    pub dataset_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub decay: f64,
    pub adam: AdamHyper,
    pub master_seed: u64,
    pub target: Target,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            n: 128,
            k: 16,
            order_j: 4,
            dataset_size: 10_000,
            batch_size: 200,
            epochs: 2_000,
            lr0: 0.001,
            decay: 0.9,
            adam: AdamHyper::default(),
            master_seed: 1,
            target: Target::Zf,
        }
    }
}

impl TrainingConfig {
    /// Checks every field and returns the system dimensions.
    pub fn validate(&self) -> Result<SystemDims> {
        let dims = SystemDims::new(self.n, self.k)?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.order_j == 0 || self.order_j > MAX_ORDER {
            return bad(format!("order_j must be in 1..={MAX_ORDER}, got {}", self.order_j));
        }
        if self.dataset_size == 0 {
            return bad("dataset_size must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay must be in (0, 1], got {}", self.decay));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return bad("adam needs beta1, beta2 in [0, 1) and epsilon > 0".into());
        }
        if let Target::Mmse { mu } = self.target {
            if !(mu >= 0.0 && mu.is_finite()) {
                return bad(format!("target mu must be >= 0, got {mu}"));
            }
        }
        Ok(dims)
    }
}

/// Channel samples for training, regenerable from `(master_seed, index)`.
#[derive(Debug, Clone)]
pub struct Dataset {
    dims: SystemDims,
    master_seed: u64,
    samples: Vec<ChannelSample>,
    targets: Option<Vec<DMatrix<f64>>>,
}

/// The `index`-th training sample of a dataset.
pub fn dataset_sample(dims: SystemDims, master_seed: u64, index: u64) -> ChannelSample {
    sample_channel(dims, &mut Substream::new(master_seed, Purpose::Channel, index))
}

/// Materializes all `M` samples of a configuration.
pub fn generate_dataset(config: &TrainingConfig) -> Result<Dataset> {
    let dims = config.validate()?;
    let samples = (0..config.dataset_size as u64)
        .map(|i| dataset_sample(dims, config.master_seed, i))
        .collect();
    Ok(Dataset {
        dims,
        master_seed: config.master_seed,
        samples,
        targets: None,
    })
}

impl Dataset {
    pub fn from_samples(dims: SystemDims, master_seed: u64, samples: Vec<ChannelSample>) -> Result<Self> {
        if samples.iter().any(|s| s.dims() != dims) {
            return Err(Error::DimensionMismatch("sample dimensions differ from the dataset".into()));
        }
        Ok(Self {
            dims,
            master_seed,
            samples,
            targets: None,
        })
    }

    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn samples(&self) -> &[ChannelSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Caches the target filter of every sample.
    pub fn with_targets(mut self, target: Target) -> Result<Self> {
        let targets = self
            .samples
            .iter()
            .map(|s| target_matrix(s, target))
            .collect::<Result<Vec<_>>>()?;
        self.targets = Some(targets);
        Ok(self)
    }

    pub fn targets(&self) -> Option<&[DMatrix<f64>]> {
        self.targets.as_deref()
    }

    /// Per-sample loss statistics for TPE orders up to `order`.
    pub fn stats(&self, order: usize, target: Target) -> Result<Vec<QuadraticStats>> {
        self.samples
            .iter()
            .map(|s| QuadraticStats::from_sample(s, order, target))
            .collect()
    }
}

pub fn target_matrix(sample: &ChannelSample, target: Target) -> Result<DMatrix<f64>> {
    match target {
        Target::Zf => zf_matrix(sample),
        Target::Mmse { mu } => mmse_matrix(sample, mu),
    }
}

/// Mean squared Frobenius distance between target and TPE filters, computed
/// from dense matrices.
pub fn loss(theta: &TpeCoefficients, batch: &[ChannelSample], target: Target) -> Result<f64> {
    loss_weights(theta.w(), batch, target)
}

pub fn loss_weights(w: &[f64], batch: &[ChannelSample], target: Target) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("loss of an empty batch".into()));
    }
    let mut acc = 0.0;
    for s in batch {
        let diff = target_matrix(s, target)? - tpe_matrix_from_weights(s, w);
        acc += diff.norm_squared();
    }
    Ok(acc / batch.len() as f64)
}

/// Analytic gradient `(2/|batch|) sum_m <A_k, W_TPE - W>_F`, from dense matrices.
pub fn grad(theta: &TpeCoefficients, batch: &[ChannelSample], target: Target) -> Result<DVector<f64>> {
    grad_weights(theta.w(), batch, target)
}

pub fn grad_weights(w: &[f64], batch: &[ChannelSample], target: Target) -> Result<DVector<f64>> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("gradient of an empty batch".into()));
    }
    let j = w.len();
    let mut out = DVector::zeros(j);
    for s in batch {
        let residual = tpe_matrix_from_weights(s, w) - target_matrix(s, target)?;
        let g = crate::detect::gram(s);
        let mut a = s.h_real().transpose();
        for k in 0..j {
            if k > 0 {
                a = &g * &a;
            }
            out[k] += a.dot(&residual);
        }
    }
    Ok(out * (2.0 / batch.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub records: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub coeffs: TpeCoefficients,
    pub history: LossHistory,
    /// Mean loss of the final coefficients over the whole dataset.
    pub loss_final: f64,
}

/// Identifier recorded for Adam-trained coefficients.
pub fn adam_checkpoint_id(config: &TrainingConfig) -> String {
    format!(
        "adam/N{}K{}J{}/M{}/seed{}",
        config.n, config.k, config.order_j, config.dataset_size, config.master_seed
    )
}

/// Generates the dataset and trains with Adam.
pub fn train(config: &TrainingConfig) -> Result<TrainOutcome> {
    let dataset = generate_dataset(config)?;
    let stats = dataset.stats(config.order_j, config.target)?;
    train_with_stats(config, &stats)
}

/// Adam over shuffled mini-batches, starting from the constant-alpha
/// expansion. The learning rate is constant within an epoch and multiplied by
/// `decay` after it. `stats[m]` must describe sample `m` of the dataset.
pub fn train_with_stats(config: &TrainingConfig, stats: &[QuadraticStats]) -> Result<TrainOutcome> {
    let dims = config.validate()?;
    let j = config.order_j;
    if stats.len() != config.dataset_size {
        return Err(Error::DimensionMismatch(format!(
            "{} sample statistics for a dataset of {}",
            stats.len(),
            config.dataset_size
        )));
    }
    let stats: Vec<QuadraticStats> = stats.iter().map(|s| s.truncate(j)).collect::<Result<_>>()?;

    let mut theta = coeffs_from_alpha(alpha_constant(dims), j)?.w().to_vec();
    let mut state = OptimizerState::new(j, config.lr0);
    let mut history = LossHistory::default();
    let mut order: Vec<usize> = (0..stats.len()).collect();

    for epoch in 0..config.epochs {
        state.lr_current = lr_schedule(config.lr0, epoch, config.decay);
        order.sort_unstable();
        order.shuffle(&mut Substream::new(config.master_seed, Purpose::Shuffle, epoch as u64));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let agg = QuadraticStats::sum_indexed(&stats, batch, j);
            let l = agg.mean_loss(&theta);
            let g = agg.mean_grad(&theta);
            if !l.is_finite() || g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += l * batch.len() as f64;
            adam_step(&mut state, &mut theta, &g, &config.adam);
        }
        let mean_loss = epoch_loss / stats.len() as f64;
        if !mean_loss.is_finite() || theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        history.records.push(EpochRecord {
            epoch,
            lr: state.lr_current,
            mean_loss,
        });
    }

    let total = QuadraticStats::sum(&stats).expect("dataset is non-empty");
    let loss_final = total.mean_loss(&theta);
    if !loss_final.is_finite() {
        return Err(Error::Diverged { epoch: config.epochs });
    }
    Ok(TrainOutcome {
        coeffs: TpeCoefficients::learned(theta, adam_checkpoint_id(config))?,
        history,
        loss_final,
    })
}

/// Reciprocal condition below which the normal equations are rejected.
pub const FIT_RCOND: f64 = 1e-14;

/// Global minimizer of the summed loss: solves `B w = c`.
///
/// `B` is equilibrated by its diagonal before the condition check and the
/// Cholesky solve.
pub fn closed_form_fit(stats: &QuadraticStats, order_j: usize) -> Result<TpeCoefficients> {
    if order_j > MAX_ORDER {
        return Err(Error::OrderTooLarge(order_j));
    }
    let s = stats.truncate(order_j)?;
    let b = s.b();
    let c = s.c();
    let scale = b.diagonal().map(|x| if x > 0.0 { 1.0 / libm::sqrt(x) } else { 0.0 });
    if scale.iter().any(|&x| x == 0.0 || !x.is_finite()) {
        return Err(Error::IllPosedFit { rcond: 0.0 });
    }
    let scaled = DMatrix::from_fn(order_j, order_j, |r, col| b[(r, col)] * scale[r] * scale[col]);
    let ev = scaled.clone().symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    let rcond = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(rcond >= FIT_RCOND) {
        return Err(Error::IllPosedFit { rcond });
    }
    let rhs = c.component_mul(&scale);
    let z = nalgebra::Cholesky::new(scaled)
        .ok_or(Error::IllPosedFit { rcond })?
        .solve(&rhs);
    let w: Vec<f64> = z.component_mul(&scale).iter().copied().collect();
    TpeCoefficients::learned(w, "closed-form")
}

/// [`closed_form_fit`] over a dataset.
pub fn closed_form_fit_dataset(dataset: &Dataset, order_j: usize, target: Target) -> Result<TpeCoefficients> {
    let stats = dataset.stats(order_j, target)?;
    let total = QuadraticStats::sum(&stats).ok_or(Error::InvalidParameter("empty dataset".into()))?;
    closed_form_fit(&total, order_j)
}
