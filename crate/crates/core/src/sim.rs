//! Monte-Carlo bit-error-rate evaluation.
//!
//! Trial `t` is generated from the substream `(master_seed, Trial, t)`: the
//! channel, the payload bits and a standard normal noise vector, in that order.
//! The same realization is reused for every detector and every SNR point (only
//! the noise scaling changes), so detector comparisons use common random
//! numbers. Tallies are exact integers and merge by addition, so any executor
//! produces the same result.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;
use nalgebra::{Cholesky, DVector, Dyn};
use rand::Rng;

use crate::detect::{
    alpha_constant, alpha_from_extremes, alpha_power, checked_cholesky, combine_basis,
    extreme_eigenvalues, gram, neumann_from_matched, tpe_basis, TpeCoefficients,
};
use crate::model::{
    demodulate, modulate, realvec, sample_channel, transmit_with_unit_noise, ChannelSample, Constellation, SystemDims,
};
use crate::rng::{Purpose, Substream};
use crate::{Error, Result};

/// How a TPE detector obtains its coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum CoeffSource {
    /// Per-channel `2 / (lambda_min + lambda_max)` from exact eigenvalues.
    AlphaOpt,
    /// `1 / (1 + beta)`.
    AlphaConstant,
    /// Power-method estimate of `lambda_max` with the Marchenko-Pastur lower edge.
    AlphaPower { iterations: usize },
    Learned(TpeCoefficients),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorSpec {
    Zf,
    Mmse,
    Tpe { order_j: usize, source: CoeffSource },
}

impl DetectorSpec {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Zf => "zf",
            Self::Mmse => "mmse",
            Self::Tpe { source, .. } => match source {
                CoeffSource::AlphaOpt => "tpe_alpha_opt",
                CoeffSource::AlphaConstant => "tpe_alpha_constant",
                CoeffSource::AlphaPower { .. } => "tpe_alpha_power",
                CoeffSource::Learned(_) => "tpe_learned",
            },
        }
    }

    pub fn order(&self) -> Option<usize> {
        match self {
            Self::Tpe { order_j, .. } => Some(*order_j),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Self::Tpe { order_j, source } = self {
            if *order_j == 0 || *order_j > crate::detect::MAX_ORDER {
                return Err(Error::InvalidConfig(format!("{}: invalid J={order_j}", self.label())));
            }
            match source {
                CoeffSource::AlphaPower { iterations: 0 } => {
                    return Err(Error::InvalidConfig("tpe_alpha_power needs iterations >= 1".into()));
                }
                CoeffSource::Learned(c) if c.order() != *order_j => {
                    return Err(Error::InvalidConfig(format!(
                        "tpe_learned J={order_j} was given {} coefficients",
                        c.order()
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub dims: SystemDims,
    pub constellation: Constellation,
    pub snr_grid_db: Vec<f64>,
    pub detectors: Vec<DetectorSpec>,
    pub min_bits: u64,
    pub min_errors: u64,
    pub max_bits: u64,
    /// Trials evaluated between two stopping-rule checks.
    pub block_trials: u64,
    pub master_seed: u64,
}

impl SweepConfig {
    /// Default stopping rule: at least 10^6 bits and 100 errors, at most 10^8 bits.
    pub fn new(
        dims: SystemDims,
        constellation: Constellation,
        snr_grid_db: Vec<f64>,
        detectors: Vec<DetectorSpec>,
        master_seed: u64,
    ) -> Self {
        Self {
            dims,
            constellation,
            snr_grid_db,
            detectors,
            min_bits: 1_000_000,
            min_errors: 100,
            max_bits: 100_000_000,
            block_trials: 256,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.detectors.is_empty() {
            return Err(Error::InvalidConfig("detector list is empty".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::InvalidConfig("SNR grid is empty".into()));
        }
        if self.snr_grid_db.iter().any(|x| !x.is_finite()) || self.snr_grid_db.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("SNR grid must be finite and strictly increasing".into()));
        }
        if self.min_bits == 0 || self.max_bits < self.min_bits {
            return Err(Error::InvalidConfig(format!(
                "need 0 < min_bits <= max_bits, got {} and {}",
                self.min_bits, self.max_bits
            )));
        }
        if self.block_trials == 0 {
            return Err(Error::InvalidConfig("block_trials must be positive".into()));
        }
        for d in &self.detectors {
            d.validate()?;
        }
        Ok(())
    }

    pub fn bits_per_trial(&self) -> u64 {
        (self.dims.k() * self.constellation.bits_per_symbol()) as u64
    }
}

/// Channel, payload and unit noise of one trial.
#[derive(Debug, Clone)]
pub struct TrialRealization {
    pub index: u64,
    pub sample: ChannelSample,
    pub bits: Vec<bool>,
    pub x_real: DVector<f64>,
    pub unit_noise: DVector<f64>,
}

pub fn realize_trial(
    dims: SystemDims,
    constellation: &Constellation,
    master_seed: u64,
    trial_index: u64,
) -> TrialRealization {
    let mut stream = Substream::new(master_seed, Purpose::Trial, trial_index);
    let sample = sample_channel(dims, &mut stream);
    let nbits = dims.k() * constellation.bits_per_symbol();
    let bits: Vec<bool> = (0..nbits).map(|_| stream.random::<bool>()).collect();
    let symbols = modulate(&bits, constellation, dims.k()).expect("bit count matches by construction");
    let x_real = realvec(&symbols);
    let unit_noise = DVector::from_fn(2 * dims.n(), |_, _| stream.normal());
    TrialRealization {
        index: trial_index,
        sample,
        bits,
        x_real,
        unit_noise,
    }
}

/// Result of evaluating detectors on one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrialOutcome {
    /// Bit errors per evaluated detector.
    Errors(Vec<u64>),
    /// The Gram matrix was numerically singular; the trial carries no bits.
    Degenerate,
}

/// Runs the listed detectors on one realization at noise level `n0`.
pub fn evaluate_trial(
    real: &TrialRealization,
    n0: f64,
    detectors: &[&DetectorSpec],
    constellation: &Constellation,
    master_seed: u64,
) -> Result<TrialOutcome> {
    let sample = &real.sample;
    let g = gram(sample);
    let chol_zf: Cholesky<f64, Dyn> = match checked_cholesky(g.clone()) {
        Ok(c) => c,
        Err(Error::DegenerateChannel { .. }) => return Ok(TrialOutcome::Degenerate),
        Err(e) => return Err(e),
    };
    let y = transmit_with_unit_noise(sample, &real.x_real, n0, &real.unit_noise)?;
    let learned_order = detectors
        .iter()
        .filter(|d| matches!(d, DetectorSpec::Tpe { source: CoeffSource::Learned(_), .. }))
        .filter_map(|d| d.order())
        .max()
        .unwrap_or(1);
    let basis = tpe_basis(sample, &y, learned_order);
    let hty = &basis[0];
    let mut alpha_opt: Option<f64> = None;

    let mut errors = Vec::with_capacity(detectors.len());
    for det in detectors {
        let xhat = match det {
            DetectorSpec::Zf => chol_zf.solve(hty),
            DetectorSpec::Mmse => {
                let mu = n0 / constellation.symbol_energy();
                let mut gm = g.clone();
                for i in 0..gm.nrows() {
                    gm[(i, i)] += mu;
                }
                checked_cholesky(gm)?.solve(hty)
            }
            DetectorSpec::Tpe { order_j, source } => {
                let alpha = match source {
                    CoeffSource::Learned(c) => {
                        errors.push(count_errors(&combine_basis(&basis[..*order_j], c.w()), real, constellation));
                        continue;
                    }
                    CoeffSource::AlphaOpt => match alpha_opt {
                        Some(a) => a,
                        None => {
                            let (lo, hi) = extreme_eigenvalues(&g);
                            let a = alpha_from_extremes(lo, hi)?;
                            alpha_opt = Some(a);
                            a
                        }
                    },
                    CoeffSource::AlphaConstant => alpha_constant(sample.dims()),
                    CoeffSource::AlphaPower { iterations } => {
                        let mut s = Substream::new(master_seed, Purpose::PowerStart, real.index);
                        alpha_power(sample, *iterations, &mut s)?
                    }
                };
                neumann_from_matched(sample, hty, alpha, *order_j)
            }
        };
        errors.push(count_errors(&xhat, real, constellation));
    }
    Ok(TrialOutcome::Errors(errors))
}

fn count_errors(xhat: &DVector<f64>, real: &TrialRealization, constellation: &Constellation) -> u64 {
    let decided = demodulate(xhat, constellation);
    decided.iter().zip(&real.bits).filter(|(a, b)| a != b).count() as u64
}

/// Bits and errors of one detector on one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialTally {
    pub bits: u64,
    pub errors: u64,
    pub degenerate: bool,
}

/// One independent trial for a single detector at grid point `snr_index`.
pub fn ber_trial(trial_index: u64, config: &SweepConfig, detector: &DetectorSpec, snr_index: usize) -> Result<TrialTally> {
    let snr_db = *config
        .snr_grid_db
        .get(snr_index)
        .ok_or_else(|| Error::InvalidParameter(format!("SNR index {snr_index} is out of range")))?;
    let noise = crate::model::NoiseSpec::from_snr_db(snr_db, &config.constellation)?;
    let real = realize_trial(config.dims, &config.constellation, config.master_seed, trial_index);
    match evaluate_trial(&real, noise.n0(), &[detector], &config.constellation, config.master_seed)? {
        TrialOutcome::Degenerate => Ok(TrialTally {
            bits: 0,
            errors: 0,
            degenerate: true,
        }),
        TrialOutcome::Errors(e) => Ok(TrialTally {
            bits: config.bits_per_trial(),
            errors: e[0],
            degenerate: false,
        }),
    }
}

/// Runs a block of trials. Implementations may parallelize but must return
/// outcomes in trial order.
pub trait TrialExecutor {
    fn run_block(
        &self,
        trials: Range<u64>,
        job: &(dyn Fn(u64) -> Result<TrialOutcome> + Sync),
    ) -> Vec<Result<TrialOutcome>>;
}

/// Runs trials one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl TrialExecutor for Sequential {
    fn run_block(
        &self,
        trials: Range<u64>,
        job: &(dyn Fn(u64) -> Result<TrialOutcome> + Sync),
    ) -> Vec<Result<TrialOutcome>> {
        trials.map(job).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bits: u64,
    pub errors: u64,
    /// The bit budget ran out before `min_errors` errors were seen.
    pub censored: bool,
    pub degenerate_trials: u64,
}

impl BerPoint {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }

    /// Binomial standard error `sqrt(p (1 - p) / bits)`.
    pub fn std_error(&self) -> f64 {
        if self.bits == 0 {
            return 0.0;
        }
        let p = self.ber();
        libm::sqrt(p * (1.0 - p) / self.bits as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerCurve {
    pub detector: String,
    pub order_j: Option<usize>,
    pub points: Vec<BerPoint>,
}

impl BerCurve {
    /// SNR where the curve first falls through `target`, interpolating
    /// `log10(BER)` linearly between grid points. Zero-error points are taken
    /// at half an error.
    pub fn snr_at_ber(&self, target: f64) -> Option<f64> {
        let floor = |p: &BerPoint| {
            if p.errors == 0 && p.bits > 0 {
                0.5 / p.bits as f64
            } else {
                p.ber()
            }
        };
        for pair in self.points.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let (pa, pb) = (floor(a), floor(b));
            if pa >= target && pb <= target && pa > pb {
                let (la, lb, lt) = (libm::log10(pa), libm::log10(pb), libm::log10(target));
                return Some(a.snr_db + (la - lt) / (la - lb) * (b.snr_db - a.snr_db));
            }
        }
        None
    }
}

/// SNR gap in dB between `curve` and `reference` at a target BER.
pub fn gap_db(curve: &BerCurve, reference: &BerCurve, target: f64) -> Option<f64> {
    Some(curve.snr_at_ber(target)? - reference.snr_at_ber(target)?)
}

struct Accumulator {
    bits: u64,
    errors: u64,
    done: bool,
}

/// Sweeps every detector over the SNR grid.
///
/// At each SNR point trials are run in blocks of `block_trials`; after each
/// block a detector stops once it has `min_bits` bits and `min_errors` errors,
/// or once it reaches `max_bits`.
pub fn ber_sweep<E: TrialExecutor + ?Sized>(config: &SweepConfig, executor: &E) -> Result<Vec<BerCurve>> {
    config.validate()?;
    let bpt = config.bits_per_trial();
    let mut curves: Vec<BerCurve> = config
        .detectors
        .iter()
        .map(|d| BerCurve {
            detector: d.label().into(),
            order_j: d.order(),
            points: Vec::with_capacity(config.snr_grid_db.len()),
        })
        .collect();
    // all-degenerate guard: never run more than twice the trials the bit cap needs
    let trial_cap = 2 * config.max_bits.div_ceil(bpt);

    for &snr_db in &config.snr_grid_db {
        let noise = crate::model::NoiseSpec::from_snr_db(snr_db, &config.constellation)?;
        let n0 = noise.n0();
        let mut acc: Vec<Accumulator> = config
            .detectors
            .iter()
            .map(|_| Accumulator {
                bits: 0,
                errors: 0,
                done: false,
            })
            .collect();
        let mut degenerate = 0u64;
        let mut next = 0u64;
        while acc.iter().any(|a| !a.done) && next < trial_cap {
            let active: Vec<usize> = (0..acc.len()).filter(|&i| !acc[i].done).collect();
            let specs: Vec<&DetectorSpec> = active.iter().map(|&i| &config.detectors[i]).collect();
            let job = |t: u64| {
                let real = realize_trial(config.dims, &config.constellation, config.master_seed, t);
                evaluate_trial(&real, n0, &specs, &config.constellation, config.master_seed)
            };
            let end = next + config.block_trials;
            for outcome in executor.run_block(next..end, &job) {
                match outcome? {
                    TrialOutcome::Degenerate => degenerate += 1,
                    TrialOutcome::Errors(errs) => {
                        for (&i, e) in active.iter().zip(errs) {
                            acc[i].bits += bpt;
                            acc[i].errors += e;
                        }
                    }
                }
            }
            next = end;
            for &i in &active {
                let a = &mut acc[i];
                a.done = (a.bits >= config.min_bits && a.errors >= config.min_errors) || a.bits >= config.max_bits;
            }
        }
        for (curve, a) in curves.iter_mut().zip(&acc) {
            curve.points.push(BerPoint {
                snr_db,
                bits: a.bits,
                errors: a.errors,
                censored: a.errors < config.min_errors,
                degenerate_trials: degenerate,
            });
        }
    }
    Ok(curves)
}
