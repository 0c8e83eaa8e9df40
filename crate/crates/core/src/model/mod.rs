//! Uplink system model: `y = H x + n` in complex and real block form.

mod qam;

pub use qam::{demodulate, modulate, Constellation};

use alloc::format;
use nalgebra::{Complex, DMatrix, DVector};

use crate::rng::{SeedTag, Substream};
use crate::{Error, Result};

/// Antenna and user counts of an uplink system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemDims {
    n: usize,
    k: usize,
}

impl SystemDims {
    /// `n` receive antennas serving `k` single-antenna users, `1 <= k <= n`.
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidDims(format!("K must be positive (N={n}, K={k})")));
        }
        if n < k {
            return Err(Error::InvalidDims(format!("N must be at least K (N={n}, K={k})")));
        }
        Ok(Self { n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Loading factor `K / N`.
    pub fn beta(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

/// One channel realization in complex (`N x K`) and real block (`2N x 2K`) form.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    h_complex: DMatrix<Complex<f64>>,
    h_real: DMatrix<f64>,
    seed_tag: Option<SeedTag>,
}

impl ChannelSample {
    /// Wraps a given complex channel. The real form is derived with [`realify`].
    pub fn from_complex(h_complex: DMatrix<Complex<f64>>) -> Result<Self> {
        if h_complex.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("channel has non-finite entries".into()));
        }
        SystemDims::new(h_complex.nrows(), h_complex.ncols())?;
        let h_real = realify(&h_complex);
        Ok(Self {
            h_complex,
            h_real,
            seed_tag: None,
        })
    }

    /// Wraps a real-valued channel (imaginary parts zero).
    pub fn from_real(h: &DMatrix<f64>) -> Result<Self> {
        Self::from_complex(h.map(|x| Complex::new(x, 0.0)))
    }

    pub fn dims(&self) -> SystemDims {
        SystemDims {
            n: self.h_complex.nrows(),
            k: self.h_complex.ncols(),
        }
    }

    pub fn h_complex(&self) -> &DMatrix<Complex<f64>> {
        &self.h_complex
    }

    /// The `2N x 2K` real block matrix `[[Re, -Im], [Im, Re]]`.
    pub fn h_real(&self) -> &DMatrix<f64> {
        &self.h_real
    }

    pub fn seed_tag(&self) -> Option<SeedTag> {
        self.seed_tag
    }

    /// Records which substream produced this sample.
    pub fn with_seed_tag(mut self, tag: SeedTag) -> Self {
        self.seed_tag = Some(tag);
        self
    }
}

/// Draws an i.i.d. `CN(0, 1/N)` channel, so every column has unit expected energy.
pub fn sample_channel(dims: SystemDims, stream: &mut Substream) -> ChannelSample {
    let std = libm::sqrt(0.5 / dims.n as f64);
    // column-major fill, real part before imaginary part
    let h_complex = DMatrix::from_fn(dims.n, dims.k, |_, _| {
        let re = stream.normal() * std;
        let im = stream.normal() * std;
        Complex::new(re, im)
    });
    let h_real = realify(&h_complex);
    ChannelSample {
        h_complex,
        h_real,
        seed_tag: Some(stream.tag()),
    }
}

/// Real block representation of a complex matrix.
///
/// For `hc` of size `N x K` the result is the `2N x 2K` matrix
/// `[[Re(hc), -Im(hc)], [Im(hc), Re(hc)]]`, so that multiplying it with
/// `[Re v; Im v]` gives `[Re(hc v); Im(hc v)]`.
pub fn realify(hc: &DMatrix<Complex<f64>>) -> DMatrix<f64> {
    let (n, k) = hc.shape();
    DMatrix::from_fn(2 * n, 2 * k, |r, c| {
        let z = hc[(r % n, c % k)];
        match (r < n, c < k) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Stacks a complex vector as `[Re v; Im v]`.
pub fn realvec(v: &DVector<Complex<f64>>) -> DVector<f64> {
    let k = v.len();
    DVector::from_fn(2 * k, |i, _| if i < k { v[i].re } else { v[i - k].im })
}

/// Inverse of [`realvec`].
pub fn complexvec(x: &DVector<f64>) -> DVector<Complex<f64>> {
    let k = x.len() / 2;
    DVector::from_fn(k, |i, _| Complex::new(x[i], x[i + k]))
}

/// Complex AWGN level, stored together with the SNR it was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    n0: f64,
    snr_db: f64,
}

impl NoiseSpec {
    /// `SNR = 10 log10(E_x / N_0)` in dB.
    pub fn from_snr_db(snr_db: f64, constellation: &Constellation) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::InvalidParameter(format!("SNR {snr_db} dB is not finite")));
        }
        let n0 = constellation.symbol_energy() / libm::pow(10.0, snr_db / 10.0);
        Ok(Self { n0, snr_db })
    }

    pub fn from_n0(n0: f64, constellation: &Constellation) -> Result<Self> {
        if !(n0 > 0.0 && n0.is_finite()) {
            return Err(Error::InvalidParameter(format!("N0 must be positive, got {n0}")));
        }
        let snr_db = 10.0 * libm::log10(constellation.symbol_energy() / n0);
        Ok(Self { n0, snr_db })
    }

    /// Complex noise variance per receive antenna.
    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    /// MMSE regularizer `N_0 / E_x`.
    pub fn mu(&self, constellation: &Constellation) -> f64 {
        self.n0 / constellation.symbol_energy()
    }
}

/// `y = H x + n` with real noise components of variance `N_0 / 2`.
pub fn transmit(
    sample: &ChannelSample,
    x_real: &DVector<f64>,
    noise: &NoiseSpec,
    stream: &mut Substream,
) -> Result<DVector<f64>> {
    let rows = sample.h_real().nrows();
    let unit = DVector::from_fn(rows, |_, _| stream.normal());
    transmit_with_unit_noise(sample, x_real, noise.n0(), &unit)
}

/// `y = H x + sqrt(N_0 / 2) z` for a given standard normal vector `z`.
pub fn transmit_with_unit_noise(
    sample: &ChannelSample,
    x_real: &DVector<f64>,
    n0: f64,
    unit_noise: &DVector<f64>,
) -> Result<DVector<f64>> {
    let h = sample.h_real();
    if x_real.len() != h.ncols() || unit_noise.len() != h.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "H is {}x{}, x has {} entries, noise has {}",
            h.nrows(),
            h.ncols(),
            x_real.len(),
            unit_noise.len()
        )));
    }
    let mut y = h * x_real;
    if n0 > 0.0 {
        y.axpy(libm::sqrt(n0 / 2.0), unit_noise, 1.0);
    }
    Ok(y)
}
