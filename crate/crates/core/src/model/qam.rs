//! Square Gray-coded QAM.
//!
//! A symbol carries `m = log2(order)` bits, most significant first. The first
//! `m/2` bits select the in-phase level and the last `m/2` bits the quadrature
//! level. On each axis the `L = sqrt(order)` levels are visited from the most
//! positive to the most negative, and the level at position `i` carries the
//! Gray code `i ^ (i >> 1)`:
//!
//! ```text
//!  4-QAM axis:   0 -> +1            1 -> -1
//! 16-QAM axis:  00 -> +3   01 -> +1   11 -> -1   10 -> -3
//! ```
//!
//! Levels are scaled by `sqrt(3 E_x / (2 (order - 1)))`, which makes the mean
//! symbol energy exactly `E_x`. The symbol index of a point is its bit pattern
//! read as an unsigned integer.

use alloc::vec::Vec;
use nalgebra::{Complex, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: u32,
    symbol_energy: f64,
    scale: f64,
    points: Vec<Complex<f64>>,
}

fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

fn gray_inverse(mut g: u32) -> u32 {
    let mut i = g;
    while g > 0 {
        g >>= 1;
        i ^= g;
    }
    i
}

impl Constellation {
    pub fn new(order: u32, symbol_energy: f64) -> Result<Self> {
        if !matches!(order, 4 | 16 | 64) {
            return Err(Error::UnsupportedOrder(order));
        }
        if !(symbol_energy > 0.0 && symbol_energy.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "symbol energy must be positive, got {symbol_energy}"
            )));
        }
        let scale = libm::sqrt(3.0 * symbol_energy / (2.0 * f64::from(order - 1)));
        let mut c = Self {
            order,
            symbol_energy,
            scale,
            points: Vec::new(),
        };
        c.points = (0..order).map(|idx| c.point_of_index(idx)).collect();
        Ok(c)
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn symbol_energy(&self) -> f64 {
        self.symbol_energy
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    fn bits_per_axis(&self) -> u32 {
        self.order.trailing_zeros() / 2
    }

    fn levels(&self) -> u32 {
        1 << self.bits_per_axis()
    }

    /// Amplitude of the level at `position` (0 is the most positive).
    fn level(&self, position: u32) -> f64 {
        f64::from(self.levels() as i32 - 1 - 2 * position as i32) * self.scale
    }

    /// Integer level (before scaling) at `position`, used for exact energy checks.
    pub fn integer_level(&self, axis_bits: u32) -> i32 {
        self.levels() as i32 - 1 - 2 * gray_inverse(axis_bits) as i32
    }

    pub fn level_scale(&self) -> f64 {
        self.scale
    }

    fn point_of_index(&self, index: u32) -> Complex<f64> {
        let b = self.bits_per_axis();
        let mask = (1 << b) - 1;
        let i_bits = index >> b;
        let q_bits = index & mask;
        Complex::new(
            self.level(gray_inverse(i_bits)),
            self.level(gray_inverse(q_bits)),
        )
    }

    /// Constellation points indexed by their bit pattern.
    pub fn points(&self) -> &[Complex<f64>] {
        &self.points
    }

    /// Bits of a symbol index, most significant first.
    pub fn bits_of(&self, index: u32) -> Vec<bool> {
        let m = self.bits_per_symbol();
        (0..m).map(|b| (index >> (m - 1 - b)) & 1 == 1).collect()
    }

    fn decide_axis(&self, v: f64) -> u32 {
        let levels = self.levels();
        let t = (f64::from(levels - 1) - v / self.scale) / 2.0;
        let lo = libm::floor(t).clamp(0.0, f64::from(levels - 1)) as u32;
        let hi = (lo + 1).min(levels - 1);
        let (d_lo, d_hi) = (libm::fabs(v - self.level(lo)), libm::fabs(v - self.level(hi)));
        let pos = if d_hi < d_lo {
            hi
        } else if d_lo < d_hi || gray(lo) < gray(hi) {
            lo
        } else {
            hi
        };
        gray(pos)
    }

    /// Index of the nearest point, ties resolved toward the smaller index.
    pub fn nearest_index(&self, z: Complex<f64>) -> u32 {
        (self.decide_axis(z.re) << self.bits_per_axis()) | self.decide_axis(z.im)
    }
}

/// Maps `K * log2(order)` bits onto `K` symbols.
pub fn modulate(bits: &[bool], spec: &Constellation, k: usize) -> Result<DVector<Complex<f64>>> {
    let m = spec.bits_per_symbol();
    if bits.len() != k * m {
        return Err(Error::BitLength {
            expected: k * m,
            got: bits.len(),
        });
    }
    Ok(DVector::from_iterator(
        k,
        bits.chunks_exact(m).map(|chunk| {
            let index = chunk.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b));
            spec.points[index as usize]
        }),
    ))
}

/// Hard decisions on a real-form estimate `[Re x; Im x]` of length `2K`.
pub fn demodulate(xhat: &DVector<f64>, spec: &Constellation) -> Vec<bool> {
    let k = xhat.len() / 2;
    let mut bits = Vec::with_capacity(k * spec.bits_per_symbol());
    for u in 0..k {
        let index = spec.nearest_index(Complex::new(xhat[u], xhat[u + k]));
        bits.extend(spec.bits_of(index));
    }
    bits
}
