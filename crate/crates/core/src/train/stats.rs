//! Sufficient statistics of the matrix-matching loss.
//!
//! With `A_k = G^k H^T` and a target `W = T H^T` (`T = G^{-1}` for ZF,
//! `(G + mu I)^{-1}` for MMSE) the per-sample loss
//! `|W - sum_k w_k A_k|_F^2` is the quadratic `w^T B w - 2 c^T w + d` with
//!
//! ```text
//! B_kl = <A_k, A_l>_F = tr(G^(k+l+1))
//! c_k  = <A_k, W>_F   = tr(G^(k+1) T)
//! d    = |W|_F^2      = tr(T G T)
//! ```
//!
//! These only involve `2K x 2K` matrices, and they add across samples.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::Target;
use crate::detect::{checked_cholesky, gram};
use crate::model::ChannelSample;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticStats {
    order: usize,
    /// row-major `J x J`
    b: Vec<f64>,
    c: Vec<f64>,
    d: f64,
    count: usize,
}

fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

impl QuadraticStats {
    pub fn zero(order: usize) -> Self {
        Self {
            order,
            b: vec![0.0; order * order],
            c: vec![0.0; order],
            d: 0.0,
            count: 0,
        }
    }

    /// Statistics of one channel sample for TPE orders up to `order`.
    pub fn from_sample(sample: &ChannelSample, order: usize, target: Target) -> Result<Self> {
        if order == 0 {
            return Err(Error::ZeroOrder);
        }
        let g = gram(sample);
        let dim = g.nrows();
        let mut shifted = g.clone();
        if let Target::Mmse { mu } = target {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(Error::InvalidParameter(alloc::format!("MMSE mu must be >= 0, got {mu}")));
            }
            for i in 0..dim {
                shifted[(i, i)] += mu;
            }
        }
        let t = checked_cholesky(shifted)?.inverse();

        // traces[p] = tr(G^p) for p = 1 ..= 2J - 1; c needs G^(k+1) for k < J
        let mut traces = vec![0.0; 2 * order];
        let mut c = vec![0.0; order];
        let mut power = g.clone();
        for p in 1..2 * order {
            if p > 1 {
                power = &power * &g;
            }
            traces[p] = power.trace();
            if p <= order {
                c[p - 1] = frobenius_dot(&power, &t);
            }
        }
        let mut b = vec![0.0; order * order];
        for k in 0..order {
            for l in 0..order {
                b[k * order + l] = traces[k + l + 1];
            }
        }
        let tg = &t * &g;
        let d = frobenius_dot(&tg, &t);
        Ok(Self {
            order,
            b,
            c,
            d,
            count: 1,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn b(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.order, self.order, &self.b)
    }

    pub fn c(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.c)
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Statistics restricted to the first `order` coefficients.
    pub fn truncate(&self, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::ZeroOrder);
        }
        if order > self.order {
            return Err(Error::DimensionMismatch(alloc::format!(
                "statistics cover J <= {}, requested {order}",
                self.order
            )));
        }
        let mut b = Vec::with_capacity(order * order);
        for k in 0..order {
            b.extend_from_slice(&self.b[k * self.order..k * self.order + order]);
        }
        Ok(Self {
            order,
            b,
            c: self.c[..order].to_vec(),
            d: self.d,
            count: self.count,
        })
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.order, other.order);
        for (x, y) in self.b.iter_mut().zip(&other.b) {
            *x += y;
        }
        for (x, y) in self.c.iter_mut().zip(&other.c) {
            *x += y;
        }
        self.d += other.d;
        self.count += other.count;
    }

    /// Fixed-order pairwise sum of `items[indices]`.
    pub fn sum_indexed(items: &[Self], indices: &[usize], order: usize) -> Self {
        if indices.len() <= 8 {
            let mut acc = Self::zero(order);
            for &i in indices {
                acc.add_assign(&items[i]);
            }
            return acc;
        }
        let mid = indices.len() / 2;
        let mut left = Self::sum_indexed(items, &indices[..mid], order);
        left.add_assign(&Self::sum_indexed(items, &indices[mid..], order));
        left
    }

    /// Pairwise sum in index order.
    pub fn sum(items: &[Self]) -> Option<Self> {
        let order = items.first()?.order;
        let indices: Vec<usize> = (0..items.len()).collect();
        Some(Self::sum_indexed(items, &indices, order))
    }

    /// Summed loss `w^T B w - 2 c^T w + d` (not divided by the count).
    pub fn total_loss(&self, w: &[f64]) -> f64 {
        let j = self.order;
        let mut quad = 0.0;
        let mut lin = 0.0;
        for k in 0..j {
            let row: f64 = (0..j).map(|l| self.b[k * j + l] * w[l]).sum();
            quad += w[k] * row;
            lin += self.c[k] * w[k];
        }
        let v = quad - 2.0 * lin + self.d;
        // rounding can push an exact fit slightly below zero
        if v < 0.0 {
            0.0
        } else {
            v
        }
    }

    /// Mean loss per sample.
    pub fn mean_loss(&self, w: &[f64]) -> f64 {
        self.total_loss(w) / self.count as f64
    }

    /// Gradient of [`mean_loss`](Self::mean_loss): `2 (B w - c) / count`.
    pub fn mean_grad(&self, w: &[f64]) -> Vec<f64> {
        let j = self.order;
        let scale = 2.0 / self.count as f64;
        (0..j)
            .map(|k| {
                let bw: f64 = (0..j).map(|l| self.b[k * j + l] * w[l]).sum();
                scale * (bw - self.c[k])
            })
            .collect()
    }
}
