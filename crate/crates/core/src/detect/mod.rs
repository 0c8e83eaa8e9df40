//! Linear detectors and their truncated polynomial expansions.
//!
//! Everything operates on the real block form of the channel. A TPE detector
//! of order `J` is `W = sum_l w_l G^l H^T` with `G = H^T H`; on a received
//! vector it is applied with matrix-vector products only (see [`tpe_detect`]).

mod ops;

pub use ops::{count_ops, savings_percent, DetectorKind, OpCount, TableRow};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::Cell;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::model::{ChannelSample, SystemDims};
use crate::rng::Substream;
use crate::{Error, Result};

/// Largest TPE order whose binomial sums are evaluated exactly.
pub const MAX_ORDER: usize = 64;

/// Reciprocal condition estimate below which a Gram matrix is treated as singular.
pub const DEGENERATE_RCOND: f64 = 1e-12;

/// Channel Gram matrix `G = H^T H` (`2K x 2K`).
pub fn gram(sample: &ChannelSample) -> DMatrix<f64> {
    let h = sample.h_real();
    h.tr_mul(h)
}

/// Cholesky factor of a symmetric matrix, rejecting numerically singular input.
///
/// The reciprocal condition is estimated as `(min L_ii / max L_ii)^2`.
pub fn checked_cholesky(g: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(g).ok_or(Error::DegenerateChannel {
        rcond: 0.0,
        threshold: DEGENERATE_RCOND,
    })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    let rcond = if hi > 0.0 { (lo / hi) * (lo / hi) } else { 0.0 };
    if !(rcond >= DEGENERATE_RCOND) {
        return Err(Error::DegenerateChannel {
            rcond,
            threshold: DEGENERATE_RCOND,
        });
    }
    Ok(chol)
}

/// Zero-forcing filter `(H^T H)^{-1} H^T` (`2K x 2N`).
pub fn zf_matrix(sample: &ChannelSample) -> Result<DMatrix<f64>> {
    let chol = checked_cholesky(gram(sample))?;
    Ok(chol.solve(&sample.h_real().transpose()))
}

/// MMSE filter `(H^T H + mu I)^{-1} H^T`. `mu = 0` is exactly [`zf_matrix`].
pub fn mmse_matrix(sample: &ChannelSample, mu: f64) -> Result<DMatrix<f64>> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("MMSE regularizer must be >= 0, got {mu}")));
    }
    if mu == 0.0 {
        return zf_matrix(sample);
    }
    let mut g = gram(sample);
    for i in 0..g.nrows() {
        g[(i, i)] += mu;
    }
    let chol = checked_cholesky(g)?;
    Ok(chol.solve(&sample.h_real().transpose()))
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn extreme_eigenvalues(x: &DMatrix<f64>) -> (f64, f64) {
    let ev = x.clone().symmetric_eigenvalues();
    (ev.min(), ev.max())
}

/// Normalization factor with the fastest asymptotic convergence,
/// `2 / (lambda_min(G) + lambda_max(G))`.
pub fn alpha_opt(sample: &ChannelSample) -> Result<f64> {
    alpha_opt_from_gram(&gram(sample))
}

pub fn alpha_opt_from_gram(g: &DMatrix<f64>) -> Result<f64> {
    let (lo, hi) = extreme_eigenvalues(g);
    alpha_from_extremes(lo, hi)
}

/// `2 / (lo + hi)`, rejecting a non-positive spectrum.
pub fn alpha_from_extremes(lo: f64, hi: f64) -> Result<f64> {
    let s = lo + hi;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eigenvalue sum {s} is not positive; Gram matrix is not positive definite"
        )));
    }
    Ok(2.0 / s)
}

/// Marchenko-Pastur support edges `((1 - sqrt(beta))^2, (1 + sqrt(beta))^2)`.
pub fn marchenko_pastur_edges(dims: SystemDims) -> (f64, f64) {
    let r = libm::sqrt(dims.beta());
    ((1.0 - r) * (1.0 - r), (1.0 + r) * (1.0 + r))
}

/// Channel-independent normalization factor `1 / (1 + beta)`: the optimal
/// factor evaluated at the Marchenko-Pastur edges.
pub fn alpha_constant(dims: SystemDims) -> f64 {
    1.0 / (1.0 + dims.beta())
}

/// Power-method normalization factor: `2 / (lambda_max_hat + (1 - sqrt(beta))^2)`
/// with `lambda_max_hat` from `iterations` products with `G`, applied as
/// `H^T (H v)` so the Gram matrix is never formed.
pub fn alpha_power(sample: &ChannelSample, iterations: usize, stream: &mut Substream) -> Result<f64> {
    let lambda_max = power_lambda_max(sample, iterations, stream)?;
    let (lo, _) = marchenko_pastur_edges(sample.dims());
    alpha_from_extremes(lo, lambda_max)
}

/// Power-iteration estimate of `lambda_max(G)` from a random start vector.
pub fn power_lambda_max(sample: &ChannelSample, iterations: usize, stream: &mut Substream) -> Result<f64> {
    let h = sample.h_real();
    let dim = h.ncols();
    let start = loop {
        let v = DVector::from_fn(dim, |_, _| stream.normal());
        if v.norm_squared() > 0.0 {
            break v;
        }
    };
    power_iteration(|v| h.tr_mul(&(h * v)), start, iterations)
}

/// Rayleigh quotient after `iterations` applications of a symmetric PSD operator.
///
/// Each step computes `w = A v`, records `v^T w / v^T v` and continues from
/// `w / |w|`. For PSD operators the estimate is nondecreasing in `iterations`
/// and bounded by `lambda_max`.
pub fn power_iteration<F>(mut apply: F, start: DVector<f64>, iterations: usize) -> Result<f64>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    if iterations == 0 {
        return Err(Error::InvalidParameter("power method needs at least one iteration".into()));
    }
    let norm = start.norm();
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter("power method start vector is zero".into()));
    }
    let mut v = start / norm;
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = apply(&v);
        estimate = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        v = w / wn;
    }
    Ok(estimate)
}

/// Where a coefficient vector came from.
#[derive(Debug, Clone, PartialEq)]
pub enum CoeffOrigin {
    /// Synthesized from a normalization factor.
    FromAlpha(f64),
    /// Learned from data; carries a checkpoint identifier.
    Learned(String),
}

/// TPE coefficients `w_0 .. w_{J-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TpeCoefficients {
    w: Vec<f64>,
    origin: CoeffOrigin,
}

impl TpeCoefficients {
    /// Learned coefficients. For `FromAlpha` use [`coeffs_from_alpha`].
    pub fn learned(w: Vec<f64>, id: impl Into<String>) -> Result<Self> {
        check_order(w.len())?;
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("coefficients must be finite".into()));
        }
        Ok(Self {
            w,
            origin: CoeffOrigin::Learned(id.into()),
        })
    }

    pub fn order(&self) -> usize {
        self.w.len()
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn origin(&self) -> &CoeffOrigin {
        &self.origin
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.origin {
            CoeffOrigin::FromAlpha(a) => Some(a),
            CoeffOrigin::Learned(_) => None,
        }
    }
}

fn check_order(order_j: usize) -> Result<()> {
    if order_j == 0 {
        Err(Error::ZeroOrder)
    } else if order_j > MAX_ORDER {
        Err(Error::OrderTooLarge(order_j))
    } else {
        Ok(())
    }
}

/// Binomial coefficient in exact integer arithmetic.
fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) after each step
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// Coefficients of the order-`J` truncated Neumann series,
/// `w_l = alpha (-alpha)^l sum_{n=l}^{J-1} C(n, l)`.
pub fn coeffs_from_alpha(alpha: f64, order_j: usize) -> Result<TpeCoefficients> {
    check_order(order_j)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let j = order_j as u32;
    let mut w = Vec::with_capacity(order_j);
    let mut power = alpha;
    for l in 0..j {
        let sum: u128 = (l..j).map(|n| binomial(n, l)).sum();
        w.push(power * sum as f64);
        power *= -alpha;
    }
    Ok(TpeCoefficients {
        w,
        origin: CoeffOrigin::FromAlpha(alpha),
    })
}

/// `alpha sum_{l<J} (I - alpha X)^l` for a symmetric positive definite `X`.
///
/// Rejects `alpha` outside `(0, 2 / lambda_max(X))`, where the series diverges.
pub fn neumann_partial_sum(x: &DMatrix<f64>, alpha: f64, order_j: usize) -> Result<DMatrix<f64>> {
    check_order(order_j)?;
    if !x.is_square() {
        return Err(Error::DimensionMismatch(format!("X is {}x{}", x.nrows(), x.ncols())));
    }
    let (_, hi) = extreme_eigenvalues(x);
    let bound = 2.0 / hi;
    if !(alpha > 0.0 && alpha < bound) {
        return Err(Error::AlphaOutOfRange { alpha, bound });
    }
    let d = x.nrows();
    let residual = DMatrix::<f64>::identity(d, d) - x * alpha;
    let mut term = DMatrix::<f64>::identity(d, d);
    let mut acc = term.clone();
    for _ in 1..order_j {
        term = &residual * &term;
        acc += &term;
    }
    Ok(acc * alpha)
}

/// A linear map applied by products with `H` and `H^T` only.
pub trait ChannelOperator {
    /// `H x`
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `H^T y`
    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64>;
    /// Shape `(rows, cols)` of `H`.
    fn shape(&self) -> (usize, usize);
}

impl ChannelOperator for DMatrix<f64> {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }

    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(y)
    }

    fn shape(&self) -> (usize, usize) {
        DMatrix::shape(self)
    }
}

impl ChannelOperator for ChannelSample {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.h_real() * x
    }

    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        self.h_real().tr_mul(y)
    }

    fn shape(&self) -> (usize, usize) {
        self.h_real().shape()
    }
}

/// Wraps an operator and counts products with `H` and `H^T`.
pub struct CountingOperator<'a, O: ?Sized> {
    inner: &'a O,
    forward: Cell<usize>,
    transpose: Cell<usize>,
}

impl<'a, O: ChannelOperator + ?Sized> CountingOperator<'a, O> {
    pub fn new(inner: &'a O) -> Self {
        Self {
            inner,
            forward: Cell::new(0),
            transpose: Cell::new(0),
        }
    }

    /// Number of products with `H`.
    pub fn forward_count(&self) -> usize {
        self.forward.get()
    }

    /// Number of products with `H^T`.
    pub fn transpose_count(&self) -> usize {
        self.transpose.get()
    }
}

impl<O: ChannelOperator + ?Sized> ChannelOperator for CountingOperator<'_, O> {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.forward.set(self.forward.get() + 1);
        self.inner.apply(x)
    }

    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        self.transpose.set(self.transpose.get() + 1);
        self.inner.apply_transpose(y)
    }

    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }
}

/// The vectors `x_0 = H^T y`, `x_l = H^T (H x_{l-1})` for `l < order_j`.
pub fn tpe_basis<O: ChannelOperator + ?Sized>(op: &O, y: &DVector<f64>, order_j: usize) -> Vec<DVector<f64>> {
    let mut basis = Vec::with_capacity(order_j);
    if order_j == 0 {
        return basis;
    }
    basis.push(op.apply_transpose(y));
    for l in 1..order_j {
        let next = op.apply_transpose(&op.apply(&basis[l - 1]));
        basis.push(next);
    }
    basis
}

/// `sum_l w_l x_l` over a precomputed [`tpe_basis`].
pub fn combine_basis(basis: &[DVector<f64>], w: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(basis[0].len());
    for (x, &wl) in basis.iter().zip(w) {
        out.axpy(wl, x, 1.0);
    }
    out
}

/// Matrix-free TPE detection on any [`ChannelOperator`]: `J` products with
/// `H^T` and `J - 1` with `H`.
pub fn tpe_detect_with<O: ChannelOperator + ?Sized>(op: &O, y: &DVector<f64>, w: &[f64]) -> Result<DVector<f64>> {
    let (rows, _) = op.shape();
    if y.len() != rows {
        return Err(Error::DimensionMismatch(format!("y has {} entries, H has {rows} rows", y.len())));
    }
    check_order(w.len())?;
    let mut xl = op.apply_transpose(y);
    let mut out = &xl * w[0];
    for &wl in &w[1..] {
        xl = op.apply_transpose(&op.apply(&xl));
        out.axpy(wl, &xl, 1.0);
    }
    Ok(out)
}

/// TPE detection. Coefficients derived from a normalization factor run through
/// the Neumann recurrence, which evaluates the same polynomial without the
/// cancellation between large alternating-sign coefficients at high order.
pub fn tpe_detect(sample: &ChannelSample, y: &DVector<f64>, coeffs: &TpeCoefficients) -> Result<DVector<f64>> {
    match coeffs.origin() {
        CoeffOrigin::FromAlpha(alpha) => neumann_detect_with(sample, y, *alpha, coeffs.order()),
        CoeffOrigin::Learned(_) => tpe_detect_with(sample, y, coeffs.w()),
    }
}

/// `x_0 = alpha H^T y`, `x_{n+1} = x_n + alpha (H^T y - H^T H x_n)`. After `J`
/// terms this equals [`tpe_detect_with`] on [`coeffs_from_alpha`] weights, with
/// the same `J` products by `H^T` and `J - 1` by `H`.
pub fn neumann_detect_with<O: ChannelOperator + ?Sized>(
    op: &O,
    y: &DVector<f64>,
    alpha: f64,
    order_j: usize,
) -> Result<DVector<f64>> {
    let (rows, _) = op.shape();
    if y.len() != rows {
        return Err(Error::DimensionMismatch(format!("y has {} entries, H has {rows} rows", y.len())));
    }
    check_order(order_j)?;
    Ok(neumann_from_matched(op, &op.apply_transpose(y), alpha, order_j))
}

/// Neumann recurrence starting from a precomputed matched filter output `H^T y`.
pub fn neumann_from_matched<O: ChannelOperator + ?Sized>(
    op: &O,
    hty: &DVector<f64>,
    alpha: f64,
    order_j: usize,
) -> DVector<f64> {
    let mut x = hty * alpha;
    for _ in 1..order_j {
        let gx = op.apply_transpose(&op.apply(&x));
        x += (hty - gx) * alpha;
    }
    x
}

/// Dense `sum_l w_l G^l H^T` (`2K x 2N`). Reference path for training and tests.
pub fn tpe_matrix(sample: &ChannelSample, coeffs: &TpeCoefficients) -> DMatrix<f64> {
    match coeffs.origin() {
        CoeffOrigin::FromAlpha(alpha) => {
            let g = gram(sample);
            let ht = sample.h_real().transpose();
            let mut w = &ht * *alpha;
            for _ in 1..coeffs.order() {
                let gw = &g * &w;
                w += (&ht - gw) * *alpha;
            }
            w
        }
        CoeffOrigin::Learned(_) => tpe_matrix_from_weights(sample, coeffs.w()),
    }
}

pub fn tpe_matrix_from_weights(sample: &ChannelSample, w: &[f64]) -> DMatrix<f64> {
    let g = gram(sample);
    let mut term = sample.h_real().transpose();
    let mut acc = DMatrix::zeros(term.nrows(), term.ncols());
    for (l, &wl) in w.iter().enumerate() {
        if l > 0 {
            term = &g * &term;
        }
        acc += &term * wl;
    }
    acc
}
