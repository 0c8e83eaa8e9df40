//! Reference routines that share no code with the crate's linear algebra.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, DVector};
use tpe_core::model::{sample_channel, ChannelSample, SystemDims};
use tpe_core::rng::{Purpose, Substream};

pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(m: &DMatrix<f64>) -> Dense {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = to_dense(m);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut a = to_dense(m);
    let mut inv: Dense = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap()).unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..n {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for j in 0..n {
                        a[r][j] -= f * a[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    DMatrix::from_fn(n, n, |r, c| inv[r][c])
}

/// Plain triple-loop product.
pub fn matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.ncols(), |r, c| (0..a.ncols()).map(|k| a[(r, k)] * b[(k, c)]).sum())
}

pub fn transpose(a: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.ncols(), a.nrows(), |r, c| a[(c, r)])
}

/// ZF filter `(H^T H)^{-1} H^T` via the Gauss-Jordan inverse.
pub fn zf_oracle(h: &DMatrix<f64>) -> DMatrix<f64> {
    let ht = transpose(h);
    matmul(&gauss_jordan_inverse(&matmul(&ht, h)), &ht)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    jacobi_eigenvalues(m).iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Complex matrix-vector product written out in real arithmetic.
pub fn complex_matvec(a: &DMatrix<Complex<f64>>, v: &DVector<Complex<f64>>) -> Vec<(f64, f64)> {
    (0..a.nrows())
        .map(|r| {
            let mut re = 0.0;
            let mut im = 0.0;
            for c in 0..a.ncols() {
                let (ar, ai, vr, vi) = (a[(r, c)].re, a[(r, c)].im, v[c].re, v[c].im);
                re += ar * vr - ai * vi;
                im += ar * vi + ai * vr;
            }
            (re, im)
        })
        .collect()
}

pub fn channel(n: usize, k: usize, seed: u64) -> ChannelSample {
    sample_channel(SystemDims::new(n, k).unwrap(), &mut Substream::new(seed, Purpose::Other(77), 0))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Random symmetric positive definite matrix `Q diag(ev) Q^T`-like, built as
/// `A^T A + shift I` from Gaussian entries.
pub fn random_spd(n: usize, seed: u64, shift: f64) -> DMatrix<f64> {
    let mut s = Substream::new(seed, Purpose::Other(78), 0);
    let a = DMatrix::from_fn(n, n, |_, _| s.normal() / (n as f64).sqrt());
    let mut m = matmul(&transpose(&a), &a);
    for i in 0..n {
        m[(i, i)] += shift;
    }
    m
}
