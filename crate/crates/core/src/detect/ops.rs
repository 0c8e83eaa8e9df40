//! Complex-multiplication counts of the online detection stage.
//!
//! | row                     | complex multiplications                          |
//! |-------------------------|--------------------------------------------------|
//! | ZF / MMSE               | `NK^2/2 + K^3/2 + 3NK/2 + 5K^2/2`                 |
//! | TPE, constant alpha     | `2JNK - NK + JK`                                  |
//! | TPE, power-method alpha | `2JNK - NK + JK + KJ(J-1)/2 + 2(K + J)`           |
//! | TPE, learned            | `2JNK - NK + JK`                                  |
//!
//! All rows are evaluated in integer arithmetic. The halves always cancel:
//! `NK^2 + K^3 + 3NK + 5K^2` is even for every `N, K`, and so is `J(J-1)`.

use core::fmt;
use core::str::FromStr;

use crate::model::SystemDims;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    Zf,
    Mmse,
    TpeConstant,
    TpePower,
    TpeLearned,
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zf" => Ok(Self::Zf),
            "mmse" => Ok(Self::Mmse),
            "tpe-constant" | "constant" => Ok(Self::TpeConstant),
            "tpe-power" | "power" => Ok(Self::TpePower),
            "tpe-learned" | "learned" | "proposed" => Ok(Self::TpeLearned),
            _ => Err(Error::UnknownDetector(s.into())),
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Zf => "zf",
            Self::Mmse => "mmse",
            Self::TpeConstant => "tpe-constant",
            Self::TpePower => "tpe-power",
            Self::TpeLearned => "tpe-learned",
        })
    }
}

/// Which complexity formula a count instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TableRow {
    ExactLinear,
    TpeConstantAlpha,
    TpePowerAlpha,
    Proposed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OpCount {
    pub complex_mults: u64,
    pub formula: TableRow,
}

/// Exact complex-multiplication count of one detector.
///
/// `order_j` is required (and must be positive) for the TPE rows and ignored
/// for ZF/MMSE.
pub fn count_ops(kind: DetectorKind, dims: SystemDims, order_j: Option<usize>) -> Result<OpCount> {
    let n = dims.n() as u128;
    let k = dims.k() as u128;
    let tpe_j = || match order_j {
        Some(j) if j >= 1 => Ok(j as u128),
        _ => Err(Error::ZeroOrder),
    };
    let (count, formula) = match kind {
        DetectorKind::Zf | DetectorKind::Mmse => {
            ((n * k * k + k * k * k + 3 * n * k + 5 * k * k) / 2, TableRow::ExactLinear)
        }
        DetectorKind::TpeConstant => {
            let j = tpe_j()?;
            (2 * j * n * k - n * k + j * k, TableRow::TpeConstantAlpha)
        }
        DetectorKind::TpeLearned => {
            let j = tpe_j()?;
            (2 * j * n * k - n * k + j * k, TableRow::Proposed)
        }
        DetectorKind::TpePower => {
            let j = tpe_j()?;
            let base = 2 * j * n * k - n * k + j * k;
            (base + k * j * (j - 1) / 2 + 2 * (k + j), TableRow::TpePowerAlpha)
        }
    };
    let complex_mults = u64::try_from(count)
        .map_err(|_| Error::InvalidParameter(alloc::format!("operation count {count} overflows u64")))?;
    Ok(OpCount {
        complex_mults,
        formula,
    })
}

/// Relative saving of `proposed` over `baseline`, in percent.
pub fn savings_percent(baseline: &OpCount, proposed: &OpCount) -> f64 {
    100.0 * (1.0 - proposed.complex_mults as f64 / baseline.complex_mults as f64)
}
