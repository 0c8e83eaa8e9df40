//! Coefficient file schema shared by training and detection.
//!
//! ```json
//! {"schema_version": 1, "N": 128, "K": 16, "J": 4, "w": [..],
//!  "origin": "learned", "alpha": null, "train_seed": 1, "loss_final": 0.1,
//!  "checkpoint_id": "adam/N128K16J4/M10000/seed1", "adam": {..}}
//! ```
//!
//! `origin` is `"from_alpha"` (then `alpha` is required and `w` must equal the
//! expansion of that `alpha`) or `"learned"`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::AdamHyper;
use crate::detect::{coeffs_from_alpha, CoeffOrigin, TpeCoefficients};
use crate::model::SystemDims;
use crate::{Error, Result};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub w: Vec<f64>,
    pub origin: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam: Option<AdamHyper>,
}

/// Optional provenance recorded next to the coefficients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointMeta {
    pub train_seed: Option<u64>,
    pub loss_final: Option<f64>,
    pub adam: Option<AdamHyper>,
}

impl Checkpoint {
    pub fn new(coeffs: &TpeCoefficients, dims: SystemDims, meta: CheckpointMeta) -> Self {
        let (origin, alpha, id) = match coeffs.origin() {
            CoeffOrigin::FromAlpha(a) => ("from_alpha", Some(*a), None),
            CoeffOrigin::Learned(id) => ("learned", None, Some(id.clone())),
        };
        Self {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            n: dims.n(),
            k: dims.k(),
            j: coeffs.order(),
            w: coeffs.w().to_vec(),
            origin: origin.into(),
            alpha,
            train_seed: meta.train_seed,
            loss_final: meta.loss_final,
            checkpoint_id: id,
            adam: meta.adam,
        }
    }

    /// Checks the schema and internal consistency and rebuilds the coefficients.
    pub fn to_coeffs(&self) -> Result<TpeCoefficients> {
        if self.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint schema_version {} (expected {CHECKPOINT_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        SystemDims::new(self.n, self.k)?;
        if self.w.len() != self.j {
            return Err(Error::DimensionMismatch(format!(
                "checkpoint declares J={} but holds {} coefficients",
                self.j,
                self.w.len()
            )));
        }
        match self.origin.as_str() {
            "learned" => {
                let id = self.checkpoint_id.clone().unwrap_or_else(|| "learned".into());
                TpeCoefficients::learned(self.w.clone(), id)
            }
            "from_alpha" => {
                let alpha = self
                    .alpha
                    .ok_or_else(|| Error::InvalidConfig("origin from_alpha requires alpha".into()))?;
                let c = coeffs_from_alpha(alpha, self.j)?;
                if c.w() != self.w.as_slice() {
                    return Err(Error::InvalidConfig(format!(
                        "coefficients do not match the expansion of alpha={alpha}"
                    )));
                }
                Ok(c)
            }
            other => Err(Error::InvalidConfig(format!("unknown checkpoint origin `{other}`"))),
        }
    }

    /// Coefficients for a caller expecting a specific system and order.
    pub fn coeffs_for(&self, dims: SystemDims, order_j: usize) -> Result<TpeCoefficients> {
        let c = self.to_coeffs()?;
        if (self.n, self.k) != (dims.n(), dims.k()) || self.j != order_j {
            return Err(Error::DimensionMismatch(format!(
                "checkpoint is for N={} K={} J={}, requested N={} K={} J={order_j}",
                self.n,
                self.k,
                self.j,
                dims.n(),
                dims.k()
            )));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn coefficient_round_trip() {
        let dims = SystemDims::new(8, 2).unwrap();
        let c = coeffs_from_alpha(0.8, 3).unwrap();
        let ck = Checkpoint::new(&c, dims, CheckpointMeta::default());
        assert_eq!(ck.to_coeffs().unwrap(), c);
        let l = TpeCoefficients::learned(vec![1.0, -0.5], "run-1").unwrap();
        let ck = Checkpoint::new(&l, dims, CheckpointMeta::default());
        assert_eq!(ck.coeffs_for(dims, 2).unwrap(), l);
    }

    #[test]
    fn mismatches_are_rejected() {
        let dims = SystemDims::new(8, 2).unwrap();
        let l = TpeCoefficients::learned(vec![1.0, -0.5], "run-1").unwrap();
        let ck = Checkpoint::new(&l, dims, CheckpointMeta::default());
        assert!(matches!(ck.coeffs_for(dims, 3), Err(Error::DimensionMismatch(_))));
        let mut bad = ck.clone();
        bad.schema_version = 2;
        assert!(bad.to_coeffs().is_err());
        let mut bad = ck.clone();
        bad.w.pop();
        assert!(bad.to_coeffs().is_err());
        let mut bad = Checkpoint::new(&coeffs_from_alpha(0.8, 2).unwrap(), dims, CheckpointMeta::default());
        bad.w[1] += 1e-3;
        assert!(bad.to_coeffs().is_err());
    }
}
