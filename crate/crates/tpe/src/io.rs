//! File formats: JSON documents (checkpoints, configs, manifests, datasets,
//! summaries) and CSV tables (loss history, BER curves, constellations).
//!
//! Writers are deterministic: identical values give identical bytes.

use std::fs;
use std::path::Path;

use nalgebra::{Complex, DMatrix};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tpe_core::detect::TpeCoefficients;
use tpe_core::model::{ChannelSample, Constellation, SystemDims};
use tpe_core::rng::{Purpose, SeedTag};
use tpe_core::sim::{BerCurve, BerPoint};
use tpe_core::train::{Checkpoint, Dataset, EpochRecord, LossHistory, CHECKPOINT_SCHEMA_VERSION};

use crate::error::{CliError, Result};

pub const BER_HEADER: [&str; 7] = ["detector", "J", "snr_db", "bits", "errors", "ber", "censored"];
pub const HISTORY_HEADER: [&str; 3] = ["epoch", "lr", "mean_loss"];
pub const DATASET_SCHEMA_VERSION: u32 = 1;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Byte offset of a 1-based `(line, column)` position.
pub fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return text.len();
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        offset: byte_offset(text, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(path, &read_text(path)?)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory values always serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, to_json(value).as_bytes())
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_json(path, checkpoint)
}

/// Reads a checkpoint and checks its schema version and internal consistency.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = read_text(path)?;
    let raw: serde_json::Value = parse_json(path, &text)?;
    match raw.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == CHECKPOINT_SCHEMA_VERSION as u64 => {}
        other => {
            return Err(CliError::Validation(format!(
                "{}: unsupported checkpoint schema_version {} (expected {CHECKPOINT_SCHEMA_VERSION})",
                path.display(),
                other.map_or("missing".into(), |v| v.to_string())
            )))
        }
    }
    let ck: Checkpoint = parse_json(path, &text)?;
    ck.to_coeffs().map_err(|e| CliError::from(e).context(&path.display().to_string()))?;
    Ok(ck)
}

/// Coefficients from a checkpoint that must match `dims` and `order_j`.
pub fn load_coeffs(path: &Path, dims: SystemDims, order_j: usize) -> Result<TpeCoefficients> {
    let ck = load_checkpoint(path)?;
    ck.coeffs_for(dims, order_j).map_err(|e| CliError::from(e).context(&path.display().to_string()))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_bytes(path, &bytes)
}

fn read_table(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let text = read_text(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let got = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            message: format!("expected header `{}`", header.join(",")),
        });
    }
    r.records().collect::<Result<_, _>>().map_err(|e| csv_error(path, e))
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| CliError::Format {
        path: path.to_path_buf(),
        message: format!("line {}: cannot parse column {i} value `{raw}`", rec.position().map_or(0, |p| p.line())),
    })
}

pub fn write_history(path: &Path, history: &LossHistory) -> Result<()> {
    let rows = history
        .records
        .iter()
        .map(|r| vec![r.epoch.to_string(), r.lr.to_string(), r.mean_loss.to_string()]);
    write_table(path, &HISTORY_HEADER, rows)
}

pub fn read_history(path: &Path) -> Result<LossHistory> {
    let records = read_table(path, &HISTORY_HEADER)?
        .iter()
        .map(|rec| {
            Ok(EpochRecord {
                epoch: field(path, rec, 0)?,
                lr: field(path, rec, 1)?,
                mean_loss: field(path, rec, 2)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(LossHistory { records })
}

/// BER table, one row per detector and SNR point in the order given.
pub fn write_ber_csv(path: &Path, curves: &[BerCurve]) -> Result<()> {
    write_bytes(path, ber_csv_string(curves)?.as_bytes())
}

pub fn ber_csv_string(curves: &[BerCurve]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Validation(e.to_string());
    w.write_record(BER_HEADER).map_err(fail)?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.detector.clone(),
                c.order_j.map_or(String::new(), |j| j.to_string()),
                p.snr_db.to_string(),
                p.bits.to_string(),
                p.errors.to_string(),
                p.ber().to_string(),
                p.censored.to_string(),
            ])
            .map_err(fail)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses a BER table back into curves. Consecutive rows with the same
/// detector and order form one curve. Degenerate-trial counts are not stored.
pub fn read_ber_csv(path: &Path) -> Result<Vec<BerCurve>> {
    let mut curves: Vec<BerCurve> = Vec::new();
    for rec in read_table(path, &BER_HEADER)? {
        let detector: String = field(path, &rec, 0)?;
        let order_j = match rec.get(1).unwrap_or("") {
            "" => None,
            _ => Some(field(path, &rec, 1)?),
        };
        let point = BerPoint {
            snr_db: field(path, &rec, 2)?,
            bits: field(path, &rec, 3)?,
            errors: field(path, &rec, 4)?,
            censored: field(path, &rec, 6)?,
            degenerate_trials: 0,
        };
        let ber: f64 = field(path, &rec, 5)?;
        if ber.to_bits() != point.ber().to_bits() {
            return Err(CliError::Format {
                path: path.to_path_buf(),
                message: format!("ber {ber} does not equal errors/bits for {detector} at {} dB", point.snr_db),
            });
        }
        match curves.last_mut() {
            Some(c) if c.detector == detector && c.order_j == order_j => c.points.push(point),
            _ => curves.push(BerCurve {
                detector,
                order_j,
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}

pub fn write_constellation_csv(path: &Path, c: &Constellation) -> Result<()> {
    let rows = c.points().iter().enumerate().map(|(i, z)| {
        let bits: String = c.bits_of(i as u32).iter().map(|&b| if b { '1' } else { '0' }).collect();
        vec![i.to_string(), bits, z.re.to_string(), z.im.to_string()]
    });
    write_table(path, &["index", "bits", "re", "im"], rows)
}

/// Interpolated operating point of one curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub detector: String,
    #[serde(rename = "J")]
    pub order_j: Option<usize>,
    #[serde(rename = "snr_at_ber_1e-3")]
    pub snr_at_ber: Option<f64>,
    pub gap_to_zf_db: Option<f64>,
}

pub fn summarize(scenario: &str, curves: &[BerCurve]) -> Vec<SummaryRow> {
    let zf = curves.iter().find(|c| c.detector == "zf");
    curves
        .iter()
        .map(|c| SummaryRow {
            scenario: scenario.into(),
            detector: c.detector.clone(),
            order_j: c.order_j,
            snr_at_ber: c.snr_at_ber(1e-3),
            gap_to_zf_db: zf.and_then(|z| tpe_core::sim::gap_db(c, z, 1e-3)),
        })
        .collect()
}

/// Serialized channel samples, column-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub schema_version: u32,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub master_seed: u64,
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub index: u64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl DatasetFile {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let samples = ds
            .samples()
            .iter()
            .enumerate()
            .map(|(i, s)| SampleRecord {
                index: i as u64,
                re: s.h_complex().iter().map(|z| z.re).collect(),
                im: s.h_complex().iter().map(|z| z.im).collect(),
            })
            .collect();
        Self {
            schema_version: DATASET_SCHEMA_VERSION,
            n: ds.dims().n(),
            k: ds.dims().k(),
            master_seed: ds.master_seed(),
            samples,
        }
    }

    pub fn to_dataset(&self) -> tpe_core::Result<Dataset> {
        if self.schema_version != DATASET_SCHEMA_VERSION {
            return Err(tpe_core::Error::InvalidConfig(format!(
                "unsupported dataset schema_version {}",
                self.schema_version
            )));
        }
        let dims = SystemDims::new(self.n, self.k)?;
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if r.index != i as u64 || r.re.len() != self.n * self.k || r.im.len() != self.n * self.k {
                    return Err(tpe_core::Error::InvalidConfig(format!("dataset sample {i} is malformed")));
                }
                let entries = r.re.iter().zip(&r.im).map(|(&a, &b)| Complex::new(a, b));
                let tag = SeedTag {
                    master_seed: self.master_seed,
                    purpose: Purpose::Channel,
                    index: r.index,
                };
                Ok(ChannelSample::from_complex(DMatrix::from_iterator(self.n, self.k, entries))?.with_seed_tag(tag))
            })
            .collect::<tpe_core::Result<Vec<_>>>()?;
        Dataset::from_samples(dims, self.master_seed, samples)
    }
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file: DatasetFile = read_json(path)?;
    file.to_dataset().map_err(|e| CliError::from(e).context(&path.display().to_string()))
}
