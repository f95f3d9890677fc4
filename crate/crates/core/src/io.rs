//! File formats: GLF1 tensors, JSON calibration reports, reliability CSV.
//!
//! GLF1 layout (all integers little-endian):
//!
//! ```text
//! b"GLF1" | ndim: u32 | dims: ndim × u32 | dtype: u8 | payload
//! ```
//!
//! `dtype` is 1 for `f32` and 2 for `u32`; the payload holds exactly
//! `∏ dims` row-major elements. `ndim` is in `1..=4` and every dim is ≥ 1.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::gaussian::GaussianField;
use crate::metrics::{BinStats, CalibrationReport};

pub const MAGIC: [u8; 4] = *b"GLF1";
pub const MAX_RANK: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TensorError {
    #[error("bad magic {0:?}, expected \"GLF1\"")]
    BadMagic([u8; 4]),
    #[error("truncated header: need {needed} bytes, have {got}")]
    Truncated { needed: usize, got: usize },
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("rank {0} is outside 1..=4")]
    BadRank(u32),
    #[error("dimension {index} is zero")]
    ZeroDim { index: usize },
    #[error("element count overflows")]
    TooLarge,
    #[error("payload length mismatch: expected {expected} bytes, found {actual}")]
    LengthMismatch { expected: u64, actual: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32 = 1,
    U32 = 2,
}

impl DType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self, TensorError> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::U32),
            c => Err(TensorError::UnknownDtype(c)),
        }
    }
}

#[derive(Clone, Debug)]
pub enum TensorData {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::U32(_) => DType::U32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Compares f32 payloads by bit pattern so NaNs compare equal to themselves.
impl PartialEq for TensorData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::U32(a), TensorData::U32(b)) => a == b,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: TensorData,
}

fn element_count(dims: &[u32]) -> Option<u64> {
    dims.iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(u64::from(d)))
}

fn check_dims(dims: &[u32]) -> Result<u64, TensorError> {
    if dims.is_empty() || dims.len() > MAX_RANK {
        return Err(TensorError::BadRank(dims.len() as u32));
    }
    if let Some(index) = dims.iter().position(|&d| d == 0) {
        return Err(TensorError::ZeroDim { index });
    }
    element_count(dims)
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or(TensorError::TooLarge)
}

impl Tensor {
    pub fn new(dims: Vec<u32>, data: TensorData) -> Result<Self, TensorError> {
        let count = check_dims(&dims)?;
        if count != data.len() as u64 {
            return Err(TensorError::LengthMismatch {
                expected: count * 4,
                actual: data.len() as u64 * 4,
            });
        }
        Ok(Self { dims, data })
    }

    pub fn f32(dims: Vec<u32>, values: Vec<f32>) -> Result<Self, TensorError> {
        Self::new(dims, TensorData::F32(values))
    }

    pub fn u32(dims: Vec<u32>, values: Vec<u32>) -> Result<Self, TensorError> {
        Self::new(dims, TensorData::U32(values))
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(self.dtype().code());
        match &self.data {
            TensorData::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorError> {
        let need = |needed: usize| {
            if bytes.len() < needed {
                Err(TensorError::Truncated {
                    needed,
                    got: bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());

        need(4)?;
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(TensorError::BadMagic(magic));
        }
        need(8)?;
        let ndim = u32_at(4);
        if ndim == 0 || ndim as usize > MAX_RANK {
            return Err(TensorError::BadRank(ndim));
        }
        let ndim = ndim as usize;
        let header = 8 + 4 * ndim + 1;
        need(header)?;
        let dims: Vec<u32> = (0..ndim).map(|i| u32_at(8 + 4 * i)).collect();
        let count = check_dims(&dims)?;
        let dtype = DType::from_code(bytes[header - 1])?;

        let payload = &bytes[header..];
        let expected = count * 4;
        if payload.len() as u64 != expected {
            return Err(TensorError::LengthMismatch {
                expected,
                actual: payload.len() as u64,
            });
        }
        let words = payload.chunks_exact(4).map(|c| c.try_into().unwrap());
        let data = match dtype {
            DType::F32 => TensorData::F32(words.map(f32::from_le_bytes).collect()),
            DType::U32 => TensorData::U32(words.map(u32::from_le_bytes).collect()),
        };
        Ok(Self { dims, data })
    }

    pub fn into_f32(self) -> Result<(Vec<u32>, Vec<f32>)> {
        match self.data {
            TensorData::F32(v) => Ok((self.dims, v)),
            TensorData::U32(_) => Err(Error::ShapeMismatch(
                "expected an f32 tensor, found u32".into(),
            )),
        }
    }

    pub fn into_u32(self) -> Result<(Vec<u32>, Vec<u32>)> {
        match self.data {
            TensorData::U32(v) => Ok((self.dims, v)),
            TensorData::F32(_) => Err(Error::ShapeMismatch(
                "expected a u32 tensor, found f32".into(),
            )),
        }
    }
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.to_bytes()).map_err(|e| Error::file(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    Ok(Tensor::from_bytes(&bytes)?)
}

/// Builds a field from `(H, W, C)` (or `(N, C)`, read as `1 × N`) means and
/// stds tensors.
pub fn field_from_tensors(means: Tensor, stds: Tensor) -> Result<GaussianField> {
    let (md, mv) = means.into_f32()?;
    let (sd, sv) = stds.into_f32()?;
    if md != sd {
        return Err(Error::ShapeMismatch(format!(
            "means shape {md:?} differs from stds shape {sd:?}"
        )));
    }
    let (h, w, c) = match md.as_slice() {
        &[h, w, c] => (h, w, c),
        &[n, c] => (1, n, c),
        other => {
            return Err(Error::ShapeMismatch(format!(
                "field tensors must be (H, W, C) or (N, C), got {other:?}"
            )))
        }
    };
    GaussianField::new(
        h as usize,
        w as usize,
        c as usize,
        mv.into_iter().map(f64::from).collect(),
        sv.into_iter().map(f64::from).collect(),
    )
}

/// Means and stds tensors of shape `(H, W, C)`.
pub fn field_to_tensors(f: &GaussianField) -> (Tensor, Tensor) {
    let dims = vec![f.height() as u32, f.width() as u32, f.classes() as u32];
    let cast = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
    (
        Tensor::f32(dims.clone(), cast(f.means())).expect("field shape is valid"),
        Tensor::f32(dims, cast(f.stds())).expect("field shape is valid"),
    )
}

pub fn write_field(f: &GaussianField, means: &Path, stds: &Path) -> Result<()> {
    let (m, s) = field_to_tensors(f);
    write_tensor(means, &m)?;
    write_tensor(stds, &s)
}

pub fn read_field(means: &Path, stds: &Path) -> Result<GaussianField> {
    field_from_tensors(read_tensor(means)?, read_tensor(stds)?)
}

/// Calibration report plus run metadata, as written to JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    #[serde(flatten)]
    pub calibration: CalibrationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class_iou: Option<Vec<Option<f64>>>,
    pub method: String,
    pub sample_count: usize,
    pub seed: u64,
    pub wall_time_seconds: f64,
}

pub fn report_to_string(report: &ReportFile) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn write_report(path: impl AsRef<Path>, report: &ReportFile) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report_to_string(report)?).map_err(|e| Error::file(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportFile> {
    let path = path.as_ref();
    let s = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

/// Reliability rows as CSV with header
/// `lower,upper,count,mean_confidence,accuracy`.
pub fn rows_to_csv(rows: &[BinStats]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["lower", "upper", "count", "mean_confidence", "accuracy"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv(path: impl AsRef<Path>, rows: &[BinStats]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, rows_to_csv(rows)?).map_err(|e| Error::file(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<BinStats>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<BinStats>, _>>()?;
    Ok(rows)
}
