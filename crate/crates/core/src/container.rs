//! Binary containers for labeled feature sets and fitted models.
//!
//! Feature container, all integers little-endian:
//!
//! ```text
//! "SDBEFV1\0" | m: u64 | n: u64 | n x i32 labels | m*n x f64 column-major
//! ```
//!
//! Model container:
//!
//! ```text
//! "SDBEMD1\0" | mode: u8 | lambda: f64 | flags: u8 | split_index: u64 | blocks
//! ```
//!
//! where each block uses the feature layout without the magic. Mode 1 (l1)
//! stores `D` with its class-then-pattern labels. Mode 2 (l2) stores `D`
//! followed by `P` (n x m). Mode 3 (compiled) stores only `W` (m x m). Blocks
//! of `P` and `W` carry zero labels. Flag bits: 0 column, 1 query, 2 output
//! normalization.

use nalgebra::DMatrix;

use crate::dictionary::ConcatDictionary;
use crate::error::{FormatError, Result, SdbeError};
use crate::estimator::{CompiledLinear, FitConfig, Mode, NormalizationFlags, SdbeModel};
use crate::feature::LabeledFeatureSet;
use crate::ridge::RidgeOperator;

pub const FEATURE_MAGIC: &[u8; 8] = b"SDBEFV1\0";
pub const MODEL_MAGIC: &[u8; 8] = b"SDBEMD1\0";

const MODE_L1: u8 = 1;
const MODE_L2: u8 = 2;
const MODE_COMPILED: u8 = 3;

fn put_block(out: &mut Vec<u8>, matrix: &DMatrix<f64>, labels: &[i32]) -> Result<()> {
    if labels.len() != matrix.ncols() {
        return Err(FormatError::LabelCountMismatch {
            expected: matrix.ncols(),
            found: labels.len(),
        }
        .into());
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(FormatError::NonFinitePayload.into());
    }
    out.extend_from_slice(&(matrix.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.ncols() as u64).to_le_bytes());
    for l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for x in matrix.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.at
    }

    fn take(&mut self, n: usize) -> &'a [u8] {
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        s
    }

    fn header(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::TruncatedHeader);
        }
        Ok(self.take(n))
    }

    fn u64(&mut self) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(
            self.header(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn block(&mut self) -> std::result::Result<(DMatrix<f64>, Vec<i32>), FormatError> {
        let m = self.u64()?;
        let n = self.u64()?;
        let too_big =
            || FormatError::InconsistentPayload(format!("block size {m} x {n} overflows"));
        let m = usize::try_from(m).map_err(|_| too_big())?;
        let n = usize::try_from(n).map_err(|_| too_big())?;
        let label_bytes = n.checked_mul(4).ok_or_else(too_big)?;
        let data_bytes = m
            .checked_mul(n)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(too_big)?;
        if self.remaining() < label_bytes {
            return Err(FormatError::LabelCountMismatch {
                expected: n,
                found: self.remaining() / 4,
            });
        }
        let labels = self
            .take(label_bytes)
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if self.remaining() < data_bytes {
            return Err(FormatError::TruncatedPayload);
        }
        let data: Vec<f64> = self
            .take(data_bytes)
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(FormatError::NonFinitePayload);
        }
        Ok((DMatrix::from_vec(m, n, data), labels))
    }

    fn finish(&self) -> std::result::Result<(), FormatError> {
        match self.remaining() {
            0 => Ok(()),
            extra => Err(FormatError::TrailingBytes(extra)),
        }
    }
}

fn open<'a>(bytes: &'a [u8], magic: &[u8; 8]) -> std::result::Result<Reader<'a>, FormatError> {
    let mut r = Reader { bytes, at: 0 };
    if r.header(8)? != magic {
        return Err(FormatError::BadMagic);
    }
    Ok(r)
}

fn inconsistent(msg: impl Into<String>) -> SdbeError {
    FormatError::InconsistentPayload(msg.into()).into()
}

pub fn encode_matrix(matrix: &DMatrix<f64>, labels: &[i32]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(24 + 4 * labels.len() + 8 * matrix.len());
    out.extend_from_slice(FEATURE_MAGIC);
    put_block(&mut out, matrix, labels)?;
    Ok(out)
}

pub fn encode_features(set: &LabeledFeatureSet) -> Result<Vec<u8>> {
    encode_matrix(set.matrix(), set.labels())
}

/// Raw matrix and labels; `m` may be zero and no column grouping is assumed.
pub fn decode_matrix(bytes: &[u8]) -> Result<(DMatrix<f64>, Vec<i32>)> {
    let mut r = open(bytes, FEATURE_MAGIC)?;
    let block = r.block()?;
    r.finish()?;
    Ok(block)
}

pub fn decode_features(bytes: &[u8]) -> Result<LabeledFeatureSet> {
    let (matrix, labels) = decode_matrix(bytes)?;
    LabeledFeatureSet::new(matrix, labels).map_err(|e| inconsistent(e.to_string()))
}

/// A model as stored on disk.
#[derive(Debug, Clone)]
pub enum StoredModel {
    Sdbe(Box<SdbeModel>),
    Compiled(CompiledLinear),
}

fn model_header(out: &mut Vec<u8>, mode: u8, lambda: f64, flags: NormalizationFlags, split: usize) {
    out.extend_from_slice(MODEL_MAGIC);
    out.push(mode);
    out.extend_from_slice(&lambda.to_le_bytes());
    out.push(flags.bits());
    out.extend_from_slice(&(split as u64).to_le_bytes());
}

pub fn encode_model(model: &SdbeModel) -> Result<Vec<u8>> {
    let d = model.dictionary();
    let mut out = Vec::new();
    match model.ridge() {
        Some(op) => {
            model_header(
                &mut out,
                MODE_L2,
                model.lambda(),
                model.flags(),
                d.split_index(),
            );
            put_block(&mut out, d.matrix(), &d.labels())?;
            put_block(&mut out, op.p(), &vec![0; op.p().ncols()])?;
        }
        None => {
            model_header(
                &mut out,
                MODE_L1,
                model.lambda(),
                model.flags(),
                d.split_index(),
            );
            put_block(&mut out, d.matrix(), &d.labels())?;
        }
    }
    Ok(out)
}

pub fn encode_compiled(c: &CompiledLinear) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    model_header(&mut out, MODE_COMPILED, c.lambda(), c.flags(), 0);
    put_block(&mut out, c.w(), &vec![0; c.dim()])?;
    Ok(out)
}

fn zero_labels(labels: &[i32], what: &str) -> Result<()> {
    if labels.iter().any(|&l| l != 0) {
        return Err(inconsistent(format!("{what} block must carry zero labels")));
    }
    Ok(())
}

/// Decodes a model container. l1 models are rebuilt with default solver
/// tolerances.
pub fn decode_model(bytes: &[u8]) -> Result<StoredModel> {
    let mut r = open(bytes, MODEL_MAGIC)?;
    let mode = r.header(1)?[0];
    if !(MODE_L1..=MODE_COMPILED).contains(&mode) {
        return Err(FormatError::UnknownMode(mode).into());
    }
    let lambda = f64::from_le_bytes(r.header(8)?.try_into().expect("8 bytes"));
    if !lambda.is_finite() {
        return Err(FormatError::NonFinitePayload.into());
    }
    if lambda <= 0.0 {
        return Err(inconsistent(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let flag_byte = r.header(1)?[0];
    if flag_byte > 0b111 {
        return Err(inconsistent(format!("unknown flag bits {flag_byte:#04x}")));
    }
    let flags = NormalizationFlags::from_bits(flag_byte);
    let split = r.u64()?;
    let split = usize::try_from(split).map_err(|_| inconsistent("split index overflows"))?;

    let model = match mode {
        MODE_COMPILED => {
            let (w, labels) = r.block()?;
            r.finish()?;
            zero_labels(&labels, "compiled")?;
            if split != 0 {
                return Err(inconsistent("compiled model must have split index 0"));
            }
            if w.nrows() != w.ncols() || w.nrows() == 0 {
                return Err(inconsistent(format!(
                    "compiled matrix must be square, got {} x {}",
                    w.nrows(),
                    w.ncols()
                )));
            }
            StoredModel::Compiled(
                CompiledLinear::from_parts(w, lambda, flags)
                    .map_err(|e| inconsistent(e.to_string()))?,
            )
        }
        _ => {
            let (d, labels) = r.block()?;
            if d.nrows() == 0 {
                return Err(inconsistent("dictionary has zero rows"));
            }
            let dictionary = ConcatDictionary::from_parts(d, split, labels)
                .map_err(|e| inconsistent(e.to_string()))?;
            if mode == MODE_L1 {
                r.finish()?;
                let cfg = FitConfig::new(Mode::L1, lambda).with_flags(flags);
                StoredModel::Sdbe(Box::new(
                    SdbeModel::from_dictionary(dictionary, &cfg)
                        .map_err(|e| inconsistent(e.to_string()))?,
                ))
            } else {
                let (p, p_labels) = r.block()?;
                r.finish()?;
                zero_labels(&p_labels, "projection")?;
                if p.nrows() != dictionary.ncols() || p.ncols() != dictionary.dim() {
                    return Err(inconsistent(format!(
                        "projection is {} x {}, expected {} x {}",
                        p.nrows(),
                        p.ncols(),
                        dictionary.ncols(),
                        dictionary.dim()
                    )));
                }
                let op = RidgeOperator::from_parts(p, lambda, split)
                    .map_err(|e| inconsistent(e.to_string()))?;
                StoredModel::Sdbe(Box::new(
                    SdbeModel::from_ridge_parts(dictionary, op, flags)
                        .map_err(|e| inconsistent(e.to_string()))?,
                ))
            }
        }
    };
    Ok(model)
}
