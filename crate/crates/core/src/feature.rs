//! Feature vectors, occlusion error vectors and labeled feature sets.
//!
//! A feature vector `v` of an occluded input is modeled as `v = v0 + eps`,
//! where `v0` is the feature of the occlusion-free input and `eps` the
//! occlusion error vector. Everything here is a plain value type.

use nalgebra::storage::RawStorage;
use nalgebra::{DMatrix, DVector, Dyn, Matrix, U1};

use crate::error::{check_dim, Result, SdbeError};

/// Norms at or below this value are treated as zero.
pub const ZERO_NORM_CUTOFF: f64 = 1e-300;

/// Default threshold deciding whether an error entry counts as nonzero.
pub const DEFAULT_L0_TAU: f64 = 1e-12;

/// One m-dimensional feature with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(DVector<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(values))
    }

    pub fn from_dvector(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SdbeError::EmptyInput);
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(SdbeError::NonFinite);
        }
        Ok(FeatureVector(values))
    }

    pub fn zeros(m: usize) -> Self {
        FeatureVector(DVector::zeros(m.max(1)))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// `eps = occluded - free` for one extra pair, tagged with its occlusion pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionErrorVector {
    pub values: FeatureVector,
    pub pattern_id: i32,
}

/// Column-per-sample matrix with one integer label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatureSet {
    matrix: DMatrix<f64>,
    labels: Vec<i32>,
}

impl LabeledFeatureSet {
    pub fn new(matrix: DMatrix<f64>, labels: Vec<i32>) -> Result<Self> {
        check_dim(matrix.ncols(), labels.len())?;
        if matrix.nrows() == 0 {
            return Err(SdbeError::EmptyInput);
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(SdbeError::NonFinite);
        }
        Ok(LabeledFeatureSet { matrix, labels })
    }

    pub fn from_columns(columns: &[FeatureVector], labels: Vec<i32>) -> Result<Self> {
        let first = columns.first().ok_or(SdbeError::EmptyInput)?;
        let m = first.dim();
        for c in columns {
            check_dim(m, c.dim())?;
        }
        let cols: Vec<DVector<f64>> = columns.iter().map(|c| c.values().clone()).collect();
        Self::new(DMatrix::from_columns(&cols), labels)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn len(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.ncols() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn column(&self, j: usize) -> FeatureVector {
        FeatureVector(self.matrix.column(j).into_owned())
    }

    pub fn into_parts(self) -> (DMatrix<f64>, Vec<i32>) {
        (self.matrix, self.labels)
    }
}

/// Relative size of an occlusion error: `rel_l2 = |eps|_2 / |v0|_2` and
/// `rel_l0` = fraction of entries with `|eps_j| > tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub rel_l2: f64,
    pub rel_l0: f64,
    pub tau: f64,
}

pub fn normalize_l2(v: &FeatureVector) -> Result<FeatureVector> {
    Ok(FeatureVector(normalized(v.values())?))
}

/// l2 norm computed on the max-scaled vector so tiny entries do not underflow.
pub(crate) fn scaled_norm<S: RawStorage<f64, Dyn>>(v: &Matrix<f64, Dyn, U1, S>) -> f64 {
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale
        * v.iter()
            .map(|x| (x / scale) * (x / scale))
            .sum::<f64>()
            .sqrt()
}

pub(crate) fn normalized(v: &DVector<f64>) -> Result<DVector<f64>> {
    let n = scaled_norm(v);
    if !(n > ZERO_NORM_CUTOFF) {
        return Err(SdbeError::ZeroVector);
    }
    Ok(v / n)
}

/// Scales every column of `m` to unit l2 norm in place.
pub(crate) fn normalize_columns(m: &mut DMatrix<f64>) -> Result<()> {
    for mut col in m.column_iter_mut() {
        let n = scaled_norm(&col);
        if !(n > ZERO_NORM_CUTOFF) {
            return Err(SdbeError::ZeroVector);
        }
        col /= n;
    }
    Ok(())
}

pub fn oev(
    occluded: &FeatureVector,
    free: &FeatureVector,
    pattern_id: i32,
) -> Result<OcclusionErrorVector> {
    check_dim(free.dim(), occluded.dim())?;
    Ok(OcclusionErrorVector {
        values: FeatureVector(occluded.values() - free.values()),
        pattern_id,
    })
}

pub fn occlusion_error_stats(
    v0: &FeatureVector,
    v: &FeatureVector,
    tau: f64,
) -> Result<ErrorStats> {
    check_dim(v0.dim(), v.dim())?;
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(SdbeError::InvalidArgument(format!(
            "tau must be a finite nonnegative number, got {tau}"
        )));
    }
    let base = scaled_norm(v0.values());
    if !(base > ZERO_NORM_CUTOFF) {
        return Err(SdbeError::ZeroVector);
    }
    let err = v.values() - v0.values();
    let nonzero = err.iter().filter(|e| e.abs() > tau).count();
    Ok(ErrorStats {
        rel_l2: err.norm() / base,
        rel_l0: nonzero as f64 / v0.dim() as f64,
        tau,
    })
}
