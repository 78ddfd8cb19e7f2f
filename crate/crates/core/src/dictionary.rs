//! Class dictionary `A`, occlusion error dictionary `B` and their
//! concatenation `D = [A B]`.

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{check_dim, Result, SdbeError};
use crate::feature::{normalize_columns, LabeledFeatureSet};

/// Training features grouped so that every class occupies a contiguous run
/// of columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDictionary {
    matrix: DMatrix<f64>,
    class_labels: Vec<i32>,
    class_count: usize,
}

/// Occlusion error vectors grouped by occlusion pattern. May have no columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionErrorDictionary {
    matrix: DMatrix<f64>,
    pattern_labels: Vec<i32>,
    pattern_count: usize,
}

/// `D = [A B]`; columns `0..split_index` belong to `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatDictionary {
    matrix: DMatrix<f64>,
    split_index: usize,
    class_labels: Vec<i32>,
    pattern_labels: Vec<i32>,
}

fn distinct_runs(labels: &[i32]) -> usize {
    let mut seen: Vec<i32> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Stable reorder of columns by label.
fn group_by_label(matrix: &DMatrix<f64>, labels: &[i32]) -> (DMatrix<f64>, Vec<i32>) {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&j| labels[j]);
    let grouped = DMatrix::from_fn(matrix.nrows(), order.len(), |i, j| matrix[(i, order[j])]);
    (grouped, order.iter().map(|&j| labels[j]).collect())
}

impl ClassDictionary {
    /// Wraps an already grouped matrix, checking the grouping invariant.
    pub fn from_parts(matrix: DMatrix<f64>, class_labels: Vec<i32>) -> Result<Self> {
        check_dim(matrix.ncols(), class_labels.len())?;
        if class_labels.is_empty() {
            return Err(SdbeError::EmptyInput);
        }
        if class_labels.windows(2).any(|w| w[0] > w[1]) {
            return Err(SdbeError::InvalidArgument(
                "class labels must be nondecreasing".into(),
            ));
        }
        let class_count = distinct_runs(&class_labels);
        Ok(ClassDictionary {
            matrix,
            class_labels,
            class_count,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn class_labels(&self) -> &[i32] {
        &self.class_labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
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

    pub fn as_feature_set(&self) -> LabeledFeatureSet {
        LabeledFeatureSet::new(self.matrix.clone(), self.class_labels.clone())
            .expect("dictionary columns are finite and labeled")
    }
}

impl OcclusionErrorDictionary {
    pub fn empty(m: usize) -> Self {
        OcclusionErrorDictionary {
            matrix: DMatrix::zeros(m, 0),
            pattern_labels: Vec::new(),
            pattern_count: 0,
        }
    }

    pub fn from_parts(matrix: DMatrix<f64>, pattern_labels: Vec<i32>) -> Result<Self> {
        check_dim(matrix.ncols(), pattern_labels.len())?;
        if pattern_labels.windows(2).any(|w| w[0] > w[1]) {
            return Err(SdbeError::InvalidArgument(
                "pattern labels must be nondecreasing".into(),
            ));
        }
        let pattern_count = distinct_runs(&pattern_labels);
        Ok(OcclusionErrorDictionary {
            matrix,
            pattern_labels,
            pattern_count,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn pattern_labels(&self) -> &[i32] {
        &self.pattern_labels
    }

    pub fn pattern_count(&self) -> usize {
        self.pattern_count
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
}

impl ConcatDictionary {
    pub fn from_parts(matrix: DMatrix<f64>, split_index: usize, labels: Vec<i32>) -> Result<Self> {
        check_dim(matrix.ncols(), labels.len())?;
        if split_index == 0 || split_index > matrix.ncols() {
            return Err(SdbeError::InvalidArgument(format!(
                "split index {split_index} outside 1..={}",
                matrix.ncols()
            )));
        }
        let (a, b) = labels.split_at(split_index);
        Ok(ConcatDictionary {
            matrix,
            split_index,
            class_labels: a.to_vec(),
            pattern_labels: b.to_vec(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn split_index(&self) -> usize {
        self.split_index
    }

    pub fn class_labels(&self) -> &[i32] {
        &self.class_labels
    }

    pub fn pattern_labels(&self) -> &[i32] {
        &self.pattern_labels
    }

    /// Class labels followed by pattern labels, one per column of `D`.
    pub fn labels(&self) -> Vec<i32> {
        self.class_labels
            .iter()
            .chain(&self.pattern_labels)
            .copied()
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn class_part(&self) -> DMatrixView<'_, f64> {
        self.matrix.columns(0, self.split_index)
    }

    pub fn occlusion_part(&self) -> DMatrixView<'_, f64> {
        self.matrix
            .columns(self.split_index, self.matrix.ncols() - self.split_index)
    }

    pub fn split(&self) -> (ClassDictionary, OcclusionErrorDictionary) {
        (
            ClassDictionary {
                matrix: self.class_part().into_owned(),
                class_labels: self.class_labels.clone(),
                class_count: distinct_runs(&self.class_labels),
            },
            OcclusionErrorDictionary {
                matrix: self.occlusion_part().into_owned(),
                pattern_labels: self.pattern_labels.clone(),
                pattern_count: distinct_runs(&self.pattern_labels),
            },
        )
    }

    /// Copy with every column scaled to unit l2 norm.
    pub fn with_unit_columns(&self) -> Result<ConcatDictionary> {
        let mut out = self.clone();
        normalize_columns(&mut out.matrix)?;
        Ok(out)
    }
}

pub fn build_cd(training: &LabeledFeatureSet, normalize: bool) -> Result<ClassDictionary> {
    if training.is_empty() {
        return Err(SdbeError::EmptyInput);
    }
    let (mut matrix, class_labels) = group_by_label(training.matrix(), training.labels());
    if normalize {
        normalize_columns(&mut matrix)?;
    }
    let class_count = distinct_runs(&class_labels);
    Ok(ClassDictionary {
        matrix,
        class_labels,
        class_count,
    })
}

/// Column j is `occluded_j - free_j`; pairs are matched by position and must
/// carry the same pattern id.
pub fn build_oed(
    occluded: &LabeledFeatureSet,
    free: &LabeledFeatureSet,
    normalize: bool,
) -> Result<OcclusionErrorDictionary> {
    check_dim(free.dim(), occluded.dim())?;
    check_dim(free.len(), occluded.len())?;
    if let Some(pos) = occluded
        .labels()
        .iter()
        .zip(free.labels())
        .position(|(a, b)| a != b)
    {
        return Err(SdbeError::LabelMismatch(pos));
    }
    let diff = occluded.matrix() - free.matrix();
    let (mut matrix, pattern_labels) = group_by_label(&diff, occluded.labels());
    if normalize {
        normalize_columns(&mut matrix)?;
    }
    let pattern_count = distinct_runs(&pattern_labels);
    Ok(OcclusionErrorDictionary {
        matrix,
        pattern_labels,
        pattern_count,
    })
}

pub fn concat(cd: &ClassDictionary, oed: &OcclusionErrorDictionary) -> Result<ConcatDictionary> {
    if !oed.is_empty() {
        check_dim(cd.dim(), oed.dim())?;
    }
    let mut matrix = DMatrix::zeros(cd.dim(), cd.len() + oed.len());
    matrix.columns_mut(0, cd.len()).copy_from(&cd.matrix);
    if !oed.is_empty() {
        matrix
            .columns_mut(cd.len(), oed.len())
            .copy_from(&oed.matrix);
    }
    Ok(ConcatDictionary {
        matrix,
        split_index: cd.len(),
        class_labels: cd.class_labels.clone(),
        pattern_labels: oed.pattern_labels.clone(),
    })
}
