//! Recovery of occluded feature vectors by regularized decomposition over a
//! class dictionary and an occlusion-error dictionary, plus the classifiers,
//! synthetic worlds, diagnostics and file formats built around it.

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod classifier;
pub mod container;
pub mod dictionary;
pub mod error;
pub mod estimator;
pub mod feature;
pub mod lasso;
pub mod ridge;
pub mod rng;
pub mod synth;

pub use analysis::{
    cross_corr_report, evaluate, pearson, CorrReport, EvalConfig, EvalReport, EvalRow, Method,
};
pub use classifier::{Classifier, NnClassifier, SoftmaxClassifier, TrainConfig};
pub use container::StoredModel;
pub use dictionary::{
    build_cd, build_oed, concat, ClassDictionary, ConcatDictionary, OcclusionErrorDictionary,
};
pub use error::{FormatError, Result, SdbeError};
pub use estimator::{
    CompiledLinear, EstimateResult, FitConfig, Mode, NormalizationFlags, SdbeModel,
};
pub use feature::{
    normalize_l2, occlusion_error_stats, oev, ErrorStats, FeatureVector, LabeledFeatureSet,
    OcclusionErrorVector,
};
pub use lasso::{solve_l1, L1Settings, L1Solution, LassoSolver};
pub use ridge::{fit_ridge, solve_l2, RidgeOperator};
pub use rng::SeededGaussian;
pub use synth::{generate, subspace_angle_report, SynthWorld, WorldSpec};
