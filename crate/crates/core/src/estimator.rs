//! Fitting and applying the estimator.
//!
//! Training stacks the class dictionary and the occlusion error dictionary
//! into `D = [A B]` (optionally with unit columns) and, for the l2 variant,
//! precomputes the ridge projection. At query time the feature is decomposed
//! as `v = A alpha + B beta + n` and the occlusion-free feature is estimated
//! as `A alpha`.

use nalgebra::{DMatrix, DVector};

use crate::dictionary::{concat, ClassDictionary, ConcatDictionary, OcclusionErrorDictionary};
use crate::error::{check_dim, Result, SdbeError};
use crate::feature::{normalized, FeatureVector};
use crate::lasso::{L1Settings, LassoSolver, DEFAULT_KKT_TOL, DEFAULT_MAX_ITERS, DEFAULT_OBJ_TOL};
use crate::ridge::{check_lambda, fit_ridge, RidgeOperator, DEFAULT_LAMBDA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    L1,
    L2,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::L1 => "l1",
            Mode::L2 => "l2",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = SdbeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Mode::L1),
            "l2" => Ok(Mode::L2),
            other => Err(SdbeError::InvalidArgument(format!(
                "unknown mode {other:?}"
            ))),
        }
    }
}

/// The three optional unit-norm steps: dictionary columns at training time,
/// the query before decomposition, and the estimate after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalizationFlags {
    pub columns: bool,
    pub query: bool,
    pub output: bool,
}

impl Default for NormalizationFlags {
    fn default() -> Self {
        NormalizationFlags {
            columns: true,
            query: true,
            output: true,
        }
    }
}

impl NormalizationFlags {
    /// All steps skipped, for classifiers trained on raw features.
    pub fn none() -> Self {
        NormalizationFlags {
            columns: false,
            query: false,
            output: false,
        }
    }

    pub fn bits(self) -> u8 {
        self.columns as u8 | (self.query as u8) << 1 | (self.output as u8) << 2
    }

    pub fn from_bits(bits: u8) -> Self {
        NormalizationFlags {
            columns: bits & 1 != 0,
            query: bits & 2 != 0,
            output: bits & 4 != 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub mode: Mode,
    pub lambda: f64,
    pub flags: NormalizationFlags,
    pub max_iters: usize,
    pub kkt_tol: f64,
    pub obj_tol: f64,
}

impl FitConfig {
    pub fn new(mode: Mode, lambda: f64) -> Self {
        FitConfig {
            mode,
            lambda,
            flags: NormalizationFlags::default(),
            max_iters: DEFAULT_MAX_ITERS,
            kkt_tol: DEFAULT_KKT_TOL,
            obj_tol: DEFAULT_OBJ_TOL,
        }
    }

    pub fn with_flags(mut self, flags: NormalizationFlags) -> Self {
        self.flags = flags;
        self
    }

    fn l1_settings(&self) -> L1Settings {
        L1Settings {
            lambda: self.lambda,
            max_iters: self.max_iters,
            kkt_tol: self.kkt_tol,
            obj_tol: self.obj_tol,
        }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig::new(Mode::L2, DEFAULT_LAMBDA)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Diagnostics {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    /// Estimated occlusion-free feature, unit norm when output normalization is on.
    pub v0_hat: FeatureVector,
    /// `A alpha` before output normalization.
    pub class_part: DVector<f64>,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    /// `v_used - D omega`, where `v_used` is the query after optional normalization.
    pub residual: DVector<f64>,
    pub diagnostics: Option<L1Diagnostics>,
}

#[derive(Debug, Clone)]
pub struct SdbeModel {
    dictionary: ConcatDictionary,
    mode: Mode,
    lambda: f64,
    flags: NormalizationFlags,
    ridge: Option<RidgeOperator>,
    lasso: Option<LassoSolver>,
}

impl SdbeModel {
    pub fn fit(
        cd: &ClassDictionary,
        oed: &OcclusionErrorDictionary,
        cfg: &FitConfig,
    ) -> Result<Self> {
        let mut d = concat(cd, oed)?;
        if cfg.flags.columns {
            d = d.with_unit_columns()?;
        }
        Self::from_dictionary(d, cfg)
    }

    /// Builds a model around an existing `D`, which is used as given.
    pub fn from_dictionary(dictionary: ConcatDictionary, cfg: &FitConfig) -> Result<Self> {
        check_lambda(cfg.lambda)?;
        let (ridge, lasso) = match cfg.mode {
            Mode::L2 => (Some(fit_ridge(&dictionary, cfg.lambda)?), None),
            Mode::L1 => (
                None,
                Some(LassoSolver::new(dictionary.matrix(), cfg.l1_settings())?),
            ),
        };
        Ok(SdbeModel {
            dictionary,
            mode: cfg.mode,
            lambda: cfg.lambda,
            flags: cfg.flags,
            ridge,
            lasso,
        })
    }

    /// Reassembles an l2 model from a stored `D` and `P`.
    pub fn from_ridge_parts(
        dictionary: ConcatDictionary,
        ridge: RidgeOperator,
        flags: NormalizationFlags,
    ) -> Result<Self> {
        check_dim(dictionary.ncols(), ridge.p().nrows())?;
        check_dim(dictionary.dim(), ridge.dim())?;
        if ridge.split_index() != dictionary.split_index() {
            return Err(SdbeError::InvalidArgument(
                "ridge split index differs from dictionary".into(),
            ));
        }
        Ok(SdbeModel {
            dictionary,
            mode: Mode::L2,
            lambda: ridge.lambda(),
            flags,
            ridge: Some(ridge),
            lasso: None,
        })
    }

    pub fn dictionary(&self) -> &ConcatDictionary {
        &self.dictionary
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn flags(&self) -> NormalizationFlags {
        self.flags
    }

    pub fn ridge(&self) -> Option<&RidgeOperator> {
        self.ridge.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.dictionary.dim()
    }

    pub fn estimate(&self, v: &FeatureVector) -> Result<EstimateResult> {
        check_dim(self.dim(), v.dim())?;
        let v_used = if self.flags.query {
            normalized(v.values())?
        } else {
            v.values().clone()
        };
        let (omega, diagnostics) = match (&self.ridge, &self.lasso) {
            (Some(op), _) => (op.solve_raw(&v_used)?, None),
            (None, Some(solver)) => {
                let sol = solver.solve(&v_used)?;
                let diag = L1Diagnostics {
                    iterations: sol.iterations,
                    kkt_residual: sol.kkt_residual,
                    converged: sol.converged,
                };
                (sol.omega, Some(diag))
            }
            (None, None) => unreachable!("a model always carries a solver for its mode"),
        };
        let split = self.dictionary.split_index();
        let alpha = omega.rows(0, split).into_owned();
        let beta = omega.rows(split, omega.len() - split).into_owned();
        let class_part = self.dictionary.class_part() * &alpha;
        let residual = &v_used - self.dictionary.matrix() * &omega;
        let v0 = if self.flags.output {
            normalized(&class_part)?
        } else {
            class_part.clone()
        };
        Ok(EstimateResult {
            v0_hat: FeatureVector::from_dvector(v0)?,
            class_part,
            alpha,
            beta,
            residual,
            diagnostics,
        })
    }

    /// Folds the l2 estimator into one m x m matrix `W = A P_alpha`.
    pub fn compile_linear(&self) -> Result<CompiledLinear> {
        let ridge = self.ridge.as_ref().ok_or(SdbeError::WrongMode)?;
        let w = self.dictionary.class_part() * ridge.p_alpha();
        Ok(CompiledLinear {
            w,
            lambda: self.lambda,
            flags: self.flags,
        })
    }
}

/// The l2 estimator as a single fully connected linear layer. Per-query
/// work is one m x m product no matter how large the dictionaries were.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledLinear {
    w: DMatrix<f64>,
    lambda: f64,
    flags: NormalizationFlags,
}

impl CompiledLinear {
    pub fn from_parts(w: DMatrix<f64>, lambda: f64, flags: NormalizationFlags) -> Result<Self> {
        check_lambda(lambda)?;
        check_dim(w.nrows(), w.ncols())?;
        Ok(CompiledLinear { w, lambda, flags })
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn flags(&self) -> NormalizationFlags {
        self.flags
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// `W v` on the (optionally normalized) query, before output normalization.
    pub fn apply_raw(&self, v: &FeatureVector) -> Result<DVector<f64>> {
        check_dim(self.dim(), v.dim())?;
        if self.flags.query {
            Ok(&self.w * normalized(v.values())?)
        } else {
            Ok(&self.w * v.values())
        }
    }

    pub fn apply(&self, v: &FeatureVector) -> Result<FeatureVector> {
        let out = self.apply_raw(v)?;
        let out = if self.flags.output {
            normalized(&out)?
        } else {
            out
        };
        FeatureVector::from_dvector(out)
    }
}

pub fn fit(
    cd: &ClassDictionary,
    oed: &OcclusionErrorDictionary,
    cfg: &FitConfig,
) -> Result<SdbeModel> {
    SdbeModel::fit(cd, oed, cfg)
}

pub fn estimate(model: &SdbeModel, v: &FeatureVector) -> Result<EstimateResult> {
    model.estimate(v)
}

pub fn compile_linear(model: &SdbeModel) -> Result<CompiledLinear> {
    model.compile_linear()
}
