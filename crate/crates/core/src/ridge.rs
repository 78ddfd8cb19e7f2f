//! Squared-l2 regularized decomposition.
//!
//! `omega = argmin |v - D omega|^2 + lambda |omega|^2` has the closed form
//! `omega = P v` with `P = (D^T D + lambda I)^-1 D^T`. `P` depends only on the
//! dictionary, so it is factored once and every query costs one
//! matrix-vector product with `P`.

use nalgebra::{Cholesky, DMatrix, DMatrixView, DVector, Dyn};

use crate::dictionary::ConcatDictionary;
use crate::error::{check_dim, Result, SdbeError};
use crate::feature::FeatureVector;

/// Default regularization weight.
pub const DEFAULT_LAMBDA: f64 = 0.005;

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(SdbeError::InvalidArgument(format!(
            "lambda must be positive and finite, got {lambda}"
        )))
    }
}

fn factor(g: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(g)
        .ok_or_else(|| SdbeError::NumericalFailure("Cholesky factorization failed".into()))
}

fn check_finite(d: &DMatrix<f64>) -> Result<()> {
    if d.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(SdbeError::NumericalFailure(
            "dictionary contains non-finite entries".into(),
        ))
    }
}

/// `(D^T D + lambda I)^-1 D^T`, factoring the n x n system.
pub fn primal_projection(d: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    check_finite(d)?;
    let n = d.ncols();
    let mut gram = d.tr_mul(d);
    for i in 0..n {
        gram[(i, i)] += lambda;
    }
    Ok(factor(gram)?.solve(&d.transpose()))
}

/// `D^T (D D^T + lambda I)^-1`, factoring the m x m system.
pub fn dual_projection(d: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    check_finite(d)?;
    let m = d.nrows();
    let mut outer = d * d.transpose();
    for i in 0..m {
        outer[(i, i)] += lambda;
    }
    // H^-1 D is m x n; its transpose is D^T H^-1 because H is symmetric.
    Ok(factor(outer)?.solve(d).transpose())
}

/// Picks whichever of the two equivalent forms factors the smaller system.
pub fn ridge_projection(d: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if d.ncols() > d.nrows() {
        dual_projection(d, lambda)
    } else {
        primal_projection(d, lambda)
    }
}

/// Precomputed ridge projection `P` with rows split as `[P_alpha; P_beta]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeOperator {
    p: DMatrix<f64>,
    lambda: f64,
    split_index: usize,
}

impl RidgeOperator {
    pub fn from_parts(p: DMatrix<f64>, lambda: f64, split_index: usize) -> Result<Self> {
        check_lambda(lambda)?;
        if split_index > p.nrows() {
            return Err(SdbeError::InvalidArgument(format!(
                "split index {split_index} exceeds {} rows",
                p.nrows()
            )));
        }
        Ok(RidgeOperator {
            p,
            lambda,
            split_index,
        })
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn p_alpha(&self) -> DMatrixView<'_, f64> {
        self.p.rows(0, self.split_index)
    }

    pub fn p_beta(&self) -> DMatrixView<'_, f64> {
        self.p
            .rows(self.split_index, self.p.nrows() - self.split_index)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn split_index(&self) -> usize {
        self.split_index
    }

    /// Feature dimension `m` accepted by [`RidgeOperator::solve`].
    pub fn dim(&self) -> usize {
        self.p.ncols()
    }

    pub fn solve(&self, v: &FeatureVector) -> Result<DVector<f64>> {
        self.solve_raw(v.values())
    }

    pub(crate) fn solve_raw(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.p.ncols(), v.len())?;
        Ok(&self.p * v)
    }
}

pub fn fit_ridge(d: &ConcatDictionary, lambda: f64) -> Result<RidgeOperator> {
    let p = ridge_projection(d.matrix(), lambda)?;
    Ok(RidgeOperator {
        p,
        lambda,
        split_index: d.split_index(),
    })
}

pub fn solve_l2(op: &RidgeOperator, v: &FeatureVector) -> Result<DVector<f64>> {
    op.solve(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededGaussian;
    use proptest::prelude::*;

    fn dict(d: DMatrix<f64>) -> ConcatDictionary {
        let n = d.ncols();
        ConcatDictionary::from_parts(d, n, vec![0; n]).unwrap()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
    }

    fn random(g: &mut SeededGaussian, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| g.next())
    }

    #[test]
    fn identity_dictionary() {
        let op = fit_ridge(&dict(DMatrix::identity(2, 2)), 1.0).unwrap();
        assert!(max_abs(&(op.p() - DMatrix::identity(2, 2) * 0.5)) < 1e-15);
        let w = solve_l2(&op, &FeatureVector::new(vec![2.0, 4.0]).unwrap()).unwrap();
        assert!((w - DVector::from_vec(vec![1.0, 2.0])).amax() < 1e-15);
        let z = solve_l2(&op, &FeatureVector::zeros(2)).unwrap();
        assert_eq!(z.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn diagonal_small_lambda() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let op = fit_ridge(&dict(d), 1e-12).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25]));
        assert!(max_abs(&(op.p() - want)) < 1e-9);
    }

    #[test]
    fn rejects_bad_lambda_and_nan() {
        let d = dict(DMatrix::identity(2, 2));
        assert!(matches!(
            fit_ridge(&d, 0.0),
            Err(SdbeError::InvalidArgument(_))
        ));
        assert!(matches!(
            fit_ridge(&d, -1.0),
            Err(SdbeError::InvalidArgument(_))
        ));
        assert!(matches!(
            fit_ridge(&d, f64::NAN),
            Err(SdbeError::InvalidArgument(_))
        ));
        let mut bad = DMatrix::identity(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert!(matches!(
            primal_projection(&bad, 1.0),
            Err(SdbeError::NumericalFailure(_))
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let op = fit_ridge(&dict(DMatrix::identity(3, 2)), 1.0).unwrap();
        assert!(matches!(
            op.solve(&FeatureVector::zeros(2)),
            Err(SdbeError::DimensionMismatch {
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn definitional_identity() {
        // P D + lambda (D^T D + lambda I)^-1 = I
        let mut g = SeededGaussian::new(41);
        for &(m, n) in &[(6, 4), (4, 9), (10, 10)] {
            let d = random(&mut g, m, n);
            let lambda = 0.3;
            let p = ridge_projection(&d, lambda).unwrap();
            let mut gram = d.tr_mul(&d);
            for i in 0..n {
                gram[(i, i)] += lambda;
            }
            let inv = gram.try_inverse().unwrap();
            let lhs = &p * &d + inv * lambda;
            assert!(max_abs(&(lhs - DMatrix::identity(n, n))) < 1e-8);
        }
    }

    #[test]
    fn partition_matches_split() {
        let mut g = SeededGaussian::new(2);
        let d = ConcatDictionary::from_parts(random(&mut g, 5, 7), 4, vec![0, 0, 1, 1, 9, 9, 9])
            .unwrap();
        let op = fit_ridge(&d, 0.1).unwrap();
        assert_eq!(op.p_alpha().nrows(), 4);
        assert_eq!(op.p_beta().nrows(), 3);
        assert_eq!(op.dim(), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradient_vanishes(seed in any::<u64>(), m in 1usize..12, n in 1usize..16, lambda in 1e-3f64..10.0) {
            let mut g = SeededGaussian::new(seed);
            let d = random(&mut g, m, n);
            let v = DVector::from_fn(m, |_, _| g.next());
            let w = ridge_projection(&d, lambda).unwrap() * &v;
            let grad = (d.tr_mul(&(&d * &w - &v)) + &w * lambda) * 2.0;
            prop_assert!(grad.norm() <= 1e-8 * (1.0 + v.norm()));
        }

        #[test]
        fn larger_lambda_shrinks(seed in any::<u64>(), m in 1usize..10, n in 1usize..14, l1 in 1e-3f64..1.0, f in 1.0f64..100.0) {
            let mut g = SeededGaussian::new(seed);
            let d = random(&mut g, m, n);
            let v = DVector::from_fn(m, |_, _| g.next());
            let small = ridge_projection(&d, l1).unwrap() * &v;
            let big = ridge_projection(&d, l1 * f).unwrap() * &v;
            prop_assert!(big.norm() <= small.norm() * (1.0 + 1e-12));
        }

        #[test]
        fn solve_is_linear(seed in any::<u64>(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let mut g = SeededGaussian::new(seed);
            let d = dict(random(&mut g, 7, 11));
            let op = fit_ridge(&d, 0.05).unwrap();
            let v1 = DVector::from_fn(7, |_, _| g.next());
            let v2 = DVector::from_fn(7, |_, _| g.next());
            let lhs = op.solve_raw(&(&v1 * a + &v2 * b)).unwrap();
            let rhs = op.solve_raw(&v1).unwrap() * a + op.solve_raw(&v2).unwrap() * b;
            prop_assert!((lhs - rhs).amax() <= 1e-10 * (1.0 + a.abs() + b.abs()));
        }

        #[test]
        fn primal_and_dual_agree(seed in any::<u64>(), m in 1usize..10, n in 1usize..16, lambda in 1e-2f64..5.0) {
            let mut g = SeededGaussian::new(seed);
            let d = random(&mut g, m, n);
            let p1 = primal_projection(&d, lambda).unwrap();
            let p2 = dual_projection(&d, lambda).unwrap();
            prop_assert!((&p1 - &p2).norm() <= 1e-9 * p1.norm().max(1e-300));
        }
    }
}
