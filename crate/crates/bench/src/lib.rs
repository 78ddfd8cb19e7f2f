//! Seeded fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use sdbe_core::{ClassDictionary, FeatureVector, OcclusionErrorDictionary, SeededGaussian};

pub fn gaussian(g: &mut SeededGaussian, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| g.next())
}

/// Random dictionaries with `n_a` class columns in groups of ten and `p_b`
/// error columns in one pattern.
pub fn dictionaries(
    seed: u64,
    m: usize,
    n_a: usize,
    p_b: usize,
) -> (ClassDictionary, OcclusionErrorDictionary) {
    let mut g = SeededGaussian::new(seed);
    let a = gaussian(&mut g, m, n_a);
    let b = gaussian(&mut g, m, p_b);
    let cd = ClassDictionary::from_parts(a, (0..n_a).map(|j| (j / 10) as i32).collect())
        .expect("valid class dictionary");
    let oed =
        OcclusionErrorDictionary::from_parts(b, vec![0; p_b]).expect("valid error dictionary");
    (cd, oed)
}

pub fn queries(seed: u64, m: usize, n: usize) -> Vec<FeatureVector> {
    let mut g = SeededGaussian::new(seed);
    let q = gaussian(&mut g, m, n);
    q.column_iter()
        .map(|c| FeatureVector::from_dvector(c.into_owned()).expect("finite"))
        .collect()
}
