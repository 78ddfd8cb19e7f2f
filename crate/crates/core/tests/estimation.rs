mod common;

use nalgebra::DVector;
use sdbe_core::container::{decode_model, encode_compiled, encode_model, StoredModel};
use sdbe_core::{
    ClassDictionary, FeatureVector, FitConfig, Mode, NormalizationFlags, OcclusionErrorDictionary,
    SdbeModel, SeededGaussian,
};

use common::{gaussian_matrix, gaussian_vector};

fn dictionaries(
    g: &mut SeededGaussian,
    m: usize,
    na: usize,
    nb: usize,
) -> (ClassDictionary, OcclusionErrorDictionary) {
    let a = gaussian_matrix(g, m, na);
    let b = gaussian_matrix(g, m, nb);
    (
        ClassDictionary::from_parts(a, (0..na).map(|j| (j / 3) as i32).collect()).unwrap(),
        OcclusionErrorDictionary::from_parts(b, (0..nb).map(|j| (j / 2) as i32).collect()).unwrap(),
    )
}

fn unit(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    v / n
}

#[test]
fn l2_self_coding_returns_dictionary_columns() {
    let mut g = SeededGaussian::new(60);
    let (cd, oed) = dictionaries(&mut g, 40, 12, 6);
    let model = SdbeModel::fit(&cd, &oed, &FitConfig::new(Mode::L2, 1e-8)).unwrap();
    for j in 0..cd.len() {
        let col = cd.matrix().column(j).clone_owned();
        let est = model
            .estimate(&FeatureVector::from_dvector(col.clone()).unwrap())
            .unwrap();
        assert!((est.v0_hat.values() - unit(col)).norm() <= 1e-3);
    }
}

#[test]
fn l1_self_coding_with_empty_oed() {
    let mut g = SeededGaussian::new(61);
    let a = gaussian_matrix(&mut g, 30, 8);
    let cd = ClassDictionary::from_parts(a.clone(), vec![0, 0, 1, 1, 2, 2, 3, 3]).unwrap();
    let model = SdbeModel::fit(
        &cd,
        &OcclusionErrorDictionary::empty(30),
        &FitConfig::new(Mode::L1, 1e-6),
    )
    .unwrap();
    for j in 0..8 {
        let col = a.column(j).clone_owned();
        let est = model
            .estimate(&FeatureVector::from_dvector(col.clone()).unwrap())
            .unwrap();
        assert!(est.diagnostics.unwrap().converged);
        assert!(est.beta.is_empty());
        assert!((est.v0_hat.values() - unit(col)).norm() <= 1e-3);
    }
}

#[test]
fn exact_subspaces_are_separated() {
    // A and B each span a random subspace; any v0 + eps with v0 in span(A)
    // and eps in span(B) decomposes uniquely
    let mut g = SeededGaussian::new(62);
    let m = 50;
    let (cd, oed) = dictionaries(&mut g, m, 10, 6);
    let flags = NormalizationFlags::none();
    let model =
        SdbeModel::fit(&cd, &oed, &FitConfig::new(Mode::L2, 1e-8).with_flags(flags)).unwrap();
    for _ in 0..20 {
        let v0 = cd.matrix() * gaussian_vector(&mut g, 10);
        let eps = oed.matrix() * gaussian_vector(&mut g, 6) * 0.7;
        let est = model
            .estimate(&FeatureVector::from_dvector(&v0 + eps).unwrap())
            .unwrap();
        assert!((est.v0_hat.values() - &v0).norm() <= 1e-3 * v0.norm());
    }
}

#[test]
fn compiled_layer_matches_ridge_path() {
    let mut g = SeededGaussian::new(63);
    let (cd, oed) = dictionaries(&mut g, 24, 30, 20);
    for flags in [NormalizationFlags::default(), NormalizationFlags::none()] {
        let model = SdbeModel::fit(
            &cd,
            &oed,
            &FitConfig::new(Mode::L2, 0.005).with_flags(flags),
        )
        .unwrap();
        let compiled = model.compile_linear().unwrap();
        for _ in 0..100 {
            let v = FeatureVector::from_dvector(gaussian_vector(&mut g, 24)).unwrap();
            let direct = model.estimate(&v).unwrap();
            assert!((compiled.apply_raw(&v).unwrap() - &direct.class_part).amax() <= 1e-10);
            assert!(
                (compiled.apply(&v).unwrap().values() - direct.v0_hat.values()).amax() <= 1e-10
            );
        }
    }
}

#[test]
fn stored_models_estimate_identically() {
    let mut g = SeededGaussian::new(64);
    let (cd, oed) = dictionaries(&mut g, 16, 9, 4);
    let queries: Vec<FeatureVector> = (0..10)
        .map(|_| FeatureVector::from_dvector(gaussian_vector(&mut g, 16)).unwrap())
        .collect();
    for mode in [Mode::L1, Mode::L2] {
        let model = SdbeModel::fit(&cd, &oed, &FitConfig::new(mode, 0.02)).unwrap();
        let StoredModel::Sdbe(back) = decode_model(&encode_model(&model).unwrap()).unwrap() else {
            panic!("expected an sdbe model")
        };
        for q in &queries {
            assert_eq!(back.estimate(q).unwrap(), model.estimate(q).unwrap());
        }
        if mode == Mode::L2 {
            let compiled = model.compile_linear().unwrap();
            let StoredModel::Compiled(c) =
                decode_model(&encode_compiled(&compiled).unwrap()).unwrap()
            else {
                panic!("expected a compiled model")
            };
            for q in &queries {
                assert_eq!(c.apply(q).unwrap(), compiled.apply(q).unwrap());
            }
        }
    }
}

#[test]
fn compiled_size_is_independent_of_dictionaries() {
    let mut g = SeededGaussian::new(65);
    for (na, nb) in [(5, 2), (40, 80)] {
        let (cd, oed) = dictionaries(&mut g, 12, na, nb);
        let model = SdbeModel::fit(&cd, &oed, &FitConfig::default()).unwrap();
        let w = model.compile_linear().unwrap();
        assert_eq!((w.w().nrows(), w.w().ncols()), (12, 12));
    }
}
