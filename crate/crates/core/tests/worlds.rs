mod common;

use sdbe_core::analysis::{cross_corr_report, evaluate, EvalConfig, Method};
use sdbe_core::synth::{generate, principal_cosines, subspace_angle_report, WorldSpec};
use sdbe_core::Mode;

use common::principal_cosines_oracle;

/// Mean |rho| between the class and occlusion-error dictionaries of the
/// orthogonalized benchmark world, frozen from the first seeded run.
const FROZEN_ORTHOGONAL_MEAN_ABS_RHO: f64 = 0.023_389_394_716_308_95;

#[test]
fn principal_cosines_match_oracle() {
    let spec = WorldSpec {
        m: 200,
        orthogonalize: false,
        k_classes: 6,
        k_patterns: 3,
        seed: 70,
        ..WorldSpec::default()
    };
    let world = generate(&spec).unwrap();
    let got = principal_cosines(&world.class_span(), &world.pattern_span()).unwrap();
    let want = principal_cosines_oracle(&world.class_span(), &world.pattern_span());
    assert_eq!(got.len(), want.len());
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
    let report = subspace_angle_report(&world).unwrap();
    assert!((report.max_cos - want[0]).abs() <= 1e-10);
}

#[test]
fn tilted_world_keeps_bases_valid() {
    let world = generate(&WorldSpec::benchmark()).unwrap();
    let report = subspace_angle_report(&world).unwrap();
    assert!(report.max_cos > 0.5 && report.max_cos < 1.0);
    let orth = generate(&WorldSpec::orthogonal_benchmark()).unwrap();
    assert!(subspace_angle_report(&orth).unwrap().max_cos <= 1e-10);
}

#[test]
fn residual_noise_is_bounded() {
    let spec = WorldSpec {
        m: 128,
        noise_sigma: 0.05,
        seed: 71,
        ..WorldSpec::default()
    };
    let world = generate(&spec).unwrap();
    let gt = world.ground_truth();
    let bound = 5.0 * spec.noise_sigma * (spec.m as f64).sqrt();
    let residual = world.queries_occluded().matrix() - &gt.v0 - &gt.eps;
    for col in residual.column_iter() {
        assert!(col.norm() <= bound);
    }
}

#[test]
fn orthogonal_world_correlation_is_small() {
    let world = generate(&WorldSpec::orthogonal_benchmark()).unwrap();
    let (cd, oed) = world.dictionaries(false).unwrap();
    let report = cross_corr_report(&cd, &oed, 40).unwrap();
    assert_eq!(report.pair_count, cd.len() * oed.len());
    assert!(report.mean_abs_rho <= 0.05);
    assert!(
        (report.mean_abs_rho - FROZEN_ORTHOGONAL_MEAN_ABS_RHO).abs() <= 1e-12,
        "{:.17}",
        report.mean_abs_rho
    );
}

#[test]
fn easy_world_is_neutral_without_occlusion() {
    let spec = WorldSpec {
        occlusion_energy: 0.0,
        seed: 72,
        ..WorldSpec::default()
    };
    let world = generate(&spec).unwrap();
    let report = evaluate(
        &[world],
        &EvalConfig::new(vec![Mode::L2, Mode::L1], vec![0.005]),
    )
    .unwrap();
    let base = report
        .rows
        .iter()
        .find(|r| r.method == Method::Baseline)
        .unwrap();
    let bound = 3.0 * spec.noise_sigma * (spec.m as f64).sqrt();
    for row in &report.rows {
        assert!((row.accuracy - base.accuracy).abs() <= 0.01);
        assert!(row.mean_orig_err <= bound);
    }
}

#[test]
fn benchmark_estimates_beat_raw_queries() {
    let world = generate(&WorldSpec::benchmark()).unwrap();
    let report = evaluate(
        &[world],
        &EvalConfig::new(vec![Mode::L2], vec![1e-4, 0.005, 0.1]),
    )
    .unwrap();
    for row in report.rows.iter().filter(|r| r.method != Method::Baseline) {
        assert!(row.mean_est_err <= row.mean_orig_err);
    }
}
