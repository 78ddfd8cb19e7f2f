//! Correlation diagnostics between dictionaries and the accuracy / error
//! evaluation harness over synthetic worlds and regularization grids.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::classifier::NnClassifier;
use crate::dictionary::{ClassDictionary, OcclusionErrorDictionary};
use crate::error::{check_dim, Result, SdbeError};
use crate::estimator::{FitConfig, Mode, NormalizationFlags, SdbeModel};
use crate::feature::{normalized, scaled_norm, FeatureVector, LabeledFeatureSet};
use crate::lasso::{DEFAULT_KKT_TOL, DEFAULT_MAX_ITERS, DEFAULT_OBJ_TOL};
use crate::synth::SynthWorld;

/// Centered norms at or below this fraction of the raw norm count as constant.
pub const CONSTANT_REL_TOL: f64 = 1e-12;

fn centered(x: DVectorView<'_, f64>) -> Option<DVector<f64>> {
    let mean = x.mean();
    let c = x.add_scalar(-mean);
    let raw = scaled_norm(&x);
    let cn = scaled_norm(&c);
    if !(cn > CONSTANT_REL_TOL * raw) || !(cn > 0.0) {
        return None;
    }
    Some(c / cn)
}

fn pearson_views(x: DVectorView<'_, f64>, y: DVectorView<'_, f64>) -> Result<f64> {
    let cx = centered(x).ok_or(SdbeError::ConstantVector)?;
    let cy = centered(y).ok_or(SdbeError::ConstantVector)?;
    Ok(cx.dot(&cy).clamp(-1.0, 1.0))
}

/// Pearson correlation coefficient.
pub fn pearson(x: &FeatureVector, y: &FeatureVector) -> Result<f64> {
    check_dim(x.dim(), y.dim())?;
    pearson_views(x.values().as_view(), y.values().as_view())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrReport {
    /// `bins + 1` equally spaced edges over `[-1, 1]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub pair_count: usize,
    pub mean_abs_rho: f64,
    /// Constant columns of the class dictionary, excluded from all pairs.
    pub skipped_class_columns: usize,
    /// Constant columns of the occlusion-error dictionary.
    pub skipped_error_columns: usize,
    pub skipped_pairs: usize,
}

fn centered_columns(m: &DMatrix<f64>) -> (Vec<DVector<f64>>, usize) {
    let mut out = Vec::with_capacity(m.ncols());
    let mut skipped = 0;
    for j in 0..m.ncols() {
        match centered(m.column(j)) {
            Some(c) => out.push(c),
            None => skipped += 1,
        }
    }
    (out, skipped)
}

/// Correlations between every class-dictionary column and every
/// occlusion-error column, summarized as mean magnitude and a histogram.
pub fn cross_corr_report(
    a: &ClassDictionary,
    b: &OcclusionErrorDictionary,
    bins: usize,
) -> Result<CorrReport> {
    if bins == 0 {
        return Err(SdbeError::InvalidArgument("bins must be at least 1".into()));
    }
    if b.is_empty() || a.is_empty() {
        return Err(SdbeError::EmptyInput);
    }
    check_dim(a.dim(), b.dim())?;
    let (ca, skipped_a) = centered_columns(a.matrix());
    let (cb, skipped_b) = centered_columns(b.matrix());
    let skipped_pairs = a.len() * b.len() - ca.len() * cb.len();
    let mut counts = vec![0usize; bins];
    let mut abs_sum = 0.0;
    for x in &ca {
        for y in &cb {
            let rho = x.dot(y).clamp(-1.0, 1.0);
            abs_sum += rho.abs();
            let bin = (((rho + 1.0) / 2.0) * bins as f64).floor() as usize;
            counts[bin.min(bins - 1)] += 1;
        }
    }
    let pair_count = ca.len() * cb.len();
    if pair_count == 0 {
        return Err(SdbeError::ConstantVector);
    }
    let edges = (0..=bins)
        .map(|i| -1.0 + 2.0 * i as f64 / bins as f64)
        .collect();
    Ok(CorrReport {
        edges,
        counts,
        pair_count,
        mean_abs_rho: abs_sum / pair_count as f64,
        skipped_class_columns: skipped_a,
        skipped_error_columns: skipped_b,
        skipped_pairs,
    })
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// 20 log-spaced values from 1e-6 to 10.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-6, 10.0, 20)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Baseline,
    Sdbe(Mode),
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Sdbe(Mode::L1) => "sdbe_l1",
            Method::Sdbe(Mode::L2) => "sdbe_l2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub modes: Vec<Mode>,
    pub lambda_grid: Vec<f64>,
    pub flags: NormalizationFlags,
    pub include_baseline: bool,
    pub max_iters: usize,
    pub kkt_tol: f64,
    pub obj_tol: f64,
}

impl EvalConfig {
    pub fn new(modes: Vec<Mode>, lambda_grid: Vec<f64>) -> Self {
        EvalConfig {
            modes,
            lambda_grid,
            flags: NormalizationFlags::default(),
            include_baseline: true,
            max_iters: DEFAULT_MAX_ITERS,
            kkt_tol: DEFAULT_KKT_TOL,
            obj_tol: DEFAULT_OBJ_TOL,
        }
    }

    fn fit_config(&self, mode: Mode, lambda: f64) -> FitConfig {
        FitConfig {
            mode,
            lambda,
            flags: self.flags,
            max_iters: self.max_iters,
            kkt_tol: self.kkt_tol,
            obj_tol: self.obj_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub occlusion_energy: f64,
    pub method: Method,
    pub lambda: Option<f64>,
    pub accuracy: f64,
    pub correct: usize,
    pub query_count: usize,
    /// Mean distance from the estimate to the clean feature.
    pub mean_est_err: f64,
    /// Mean distance from the query to the clean feature.
    pub mean_orig_err: f64,
    /// Queries whose nearest prototype was not unique.
    pub ties: usize,
    /// l1 solves that stopped without meeting the KKT tolerance.
    pub unconverged: usize,
    /// Estimates with zero class component (no output direction).
    pub zero_estimates: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Highest-accuracy row per (occlusion energy, method); the first grid
    /// point wins ties.
    pub fn best_per_condition(&self) -> Vec<EvalRow> {
        let mut best: Vec<EvalRow> = Vec::new();
        for row in &self.rows {
            match best
                .iter_mut()
                .find(|b| b.method == row.method && b.occlusion_energy == row.occlusion_energy)
            {
                Some(b) if row.accuracy > b.accuracy => *b = row.clone(),
                Some(_) => {}
                None => best.push(row.clone()),
            }
        }
        best
    }
}

struct Condition {
    energy: f64,
    prototypes: NnClassifier,
    queries: Vec<FeatureVector>,
    framed_queries: Vec<DVector<f64>>,
    framed_clean: Vec<DVector<f64>>,
    truth: Vec<i32>,
}

fn frame(flags: NormalizationFlags, x: &DVector<f64>) -> Result<DVector<f64>> {
    if flags.output {
        normalized(x)
    } else {
        Ok(x.clone())
    }
}

struct Tally {
    correct: usize,
    ties: usize,
    err_sum: f64,
    unconverged: usize,
    zero_estimates: usize,
}

impl Tally {
    fn new() -> Self {
        Tally {
            correct: 0,
            ties: 0,
            err_sum: 0.0,
            unconverged: 0,
            zero_estimates: 0,
        }
    }

    fn add(&mut self, c: &Condition, j: usize, estimate: &DVector<f64>) -> Result<()> {
        let d = c
            .prototypes
            .decide(&FeatureVector::from_dvector(estimate.clone())?)?;
        self.correct += (d.label == c.truth[j]) as usize;
        self.ties += d.tied as usize;
        self.err_sum += (estimate - &c.framed_clean[j]).norm();
        Ok(())
    }

    fn row(self, c: &Condition, method: Method, lambda: Option<f64>, orig: f64) -> EvalRow {
        let n = c.truth.len();
        let mean = |s: f64| if n == 0 { 0.0 } else { s / n as f64 };
        EvalRow {
            occlusion_energy: c.energy,
            method,
            lambda,
            accuracy: mean(self.correct as f64),
            correct: self.correct,
            query_count: n,
            mean_est_err: mean(self.err_sum),
            mean_orig_err: orig,
            ties: self.ties,
            unconverged: self.unconverged,
            zero_estimates: self.zero_estimates,
        }
    }
}

fn prototypes(cd: &ClassDictionary, flags: NormalizationFlags) -> Result<NnClassifier> {
    let mut set = cd.as_feature_set();
    if flags.columns {
        let (mut m, labels) = set.into_parts();
        crate::feature::normalize_columns(&mut m)?;
        set = LabeledFeatureSet::new(m, labels)?;
    }
    NnClassifier::new(set)
}

/// Runs every world through the baseline (nearest class-dictionary column on
/// the raw query) and through each SDBE mode at each grid value. Rows come out
/// world by world, baseline first, then modes in the given order with lambda
/// in grid order. Queries are processed sequentially so sums are reproducible.
pub fn evaluate(worlds: &[SynthWorld], cfg: &EvalConfig) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    if cfg.lambda_grid.is_empty() {
        return Ok(report);
    }
    for world in worlds {
        let (cd, oed) = world.dictionaries(false)?;
        let q = world.queries_occluded();
        let queries: Vec<FeatureVector> = (0..q.len()).map(|j| q.column(j)).collect();
        let clean = world.queries_clean().matrix();
        let c = Condition {
            energy: world.spec().occlusion_energy,
            prototypes: prototypes(&cd, cfg.flags)?,
            framed_queries: queries
                .iter()
                .map(|v| frame(cfg.flags, v.values()))
                .collect::<Result<_>>()?,
            framed_clean: clean
                .column_iter()
                .map(|v| frame(cfg.flags, &v.into_owned()))
                .collect::<Result<_>>()?,
            truth: q.labels().to_vec(),
            queries,
        };
        let orig_sum: f64 = c
            .framed_queries
            .iter()
            .zip(&c.framed_clean)
            .map(|(v, v0)| (v - v0).norm())
            .sum();
        let orig = if c.queries.is_empty() {
            0.0
        } else {
            orig_sum / c.queries.len() as f64
        };

        if cfg.include_baseline {
            let mut t = Tally::new();
            for j in 0..c.queries.len() {
                t.add(&c, j, &c.framed_queries[j])?;
            }
            report.rows.push(t.row(&c, Method::Baseline, None, orig));
        }
        for &mode in &cfg.modes {
            for &lambda in &cfg.lambda_grid {
                let model = SdbeModel::fit(&cd, &oed, &cfg.fit_config(mode, lambda))?;
                let mut t = Tally::new();
                for (j, v) in c.queries.iter().enumerate() {
                    let estimate = match model.estimate(v) {
                        Ok(r) => {
                            if r.diagnostics.is_some_and(|d| !d.converged) {
                                t.unconverged += 1;
                            }
                            r.v0_hat.into_inner()
                        }
                        Err(SdbeError::ZeroVector) => {
                            t.zero_estimates += 1;
                            DVector::zeros(v.dim())
                        }
                        Err(e) => return Err(e),
                    };
                    t.add(&c, j, &estimate)?;
                }
                report
                    .rows
                    .push(t.row(&c, Method::Sdbe(mode), Some(lambda), orig));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededGaussian;
    use crate::synth::{generate, WorldSpec};
    use proptest::prelude::*;

    fn fv(x: &[f64]) -> FeatureVector {
        FeatureVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn pearson_examples() {
        assert!(
            (pearson(&fv(&[1.0, 2.0, 3.0]), &fv(&[1.0, 2.0, 3.0])).unwrap() - 1.0).abs() < 1e-15
        );
        assert!(
            (pearson(&fv(&[1.0, 2.0, 3.0]), &fv(&[3.0, 2.0, 1.0])).unwrap() + 1.0).abs() < 1e-15
        );
        assert!(
            pearson(&fv(&[1.0, -1.0, 0.0]), &fv(&[1.0, 1.0, -2.0]))
                .unwrap()
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn pearson_rejects_constant_and_mismatch() {
        assert_eq!(
            pearson(&fv(&[2.0, 2.0, 2.0]), &fv(&[1.0, 2.0, 3.0])),
            Err(SdbeError::ConstantVector)
        );
        assert_eq!(
            pearson(&fv(&[1.0, 2.0]), &fv(&[0.0, 0.0])),
            Err(SdbeError::ConstantVector)
        );
        assert!(matches!(
            pearson(&fv(&[1.0, 2.0]), &fv(&[1.0, 2.0, 3.0])),
            Err(SdbeError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pearson_matches_textbook_formula() {
        let mut g = SeededGaussian::new(3);
        let x: Vec<f64> = (0..50).map(|_| g.next()).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.3 * v + g.next()).collect();
        let n = x.len() as f64;
        let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|a| a * a).sum();
        let want = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        assert!((pearson(&fv(&x), &fv(&y)).unwrap() - want).abs() < 1e-12);
    }

    fn dicts(a: DMatrix<f64>, b: DMatrix<f64>) -> (ClassDictionary, OcclusionErrorDictionary) {
        let (na, nb) = (a.ncols(), b.ncols());
        (
            ClassDictionary::from_parts(a, vec![0; na]).unwrap(),
            OcclusionErrorDictionary::from_parts(b, vec![0; nb]).unwrap(),
        )
    }

    #[test]
    fn copied_columns_correlate_fully() {
        let mut g = SeededGaussian::new(4);
        let a = DMatrix::from_fn(20, 3, |_, _| g.next());
        let (cd, oed) = dicts(a.clone(), a.columns(0, 1).into_owned());
        let r = cross_corr_report(&cd, &oed, 10).unwrap();
        assert_eq!(r.pair_count, 3);
        let (cd, oed) = dicts(
            a.columns(0, 1).into_owned(),
            a.columns(0, 1).into_owned() * 7.0,
        );
        let r = cross_corr_report(&cd, &oed, 10).unwrap();
        assert!((r.mean_abs_rho - 1.0).abs() < 1e-14);
        assert_eq!(r.counts[9], 1);
    }

    #[test]
    fn constant_columns_are_counted() {
        let mut g = SeededGaussian::new(5);
        let mut a = DMatrix::from_fn(10, 4, |_, _| g.next());
        a.column_mut(2).fill(3.0);
        let mut b = DMatrix::from_fn(10, 3, |_, _| g.next());
        b.column_mut(0).fill(0.0);
        let (cd, oed) = dicts(a, b);
        let r = cross_corr_report(&cd, &oed, 4).unwrap();
        assert_eq!((r.skipped_class_columns, r.skipped_error_columns), (1, 1));
        assert_eq!(r.pair_count, 3 * 2);
        assert_eq!(r.skipped_pairs, 12 - 6);
        assert_eq!(r.counts.iter().sum::<usize>(), r.pair_count);
        assert_eq!(r.edges, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(matches!(
            cross_corr_report(&cd, &oed, 0),
            Err(SdbeError::InvalidArgument(_))
        ));
    }

    #[test]
    fn grid_shape() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 20);
        assert!((g[0] - 1e-6).abs() < 1e-20 && (g[19] - 10.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(log_grid(1.0, 2.0, 0).is_empty());
    }

    fn tiny_world(energy: f64) -> SynthWorld {
        generate(&WorldSpec {
            m: 48,
            occlusion_energy: energy,
            seed: 9,
            distractor_tilt: 0.6,
            shared_mean_weight: 2.0,
            ..WorldSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn empty_grid_gives_empty_report() {
        let r = evaluate(&[tiny_world(0.5)], &EvalConfig::new(vec![Mode::L2], vec![])).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn rows_follow_sweep_order() {
        let worlds = [tiny_world(0.0), tiny_world(0.5)];
        let cfg = EvalConfig::new(vec![Mode::L2, Mode::L1], vec![0.01, 0.1]);
        let r = evaluate(&worlds, &cfg).unwrap();
        let got: Vec<(f64, Method, Option<f64>)> = r
            .rows
            .iter()
            .map(|x| (x.occlusion_energy, x.method, x.lambda))
            .collect();
        let mut want = Vec::new();
        for e in [0.0, 0.5] {
            want.push((e, Method::Baseline, None));
            for m in [Mode::L2, Mode::L1] {
                for l in [0.01, 0.1] {
                    want.push((e, Method::Sdbe(m), Some(l)));
                }
            }
        }
        assert_eq!(got, want);
        for row in &r.rows {
            assert_eq!(row.accuracy, row.correct as f64 / row.query_count as f64);
            assert!(row.mean_est_err >= 0.0 && row.mean_orig_err >= 0.0);
        }
        let best = r.best_per_condition();
        assert_eq!(best.len(), 6);
    }

    #[test]
    fn huge_lambda_l1_reports_zero_estimates() {
        let r = evaluate(
            &[tiny_world(0.5)],
            &EvalConfig::new(vec![Mode::L1], vec![100.0]),
        )
        .unwrap();
        let row = &r.rows[1];
        assert_eq!(row.zero_estimates, row.query_count);
        assert_eq!(row.ties, row.query_count);
    }

    proptest! {
        #[test]
        fn pearson_invariances(seed in any::<u64>(), s in 0.01f64..100.0, shift in -50.0f64..50.0) {
            let mut g = SeededGaussian::new(seed);
            let x: Vec<f64> = (0..12).map(|_| g.next()).collect();
            let y: Vec<f64> = (0..12).map(|_| g.next()).collect();
            let base = pearson(&fv(&x), &fv(&y)).unwrap();
            prop_assert!((-1.0..=1.0).contains(&base));
            prop_assert!((pearson(&fv(&y), &fv(&x)).unwrap() - base).abs() < 1e-14);
            let xs: Vec<f64> = x.iter().map(|v| v * s + shift).collect();
            prop_assert!((pearson(&fv(&xs), &fv(&y)).unwrap() - base).abs() < 1e-10);
        }
    }
}
