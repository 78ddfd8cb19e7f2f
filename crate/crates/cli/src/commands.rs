use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use sdbe_core::analysis::default_lambda_grid;
use sdbe_core::container::{encode_compiled, encode_model, StoredModel};
use sdbe_core::feature::DEFAULT_L0_TAU;
use sdbe_core::lasso::{DEFAULT_KKT_TOL, DEFAULT_MAX_ITERS, DEFAULT_OBJ_TOL};
use sdbe_core::ridge::DEFAULT_LAMBDA;
use sdbe_core::{
    cross_corr_report, evaluate, generate, occlusion_error_stats, ClassDictionary, Classifier,
    EvalConfig, FeatureVector, FitConfig, LabeledFeatureSet, Mode, NnClassifier,
    OcclusionErrorDictionary, SdbeError, SdbeModel, SoftmaxClassifier, TrainConfig,
};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{
    emit, feature_csv, fmt_f64, parse_feature_csv, read_matrix, read_model, write_bytes,
    write_matrix, Csv,
};

fn features(path: &Path) -> CliResult<LabeledFeatureSet> {
    let (m, labels) = read_matrix(path)?;
    Ok(LabeledFeatureSet::new(m, labels)?)
}

fn cfg_path(cfg: &RunConfig, key: &str) -> CliResult<PathBuf> {
    Ok(PathBuf::from(cfg.require(key)?))
}

fn columns(set: &LabeledFeatureSet) -> CliResult<Vec<FeatureVector>> {
    (0..set.len()).map(|j| Ok(set.column(j))).collect()
}

pub fn synth(cfg: &RunConfig, out_dir: &Path) -> CliResult<()> {
    let spec = cfg.world_spec()?;
    let world = generate(&spec)?;
    std::fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.into(),
        source,
    })?;
    let sets = [
        ("train.sdbe", world.train()),
        ("extra_occluded.sdbe", world.extra_occluded()),
        ("extra_free.sdbe", world.extra_free()),
        ("queries_clean.sdbe", world.queries_clean()),
        ("queries_occluded.sdbe", world.queries_occluded()),
    ];
    for (name, set) in sets {
        write_matrix(&out_dir.join(name), set.matrix(), set.labels())?;
    }
    let gt = world.ground_truth();
    write_matrix(&out_dir.join("v0.sdbe"), &gt.v0, &gt.class_ids)?;
    write_matrix(&out_dir.join("eps.sdbe"), &gt.eps, &gt.pattern_ids)?;
    let mut truth = Csv::new(&["query", "class", "pattern", "eps_norm"]);
    for (j, (c, p)) in gt.class_ids.iter().zip(&gt.pattern_ids).enumerate() {
        truth.row(&[
            j.to_string(),
            c.to_string(),
            p.to_string(),
            fmt_f64(gt.eps.column(j).norm()),
        ]);
    }
    write_bytes(&out_dir.join("truth.csv"), truth.into_string().as_bytes())?;
    let resolved = format!(
        "seed={}\nm={}\nk_classes={}\nclass_dim={}\nk_patterns={}\npattern_dim={}\ntrain_per_class={}\n\
         queries_per_class={}\npairs_per_pattern={}\nocclusion_energy={}\nnoise_sigma={}\nnonneg_features={}\n\
         overlap={}\ndistractor_tilt={}\nshared_mean_weight={}\nspread={}\northogonalize={}\n",
        spec.seed,
        spec.m,
        spec.k_classes,
        spec.class_dim,
        spec.k_patterns,
        spec.pattern_dim,
        spec.train_per_class,
        spec.queries_per_class,
        spec.pairs_per_pattern,
        fmt_f64(spec.occlusion_energy),
        fmt_f64(spec.noise_sigma),
        on_off(spec.nonneg_features),
        fmt_f64(spec.overlap),
        fmt_f64(spec.distractor_tilt),
        fmt_f64(spec.shared_mean_weight),
        fmt_f64(spec.spread),
        on_off(spec.orthogonalize),
    );
    write_bytes(&out_dir.join("world.cfg"), resolved.as_bytes())
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

pub fn build_cd(input: &Path, out: &Path, normalize: bool) -> CliResult<()> {
    let cd = sdbe_core::build_cd(&features(input)?, normalize)?;
    write_matrix(out, cd.matrix(), cd.class_labels())
}

pub fn build_oed(occluded: &Path, free: &Path, out: &Path, normalize: bool) -> CliResult<()> {
    let oed = sdbe_core::build_oed(&features(occluded)?, &features(free)?, normalize)?;
    write_matrix(out, oed.matrix(), oed.pattern_labels())
}

fn fit_config(cfg: &RunConfig, mode: Mode, lambda: f64) -> CliResult<FitConfig> {
    Ok(FitConfig {
        mode,
        lambda,
        flags: cfg.flags()?,
        max_iters: cfg.parsed_or("max_iters", DEFAULT_MAX_ITERS)?,
        kkt_tol: cfg.parsed_or("kkt_tol", DEFAULT_KKT_TOL)?,
        obj_tol: cfg.parsed_or("obj_tol", DEFAULT_OBJ_TOL)?,
    })
}

pub fn fit(cfg: &RunConfig) -> CliResult<()> {
    let (a, a_labels) = read_matrix(&cfg_path(cfg, "cd")?)?;
    let cd = ClassDictionary::from_parts(a, a_labels)?;
    let oed = match cfg.get("oed") {
        Some(p) => {
            let (b, b_labels) = read_matrix(Path::new(p))?;
            if b.ncols() == 0 {
                OcclusionErrorDictionary::empty(cd.dim())
            } else {
                OcclusionErrorDictionary::from_parts(b, b_labels)?
            }
        }
        None => OcclusionErrorDictionary::empty(cd.dim()),
    };
    let fc = fit_config(
        cfg,
        cfg.mode(Mode::L2)?,
        cfg.parsed_or("lambda", DEFAULT_LAMBDA)?,
    )?;
    let model = SdbeModel::fit(&cd, &oed, &fc)?;
    write_bytes(&cfg_path(cfg, "out")?, &encode_model(&model)?)
}

pub fn compile(cfg: &RunConfig) -> CliResult<()> {
    let compiled = match read_model(&cfg_path(cfg, "model")?)? {
        StoredModel::Sdbe(m) => m.compile_linear()?,
        StoredModel::Compiled(c) => c,
    };
    write_bytes(&cfg_path(cfg, "out")?, &encode_compiled(&compiled)?)
}

struct Estimated {
    v0_hat: FeatureVector,
    alpha: Option<DVector<f64>>,
    residual_norm: Option<f64>,
    diagnostics: Option<sdbe_core::estimator::L1Diagnostics>,
}

fn estimate_one(model: &StoredModel, v: &FeatureVector) -> CliResult<Estimated> {
    Ok(match model {
        StoredModel::Sdbe(m) => {
            let r = m.estimate(v)?;
            Estimated {
                v0_hat: r.v0_hat,
                residual_norm: Some(r.residual.norm()),
                alpha: Some(r.alpha),
                diagnostics: r.diagnostics,
            }
        }
        StoredModel::Compiled(c) => Estimated {
            v0_hat: c.apply(v)?,
            alpha: None,
            residual_norm: None,
            diagnostics: None,
        },
    })
}

fn opt<T>(x: Option<T>, f: impl Fn(T) -> String) -> String {
    x.map(f).unwrap_or_default()
}

pub fn estimate(cfg: &RunConfig, report: Option<&Path>) -> CliResult<()> {
    let model = read_model(&cfg_path(cfg, "model")?)?;
    let queries = features(&cfg_path(cfg, "queries")?)?;
    let out = cfg_path(cfg, "out")?;
    let mut est = DMatrix::zeros(queries.dim(), queries.len());
    let mut csv = Csv::new(&[
        "query",
        "label",
        "alpha_nonzeros",
        "alpha_l1",
        "residual_norm",
        "iterations",
        "kkt_residual",
        "converged",
    ]);
    for (j, v) in columns(&queries)?.iter().enumerate() {
        let e = estimate_one(&model, v)?;
        est.set_column(j, e.v0_hat.values());
        let d = e.diagnostics;
        csv.row(&[
            j.to_string(),
            queries.labels()[j].to_string(),
            opt(e.alpha.as_ref(), |a| {
                a.iter().filter(|x| **x != 0.0).count().to_string()
            }),
            opt(e.alpha.as_ref(), |a| fmt_f64(a.lp_norm(1))),
            opt(e.residual_norm, fmt_f64),
            opt(d, |d| d.iterations.to_string()),
            opt(d, |d| fmt_f64(d.kkt_residual)),
            opt(d, |d| d.converged.to_string()),
        ]);
    }
    write_matrix(&out, &est, queries.labels())?;
    emit(report, &csv.into_string())
}

pub enum ClassifierFile {
    Prototypes(PathBuf),
    Softmax(PathBuf),
}

fn read_softmax(path: &Path) -> CliResult<SoftmaxClassifier> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })?;
    let (rows, ids) = parse_feature_csv(&text)?;
    if rows.nrows() < 2 {
        return Err(CliError::Csv {
            line: 1,
            message: "softmax rows need a bias and at least one weight".into(),
        });
    }
    let bias = rows.row(0).transpose();
    let weights = rows.rows(1, rows.nrows() - 1).transpose();
    Ok(SoftmaxClassifier::from_parts(weights, bias, ids)?)
}

fn softmax_csv(c: &SoftmaxClassifier) -> String {
    let mut text = String::new();
    for (k, id) in c.class_ids().iter().enumerate() {
        text.push_str(&id.to_string());
        text.push(',');
        text.push_str(&fmt_f64(c.bias()[k]));
        for w in c.weights().row(k).iter() {
            text.push(',');
            text.push_str(&fmt_f64(*w));
        }
        text.push('\n');
    }
    text
}

pub fn classify(cfg: &RunConfig, file: &ClassifierFile, out: Option<&Path>) -> CliResult<()> {
    let queries = features(&cfg_path(cfg, "queries")?)?;
    let model = cfg
        .get("model")
        .map(|p| read_model(Path::new(p)))
        .transpose()?;
    let nn;
    let softmax;
    let classifier: &dyn Classifier = match file {
        ClassifierFile::Prototypes(p) => {
            nn = NnClassifier::new(features(p)?)?;
            &nn
        }
        ClassifierFile::Softmax(p) => {
            softmax = read_softmax(p)?;
            &softmax
        }
    };
    let mut csv = Csv::new(&["query", "predicted", "true"]);
    for (j, v) in columns(&queries)?.iter().enumerate() {
        let input = match &model {
            Some(m) => estimate_one(m, v)?.v0_hat,
            None => v.clone(),
        };
        let label = classifier.classify(&input)?;
        csv.row(&[
            j.to_string(),
            label.to_string(),
            queries.labels()[j].to_string(),
        ]);
    }
    emit(out, &csv.into_string())
}

pub fn train_softmax(data: &Path, train: &TrainConfig, out: Option<&Path>) -> CliResult<()> {
    let (c, _) = SoftmaxClassifier::train(&features(data)?, train)?;
    emit(out, &softmax_csv(&c))
}

pub fn eval(cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let spec = cfg.world_spec()?;
    let energies = cfg
        .list("energies")?
        .unwrap_or_else(|| vec![spec.occlusion_energy]);
    let worlds = energies
        .iter()
        .map(|&e| {
            generate(&sdbe_core::WorldSpec {
                occlusion_energy: e,
                ..spec.clone()
            })
        })
        .collect::<Result<Vec<_>, SdbeError>>()?;
    let grid = match (cfg.list("lambda_grid")?, cfg.parsed::<f64>("lambda")?) {
        (Some(g), _) => g,
        (None, Some(l)) => vec![l],
        (None, None) => default_lambda_grid(),
    };
    let base = fit_config(cfg, Mode::L2, DEFAULT_LAMBDA)?;
    let ec = EvalConfig {
        flags: base.flags,
        max_iters: base.max_iters,
        kkt_tol: base.kkt_tol,
        obj_tol: base.obj_tol,
        ..EvalConfig::new(cfg.modes(&[Mode::L2, Mode::L1])?, grid)
    };
    let report = evaluate(&worlds, &ec)?;
    let rows = if cfg.switch("best_only", false)? {
        report.best_per_condition()
    } else {
        report.rows
    };
    let mut csv = Csv::new(&[
        "occlusion_energy",
        "method",
        "lambda",
        "accuracy",
        "correct",
        "query_count",
        "mean_est_err",
        "mean_orig_err",
        "ties",
        "unconverged",
        "zero_estimates",
    ]);
    for r in rows {
        csv.row(&[
            fmt_f64(r.occlusion_energy),
            r.method.as_str().to_string(),
            opt(r.lambda, fmt_f64),
            fmt_f64(r.accuracy),
            r.correct.to_string(),
            r.query_count.to_string(),
            fmt_f64(r.mean_est_err),
            fmt_f64(r.mean_orig_err),
            r.ties.to_string(),
            r.unconverged.to_string(),
            r.zero_estimates.to_string(),
        ]);
    }
    emit(out, &csv.into_string())
}

pub fn corr(cfg: &RunConfig, out: Option<&Path>, summary: Option<&Path>) -> CliResult<()> {
    let (a, a_labels) = read_matrix(&cfg_path(cfg, "cd")?)?;
    let (b, b_labels) = read_matrix(&cfg_path(cfg, "oed")?)?;
    let cd = ClassDictionary::from_parts(a, a_labels)?;
    let oed = OcclusionErrorDictionary::from_parts(b, b_labels)?;
    let report = cross_corr_report(&cd, &oed, cfg.parsed_or("bins", 20)?)?;
    let mut csv = Csv::new(&["bin_lo", "bin_hi", "count"]);
    for (k, count) in report.counts.iter().enumerate() {
        csv.row(&[
            fmt_f64(report.edges[k]),
            fmt_f64(report.edges[k + 1]),
            count.to_string(),
        ]);
    }
    emit(out, &csv.into_string())?;
    if let Some(path) = summary {
        let mut s = Csv::new(&["key", "value"]);
        s.row(&["pair_count".into(), report.pair_count.to_string()]);
        s.row(&["mean_abs_rho".into(), fmt_f64(report.mean_abs_rho)]);
        s.row(&[
            "skipped_class_columns".into(),
            report.skipped_class_columns.to_string(),
        ]);
        s.row(&[
            "skipped_error_columns".into(),
            report.skipped_error_columns.to_string(),
        ]);
        s.row(&["skipped_pairs".into(), report.skipped_pairs.to_string()]);
        write_bytes(path, s.into_string().as_bytes())?;
    }
    Ok(())
}

pub fn stats(cfg: &RunConfig, clean: &Path, occluded: &Path, out: Option<&Path>) -> CliResult<()> {
    let clean = features(clean)?;
    let occluded = features(occluded)?;
    if clean.len() != occluded.len() {
        return Err(SdbeError::DimensionMismatch {
            expected: clean.len(),
            found: occluded.len(),
        }
        .into());
    }
    let tau = cfg.parsed_or("tau", DEFAULT_L0_TAU)?;
    let mut csv = Csv::new(&["index", "rel_l2", "rel_l0"]);
    for j in 0..clean.len() {
        let s = occlusion_error_stats(&clean.column(j), &occluded.column(j), tau)?;
        csv.row(&[j.to_string(), fmt_f64(s.rel_l2), fmt_f64(s.rel_l0)]);
    }
    emit(out, &csv.into_string())
}

pub fn export(input: &Path, out: Option<&Path>) -> CliResult<()> {
    let (m, labels) = read_matrix(input)?;
    emit(out, &feature_csv(&m, &labels))
}
