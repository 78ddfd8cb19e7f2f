//! Seeded synthetic worlds with known class and occlusion-error subspaces.
//!
//! Construction, in draw order from one [`SeededGaussian`] stream:
//!
//! 1. An `m x (K_A*class_dim + K_B*pattern_dim)` Gaussian matrix (column-major
//!    fill) is orthonormalized by modified Gram-Schmidt, jointly when
//!    `orthogonalize` is set, otherwise block by block. Consecutive column
//!    ranges become the class blocks, then the pattern blocks.
//! 2. `g` is the normalized sum of the class blocks' first columns. Each class
//!    block's first column becomes `normalize(q + shared_mean_weight * g)`.
//! 3. For pattern `p` with distractor class `d = p mod K_A`, let `e` be the
//!    unit component of class `d`'s first column orthogonal to `g`. The
//!    pattern block's first column `b` becomes `sqrt(1 - k^2) b + k e` with
//!    `k = distractor_tilt`, then `sqrt(1 - t^2) b + t g` with `t = overlap`.
//!    Each block is then re-orthonormalized.
//! 4. A clean feature of class `c` is `Q_c (e1 + spread * z / sqrt(class_dim))`
//!    with `z` standard normal. An occlusion error of pattern `p` for clean
//!    feature `v0` is `energy * |v0| * normalize(Q_p (e1 + spread * z / sqrt(pattern_dim)))`.
//! 5. Training features (class-major): `v0 + noise`.
//!    Extra pairs (pattern-major, class drawn uniformly): occluded
//!    `v0 + eps + noise` then free `v0 + noise`.
//!    Queries (class-major, pattern drawn uniformly): clean `v0`, occluded
//!    `v0 + eps + noise`.
//!
//! With `nonneg_features`, clean features are clipped at zero before the error
//! is drawn and every emitted feature is clipped at zero; the recorded error is
//! then the realized displacement `clip(v0 + eps) - v0`.

use nalgebra::{DMatrix, DVector};

use crate::dictionary::{build_cd, build_oed, ClassDictionary, OcclusionErrorDictionary};
use crate::error::{Result, SdbeError};
use crate::feature::LabeledFeatureSet;
use crate::rng::SeededGaussian;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub m: usize,
    pub k_classes: usize,
    pub class_dim: usize,
    pub k_patterns: usize,
    pub pattern_dim: usize,
    pub train_per_class: usize,
    pub queries_per_class: usize,
    pub pairs_per_pattern: usize,
    pub occlusion_energy: f64,
    pub noise_sigma: f64,
    pub nonneg_features: bool,
    pub seed: u64,
    /// Weight in `[0, 1]` of the shared class direction planted in each pattern block.
    pub overlap: f64,
    /// Weight in `[0, 1]` pulling each pattern block toward a distractor class.
    pub distractor_tilt: f64,
    /// Strength of the mean direction shared by all classes.
    pub shared_mean_weight: f64,
    /// Within-class spread around each class block's first column.
    pub spread: f64,
    pub orthogonalize: bool,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            m: 64,
            k_classes: 4,
            class_dim: 3,
            k_patterns: 2,
            pattern_dim: 2,
            train_per_class: 10,
            queries_per_class: 10,
            pairs_per_pattern: 10,
            occlusion_energy: 0.5,
            noise_sigma: 0.01,
            nonneg_features: false,
            seed: 0,
            overlap: 0.0,
            distractor_tilt: 0.0,
            shared_mean_weight: 0.0,
            spread: 0.4,
            orthogonalize: true,
        }
    }
}

impl WorldSpec {
    /// The standard benchmark world.
    pub fn benchmark() -> Self {
        WorldSpec {
            m: 256,
            k_classes: 10,
            class_dim: 5,
            k_patterns: 4,
            pattern_dim: 3,
            train_per_class: 20,
            queries_per_class: 30,
            pairs_per_pattern: 40,
            occlusion_energy: 0.5,
            noise_sigma: 0.01,
            nonneg_features: false,
            seed: 42,
            overlap: 0.0,
            distractor_tilt: 0.8,
            shared_mean_weight: 3.0,
            spread: 0.4,
            orthogonalize: true,
        }
    }

    /// Benchmark shape with class and pattern subspaces exactly orthogonal.
    pub fn orthogonal_benchmark() -> Self {
        WorldSpec {
            distractor_tilt: 0.0,
            ..WorldSpec::benchmark()
        }
    }

    pub fn total_basis_dim(&self) -> Option<usize> {
        let a = self.k_classes.checked_mul(self.class_dim)?;
        let b = self.k_patterns.checked_mul(self.pattern_dim)?;
        a.checked_add(b)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(SdbeError::InfeasibleSpec(msg));
        if self.m == 0
            || self.k_classes == 0
            || self.class_dim == 0
            || self.k_patterns == 0
            || self.pattern_dim == 0
        {
            return fail("dimensions and subspace counts must be positive".into());
        }
        if self.train_per_class == 0 {
            return fail("train_per_class must be positive".into());
        }
        match self.total_basis_dim() {
            Some(total) if total <= self.m => {}
            _ => {
                return fail(format!(
                    "{} x {} + {} x {} basis columns do not fit in m = {}",
                    self.k_classes, self.class_dim, self.k_patterns, self.pattern_dim, self.m
                ))
            }
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();
        if !nonneg(self.occlusion_energy)
            || !nonneg(self.noise_sigma)
            || !nonneg(self.shared_mean_weight)
            || !nonneg(self.spread)
        {
            return fail(
                "energy, noise, shared mean weight and spread must be finite and nonnegative"
                    .into(),
            );
        }
        if !unit(self.overlap) || !unit(self.distractor_tilt) {
            return fail("overlap and distractor_tilt must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Per-query ground truth, column-aligned with the query sets.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub v0: DMatrix<f64>,
    pub eps: DMatrix<f64>,
    pub class_ids: Vec<i32>,
    pub pattern_ids: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    spec: WorldSpec,
    class_bases: Vec<DMatrix<f64>>,
    pattern_bases: Vec<DMatrix<f64>>,
    train: LabeledFeatureSet,
    extra_occluded: LabeledFeatureSet,
    extra_free: LabeledFeatureSet,
    queries_clean: LabeledFeatureSet,
    queries_occluded: LabeledFeatureSet,
    ground_truth: GroundTruth,
}

impl SynthWorld {
    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn class_bases(&self) -> &[DMatrix<f64>] {
        &self.class_bases
    }

    pub fn pattern_bases(&self) -> &[DMatrix<f64>] {
        &self.pattern_bases
    }

    pub fn train(&self) -> &LabeledFeatureSet {
        &self.train
    }

    /// Occluded halves of the extra pairs, labeled by pattern id.
    pub fn extra_occluded(&self) -> &LabeledFeatureSet {
        &self.extra_occluded
    }

    /// Occlusion-free halves of the extra pairs, labeled by pattern id.
    pub fn extra_free(&self) -> &LabeledFeatureSet {
        &self.extra_free
    }

    pub fn queries_clean(&self) -> &LabeledFeatureSet {
        &self.queries_clean
    }

    pub fn queries_occluded(&self) -> &LabeledFeatureSet {
        &self.queries_occluded
    }

    pub fn ground_truth(&self) -> &GroundTruth {
        &self.ground_truth
    }

    pub fn dictionaries(
        &self,
        normalize: bool,
    ) -> Result<(ClassDictionary, OcclusionErrorDictionary)> {
        Ok((
            build_cd(&self.train, normalize)?,
            build_oed(&self.extra_occluded, &self.extra_free, normalize)?,
        ))
    }

    /// All class basis columns side by side.
    pub fn class_span(&self) -> DMatrix<f64> {
        hstack(&self.class_bases)
    }

    /// All pattern basis columns side by side.
    pub fn pattern_span(&self) -> DMatrix<f64> {
        hstack(&self.pattern_bases)
    }
}

fn hstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let m = blocks[0].nrows();
    let n = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(m, n);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    out
}

/// Modified Gram-Schmidt with one reorthogonalization pass.
fn orthonormalize(mut q: DMatrix<f64>) -> Result<DMatrix<f64>> {
    for j in 0..q.ncols() {
        for _ in 0..2 {
            for i in 0..j {
                let r = q.column(i).dot(&q.column(j));
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-r, &qi, 1.0);
            }
        }
        let n = q.column(j).norm();
        if !(n > 1e-12) {
            return Err(SdbeError::NumericalFailure(
                "rank-deficient basis draw".into(),
            ));
        }
        q.column_mut(j).unscale_mut(n);
    }
    Ok(q)
}

fn unit(v: DVector<f64>) -> Option<DVector<f64>> {
    let n = v.norm();
    (n > 1e-12).then(|| v / n)
}

/// Class blocks, then pattern blocks.
type Bases = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

fn draw_basis(spec: &WorldSpec, rng: &mut SeededGaussian) -> Result<Bases> {
    let m = spec.m;
    let total = spec.total_basis_dim().expect("validated");
    let mut raw = DMatrix::zeros(m, total);
    for j in 0..total {
        for i in 0..m {
            raw[(i, j)] = rng.next();
        }
    }
    let widths: Vec<usize> = std::iter::repeat_n(spec.class_dim, spec.k_classes)
        .chain(std::iter::repeat_n(spec.pattern_dim, spec.k_patterns))
        .collect();
    let joint = if spec.orthogonalize {
        Some(orthonormalize(raw.clone())?)
    } else {
        None
    };
    let mut blocks = Vec::with_capacity(widths.len());
    let mut at = 0;
    for &w in &widths {
        let block = match &joint {
            Some(q) => q.columns(at, w).clone_owned(),
            None => orthonormalize(raw.columns(at, w).clone_owned())?,
        };
        blocks.push(block);
        at += w;
    }
    let patterns = blocks.split_off(spec.k_classes);
    let mut classes = blocks;

    let mut g = DVector::zeros(m);
    for c in &classes {
        g += c.column(0);
    }
    let g = unit(g)
        .ok_or_else(|| SdbeError::NumericalFailure("degenerate shared class direction".into()))?;

    if spec.shared_mean_weight > 0.0 {
        for c in classes.iter_mut() {
            let f = unit(c.column(0) + &g * spec.shared_mean_weight)
                .ok_or_else(|| SdbeError::NumericalFailure("degenerate class direction".into()))?;
            c.set_column(0, &f);
        }
    }

    let mut pattern_out = Vec::with_capacity(patterns.len());
    for (p, mut b) in patterns.into_iter().enumerate() {
        let mut first = b.column(0).clone_owned();
        let k = spec.distractor_tilt;
        if k > 0.0 {
            let fd = classes[p % spec.k_classes].column(0).clone_owned();
            if let Some(e) = unit(&fd - &g * fd.dot(&g)) {
                first = first * (1.0 - k * k).sqrt() + e * k;
            }
        }
        let t = spec.overlap;
        if t > 0.0 {
            first = first * (1.0 - t * t).sqrt() + &g * t;
        }
        b.set_column(0, &first);
        pattern_out.push(orthonormalize(b)?);
    }
    let classes = classes
        .into_iter()
        .map(orthonormalize)
        .collect::<Result<Vec<_>>>()?;
    Ok((classes, pattern_out))
}

fn coefficient_draw(basis: &DMatrix<f64>, spread: f64, rng: &mut SeededGaussian) -> DVector<f64> {
    let d = basis.ncols();
    let scale = spread / (d as f64).sqrt();
    let mut coef = DVector::from_fn(d, |_, _| rng.next() * scale);
    coef[0] += 1.0;
    basis * coef
}

fn noise(m: usize, sigma: f64, rng: &mut SeededGaussian) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.next() * sigma)
}

struct Sampler<'a> {
    spec: &'a WorldSpec,
    classes: &'a [DMatrix<f64>],
    patterns: &'a [DMatrix<f64>],
}

impl Sampler<'_> {
    fn clip(&self, v: DVector<f64>) -> DVector<f64> {
        if self.spec.nonneg_features {
            v.map(|x| x.max(0.0))
        } else {
            v
        }
    }

    fn clean(&self, class: usize, rng: &mut SeededGaussian) -> DVector<f64> {
        self.clip(coefficient_draw(
            &self.classes[class],
            self.spec.spread,
            rng,
        ))
    }

    fn error(&self, pattern: usize, v0: &DVector<f64>, rng: &mut SeededGaussian) -> DVector<f64> {
        let dir = coefficient_draw(&self.patterns[pattern], self.spec.spread, rng);
        let dir = unit(dir).unwrap_or_else(|| self.patterns[pattern].column(0).clone_owned());
        let eps = dir * (self.spec.occlusion_energy * v0.norm());
        if self.spec.nonneg_features {
            (v0 + &eps).map(|x| x.max(0.0)) - v0
        } else {
            eps
        }
    }
}

fn to_set(cols: Vec<DVector<f64>>, labels: Vec<i32>, m: usize) -> Result<LabeledFeatureSet> {
    let mut mat = DMatrix::zeros(m, cols.len());
    for (j, c) in cols.iter().enumerate() {
        mat.set_column(j, c);
    }
    LabeledFeatureSet::new(mat, labels)
}

pub fn generate(spec: &WorldSpec) -> Result<SynthWorld> {
    spec.validate()?;
    let m = spec.m;
    let sigma = spec.noise_sigma;
    let mut rng = SeededGaussian::new(spec.seed);
    let (classes, patterns) = draw_basis(spec, &mut rng)?;
    let s = Sampler {
        spec,
        classes: &classes,
        patterns: &patterns,
    };

    let mut train = Vec::new();
    let mut train_labels = Vec::new();
    for c in 0..spec.k_classes {
        for _ in 0..spec.train_per_class {
            let v0 = s.clean(c, &mut rng);
            train.push(s.clip(v0 + noise(m, sigma, &mut rng)));
            train_labels.push(c as i32);
        }
    }

    let (mut occ, mut free, mut pair_labels) = (Vec::new(), Vec::new(), Vec::new());
    for p in 0..spec.k_patterns {
        for _ in 0..spec.pairs_per_pattern {
            let c = rng.below(spec.k_classes);
            let v0 = s.clean(c, &mut rng);
            let eps = s.error(p, &v0, &mut rng);
            occ.push(s.clip(&v0 + eps + noise(m, sigma, &mut rng)));
            free.push(s.clip(v0 + noise(m, sigma, &mut rng)));
            pair_labels.push(p as i32);
        }
    }

    let (mut clean, mut occluded, mut eps_cols) = (Vec::new(), Vec::new(), Vec::new());
    let (mut class_ids, mut pattern_ids) = (Vec::new(), Vec::new());
    for c in 0..spec.k_classes {
        for _ in 0..spec.queries_per_class {
            let v0 = s.clean(c, &mut rng);
            let p = rng.below(spec.k_patterns);
            let eps = s.error(p, &v0, &mut rng);
            occluded.push(s.clip(&v0 + &eps + noise(m, sigma, &mut rng)));
            clean.push(v0);
            eps_cols.push(eps);
            class_ids.push(c as i32);
            pattern_ids.push(p as i32);
        }
    }

    let queries_clean = to_set(clean, class_ids.clone(), m)?;
    let nq = eps_cols.len();
    let mut eps = DMatrix::zeros(m, nq);
    for (j, e) in eps_cols.iter().enumerate() {
        eps.set_column(j, e);
    }
    Ok(SynthWorld {
        spec: spec.clone(),
        train: to_set(train, train_labels, m)?,
        extra_occluded: to_set(occ, pair_labels.clone(), m)?,
        extra_free: to_set(free, pair_labels, m)?,
        queries_occluded: to_set(occluded, class_ids.clone(), m)?,
        ground_truth: GroundTruth {
            v0: queries_clean.matrix().clone(),
            eps,
            class_ids,
            pattern_ids,
        },
        queries_clean,
        class_bases: classes,
        pattern_bases: patterns,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleReport {
    /// Cosines of the principal angles, largest first.
    pub cosines: Vec<f64>,
    pub max_cos: f64,
    pub min_cos: f64,
    pub mean_cos: f64,
}

/// Cosines of the principal angles between `span(x)` and `span(y)`, largest
/// first: singular values of `Qx^T Qy` for orthonormal bases from thin QR.
pub fn principal_cosines(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.nrows() != y.nrows() {
        return Err(SdbeError::DimensionMismatch {
            expected: x.nrows(),
            found: y.nrows(),
        });
    }
    if x.ncols() == 0 || y.ncols() == 0 {
        return Err(SdbeError::EmptyInput);
    }
    let qx = x.clone().qr().q();
    let qy = y.clone().qr().q();
    let cross = qx.tr_mul(&qy);
    let mut s: Vec<f64> = cross.singular_values().iter().map(|v| v.min(1.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

pub fn subspace_angle_report(world: &SynthWorld) -> Result<AngleReport> {
    let cosines = principal_cosines(&world.class_span(), &world.pattern_span())?;
    let max_cos = cosines[0];
    let min_cos = *cosines.last().expect("non-empty");
    let mean_cos = cosines.iter().sum::<f64>() / cosines.len() as f64;
    Ok(AngleReport {
        cosines,
        max_cos,
        min_cos,
        mean_cos,
    })
}
