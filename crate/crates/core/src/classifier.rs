//! Downstream classifiers for estimated features: nearest neighbor over
//! labeled prototypes and a multinomial softmax (logistic) model.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result, SdbeError};
use crate::feature::{FeatureVector, LabeledFeatureSet};
use crate::rng::SeededGaussian;

pub trait Classifier {
    fn dim(&self) -> usize;

    fn classify(&self, v: &FeatureVector) -> Result<i32>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnClassifier {
    prototypes: LabeledFeatureSet,
}

/// Nearest-neighbor decision together with whether another prototype was
/// exactly as close.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NnDecision {
    pub label: i32,
    pub index: usize,
    pub tied: bool,
}

impl NnClassifier {
    pub fn new(prototypes: LabeledFeatureSet) -> Result<Self> {
        if prototypes.is_empty() {
            return Err(SdbeError::EmptyInput);
        }
        Ok(NnClassifier { prototypes })
    }

    pub fn prototypes(&self) -> &LabeledFeatureSet {
        &self.prototypes
    }

    /// Euclidean nearest prototype; ties go to the lowest prototype index.
    pub fn decide(&self, v: &FeatureVector) -> Result<NnDecision> {
        check_dim(self.prototypes.dim(), v.dim())?;
        let q = v.values();
        let mut best = (f64::INFINITY, 0usize);
        let mut tied = false;
        for (j, col) in self.prototypes.matrix().column_iter().enumerate() {
            let d = (col - q).norm_squared();
            if d < best.0 {
                best = (d, j);
                tied = false;
            } else if d == best.0 {
                tied = true;
            }
        }
        Ok(NnDecision {
            label: self.prototypes.labels()[best.1],
            index: best.1,
            tied,
        })
    }
}

impl Classifier for NnClassifier {
    fn dim(&self) -> usize {
        self.prototypes.dim()
    }

    fn classify(&self, v: &FeatureVector) -> Result<i32> {
        Ok(self.decide(v)?.label)
    }
}

pub fn nn_classify(c: &NnClassifier, v: &FeatureVector) -> Result<i32> {
    c.classify(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.0,
            epochs: 500,
            l2_penalty: 1e-4,
            seed: 0,
        }
    }
}

/// Linear softmax model `p = softmax(W v + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    weights: DMatrix<f64>,
    bias: DVector<f64>,
    class_ids: Vec<i32>,
}

fn stable_softmax(logits: &DVector<f64>) -> DVector<f64> {
    let max = logits.max();
    let exp = logits.map(|z| (z - max).exp());
    let total = exp.sum();
    exp / total
}

fn argmax_lowest(x: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..x.len() {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

impl SoftmaxClassifier {
    pub fn from_parts(
        weights: DMatrix<f64>,
        bias: DVector<f64>,
        class_ids: Vec<i32>,
    ) -> Result<Self> {
        let k = weights.nrows();
        if k < 2 {
            return Err(SdbeError::DegenerateLabels);
        }
        check_dim(k, bias.len())?;
        check_dim(k, class_ids.len())?;
        if weights.ncols() == 0 {
            return Err(SdbeError::EmptyInput);
        }
        if weights.iter().chain(bias.iter()).any(|x| !x.is_finite()) {
            return Err(SdbeError::NonFinite);
        }
        Ok(SoftmaxClassifier {
            weights,
            bias,
            class_ids,
        })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    pub fn class_ids(&self) -> &[i32] {
        &self.class_ids
    }

    pub fn logits(&self, v: &FeatureVector) -> Result<DVector<f64>> {
        check_dim(self.weights.ncols(), v.dim())?;
        Ok(&self.weights * v.values() + &self.bias)
    }

    /// Predicted class id (ties to the lowest class index) and class probabilities.
    pub fn predict(&self, v: &FeatureVector) -> Result<(i32, DVector<f64>)> {
        let probs = stable_softmax(&self.logits(v)?);
        Ok((self.class_ids[argmax_lowest(&probs)], probs))
    }

    /// Full-batch gradient descent on mean cross-entropy plus
    /// `l2_penalty / 2 * |W|^2`. A step that would raise the loss is rejected
    /// and the rate halved, so the recorded per-epoch losses never increase.
    pub fn train(data: &LabeledFeatureSet, cfg: &TrainConfig) -> Result<(Self, Vec<f64>)> {
        if cfg.epochs == 0 {
            return Err(SdbeError::InvalidArgument(
                "epochs must be at least 1".into(),
            ));
        }
        if !(cfg.learning_rate > 0.0) || !(cfg.l2_penalty >= 0.0) {
            return Err(SdbeError::InvalidArgument(
                "learning rate must be positive and penalty nonnegative".into(),
            ));
        }
        let mut class_ids: Vec<i32> = data.labels().to_vec();
        class_ids.sort_unstable();
        class_ids.dedup();
        if class_ids.len() < 2 {
            return Err(SdbeError::DegenerateLabels);
        }
        let k = class_ids.len();
        let m = data.dim();
        let x = data.matrix();
        let targets: Vec<usize> = data
            .labels()
            .iter()
            .map(|l| class_ids.binary_search(l).expect("label present"))
            .collect();

        let mut g = SeededGaussian::new(cfg.seed);
        let mut w = DMatrix::from_fn(k, m, |_, _| 0.01 * g.next());
        let mut b = DVector::zeros(k);
        let mut rate = cfg.learning_rate;
        let mut loss = cross_entropy(&w, &b, x, &targets, cfg.l2_penalty).0;
        let mut history = Vec::with_capacity(cfg.epochs + 1);
        history.push(loss);
        for _ in 0..cfg.epochs {
            let (_, gw, gb) = cross_entropy(&w, &b, x, &targets, cfg.l2_penalty);
            let mut halvings = 0;
            loop {
                let w_next = &w - &gw * rate;
                let b_next = &b - &gb * rate;
                let next = cross_entropy(&w_next, &b_next, x, &targets, cfg.l2_penalty).0;
                if next <= loss {
                    w = w_next;
                    b = b_next;
                    loss = next;
                    break;
                }
                rate *= 0.5;
                halvings += 1;
                if halvings > 60 {
                    break;
                }
            }
            history.push(loss);
        }
        Ok((SoftmaxClassifier::from_parts(w, b, class_ids)?, history))
    }
}

/// Returns (loss, dL/dW, dL/db).
fn cross_entropy(
    w: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DMatrix<f64>,
    targets: &[usize],
    penalty: f64,
) -> (f64, DMatrix<f64>, DVector<f64>) {
    let n = x.ncols() as f64;
    let mut logits = w * x;
    for mut col in logits.column_iter_mut() {
        col += b;
    }
    let mut loss = 0.0;
    // logits become (probabilities - one_hot) / n in place
    for (j, mut col) in logits.column_iter_mut().enumerate() {
        let max = col.max();
        let lse = max + col.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        loss -= col[targets[j]] - lse;
        col.apply(|z| *z = (*z - lse).exp());
        col[targets[j]] -= 1.0;
        col /= n;
    }
    loss = loss / n + 0.5 * penalty * w.norm_squared();
    let gw = &logits * x.transpose() + w * penalty;
    let gb = logits.column_sum();
    (loss, gw, gb)
}

impl Classifier for SoftmaxClassifier {
    fn dim(&self) -> usize {
        self.weights.ncols()
    }

    fn classify(&self, v: &FeatureVector) -> Result<i32> {
        Ok(self.predict(v)?.0)
    }
}

pub fn softmax_train(data: &LabeledFeatureSet, cfg: &TrainConfig) -> Result<SoftmaxClassifier> {
    Ok(SoftmaxClassifier::train(data, cfg)?.0)
}

pub fn softmax_classify(c: &SoftmaxClassifier, v: &FeatureVector) -> Result<(i32, DVector<f64>)> {
    c.predict(v)
}
