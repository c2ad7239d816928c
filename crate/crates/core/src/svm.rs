//! Linear soft-margin SVM with one-vs-rest multiclass reduction, plus
//! stratified k-fold evaluation.
//!
//! Training standardizes features with training-set statistics (the FV
//! and HOC blocks differ by orders of magnitude, so the concatenation is
//! unusable without it) and solves each binary problem with deterministic
//! dual coordinate descent on the hinge loss.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTag;
use crate::iq::Modulation;

/// Candidate regularization values for `C = auto`.
pub const C_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];
const STD_FLOOR: f64 = 1e-12;
const CD_MAX_EPOCHS: usize = 200;
const CD_TOLERANCE: f64 = 1e-6;

/// Per-dimension standardization parameters, computed on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &[Vec<f64>]) -> Scaler {
        let n = x.len() as f64;
        let dim = x[0].len();
        let mut mean = vec![0.0; dim];
        for row in x {
            for d in 0..dim {
                mean[d] += row[d];
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in x {
            for d in 0..dim {
                let diff = row[d] - mean[d];
                var[d] += diff * diff;
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Scaler { mean, std }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

/// Training provenance kept with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmProvenance {
    pub training_data_hash: String,
    pub seed: u64,
}

/// One-vs-rest linear SVM: per class a weight vector and bias over
/// standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub classes: Vec<Modulation>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub c: f64,
    pub feature_tag: FeatureTag,
    pub scaler: Scaler,
    pub provenance: SvmProvenance,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.scaler.mean.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
    }
}

/// Dual coordinate descent for one binary hinge-loss problem.
/// `y` entries are ±1; returns (weights, bias) on the standardized space.
fn train_binary(x: &[Vec<f64>], y: &[f64], c: f64, seed: u64) -> (Vec<f64>, f64) {
    let n = x.len();
    let dim = x[0].len();
    // squared norms with the implicit bias feature
    let q: Vec<f64> = x.iter().map(|row| row.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..CD_MAX_EPOCHS {
        order.shuffle(&mut rng);
        let mut max_violation = 0.0f64;
        for &i in &order {
            let xi = &x[i];
            let margin = y[i] * (dot(&w, xi) + b);
            let g = margin - 1.0;
            // projected gradient for the box constraint [0, C]
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            if pg.abs() > 1e-14 {
                max_violation = max_violation.max(pg.abs());
                let new_alpha = (alpha[i] - g / q[i]).clamp(0.0, c);
                let delta = (new_alpha - alpha[i]) * y[i];
                if delta != 0.0 {
                    for d in 0..dim {
                        w[d] += delta * xi[d];
                    }
                    b += delta;
                    alpha[i] = new_alpha;
                }
            }
        }
        if max_violation < CD_TOLERANCE {
            break;
        }
    }
    (w, b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Train a one-vs-rest linear SVM. Deterministic given the seed.
pub fn train_svm(
    features: &[Vec<f64>],
    labels: &[Modulation],
    tag: FeatureTag,
    c: f64,
    seed: u64,
) -> Result<SvmModel> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: features.len(), got: labels.len() });
    }
    if features.is_empty() {
        return Err(Error::TooFewExamples("no training examples".into()));
    }
    let dim = features[0].len();
    if let Some(row) = features.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
    }
    let mut classes: Vec<Modulation> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels);
    }
    for class in &classes {
        if labels.iter().filter(|&&l| l == *class).count() < 2 {
            return Err(Error::TooFewExamples(format!("class {class} has fewer than 2 examples")));
        }
    }

    let scaler = Scaler::fit(features);
    let x: Vec<Vec<f64>> = features.iter().map(|r| scaler.transform(r)).collect();

    let results: Vec<(Vec<f64>, f64)> = classes
        .par_iter()
        .enumerate()
        .map(|(ci, class)| {
            let y: Vec<f64> =
                labels.iter().map(|l| if l == class { 1.0 } else { -1.0 }).collect();
            train_binary(&x, &y, c, seed.wrapping_add(ci as u64))
        })
        .collect();
    let (weights, biases): (Vec<Vec<f64>>, Vec<f64>) = results.into_iter().unzip();

    Ok(SvmModel {
        classes,
        weights,
        biases,
        c,
        feature_tag: tag,
        scaler,
        provenance: SvmProvenance { training_data_hash: data_hash(features, labels), seed },
    })
}

/// Train with C picked from [`C_GRID`] on a stratified inner validation
/// split (ties favor the smaller C), then refit on all data.
pub fn train_svm_auto(
    features: &[Vec<f64>],
    labels: &[Modulation],
    tag: FeatureTag,
    seed: u64,
) -> Result<SvmModel> {
    let folds = stratified_folds(labels, 5, seed)?;
    let val_idx: &[usize] = &folds[0];
    let val_set: std::collections::HashSet<usize> = val_idx.iter().cloned().collect();
    let (mut tr_x, mut tr_y, mut va_x, mut va_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..features.len() {
        if val_set.contains(&i) {
            va_x.push(features[i].clone());
            va_y.push(labels[i]);
        } else {
            tr_x.push(features[i].clone());
            tr_y.push(labels[i]);
        }
    }
    let mut best = (f64::NEG_INFINITY, C_GRID[0]);
    for &c in &C_GRID {
        let model = train_svm(&tr_x, &tr_y, tag, c, seed)?;
        let correct = va_x
            .iter()
            .zip(&va_y)
            .filter(|(x, y)| predict(&model, x).map(|(p, _)| p == **y).unwrap_or(false))
            .count();
        let acc = correct as f64 / va_x.len() as f64;
        if acc > best.0 {
            best = (acc, c);
        }
    }
    train_svm(features, labels, tag, best.1, seed)
}

fn data_hash(features: &[Vec<f64>], labels: &[Modulation]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for (row, label) in features.iter().zip(labels) {
        hasher.update(label.name().as_bytes());
        for v in row {
            hasher.update(v.to_le_bytes());
        }
    }
    format!("{:x}", hasher.finalize())
}

/// Predict the class of one feature vector; also returns the per-class
/// decision values in class order. Ties break toward the earlier class.
pub fn predict(model: &SvmModel, feature: &[f64]) -> Result<(Modulation, Vec<f64>)> {
    if feature.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: feature.len() });
    }
    let x = model.scaler.transform(feature);
    let decisions: Vec<f64> = model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, b)| dot(w, &x) + b)
        .collect();
    let mut best = 0;
    for (i, d) in decisions.iter().enumerate() {
        if *d > decisions[best] {
            best = i;
        }
    }
    Ok((model.classes[best], decisions))
}

/// Predict, checking the feature tag against the model.
pub fn predict_tagged(
    model: &SvmModel,
    feature: &[f64],
    tag: FeatureTag,
) -> Result<(Modulation, Vec<f64>)> {
    if tag != model.feature_tag {
        return Err(Error::TagMismatch {
            expected: model.feature_tag.to_string(),
            got: tag.to_string(),
        });
    }
    predict(model, feature)
}

/// Confusion counts and accuracies from a k-fold evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<Modulation>,
    /// confusion[true][predicted]
    pub confusion: Vec<Vec<usize>>,
    pub folds: usize,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: usize = (0..self.classes.len()).map(|i| self.confusion[i][i]).sum();
        correct as f64 / self.total() as f64
    }

    pub fn per_class_accuracy(&self) -> Vec<f64> {
        self.confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: usize = row.iter().sum();
                if total == 0 {
                    f64::NAN
                } else {
                    self.confusion[i][i] as f64 / total as f64
                }
            })
            .collect()
    }
}

/// Deterministic stratified fold assignment: per-class seeded shuffle,
/// then round-robin dealing.
pub fn stratified_folds(labels: &[Modulation], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::ConfigError("fold count must be >= 2".into()));
    }
    let mut classes: Vec<Modulation> = labels.to_vec();
    classes.sort();
    classes.dedup();
    let mut folds = vec![Vec::new(); k];
    for (ci, class) in classes.iter().enumerate() {
        let mut idx: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == *class).collect();
        if idx.len() < k {
            return Err(Error::TooFewExamples(format!(
                "class {class} has {} examples, need at least {k} for {k}-fold",
                idx.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(ci as u64));
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            folds[j % k].push(i);
        }
    }
    Ok(folds)
}

/// Stratified k-fold cross validation with a fixed C.
pub fn kfold_evaluate(
    features: &[Vec<f64>],
    labels: &[Modulation],
    tag: FeatureTag,
    k: usize,
    c: f64,
    seed: u64,
) -> Result<EvalReport> {
    let folds = stratified_folds(labels, k, seed)?;
    let mut classes: Vec<Modulation> = labels.to_vec();
    classes.sort();
    classes.dedup();
    let class_index = |m: Modulation| classes.iter().position(|&c| c == m).unwrap();

    let reports: Vec<Vec<Vec<usize>>> = folds
        .par_iter()
        .map(|test_idx| {
            let test_set: std::collections::HashSet<usize> = test_idx.iter().cloned().collect();
            let (mut tr_x, mut tr_y) = (Vec::new(), Vec::new());
            for i in 0..features.len() {
                if !test_set.contains(&i) {
                    tr_x.push(features[i].clone());
                    tr_y.push(labels[i]);
                }
            }
            let model = train_svm(&tr_x, &tr_y, tag, c, seed)?;
            let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
            for &i in test_idx {
                let (pred, _) = predict(&model, &features[i])?;
                confusion[class_index(labels[i])][class_index(pred)] += 1;
            }
            Ok(confusion)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    for fold_conf in reports {
        for (i, row) in fold_conf.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                confusion[i][j] += v;
            }
        }
    }
    Ok(EvalReport { classes, confusion, folds: k })
}
