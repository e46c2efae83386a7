//! Region features, the SVM and its evaluation by stratified cross-validation.

mod features;
mod svm;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use features::{
    contrast_ring, extract_features, mean_edge_gradient, FeatureVector, CONTRAST_RING, FEATURE_DIM, FEATURE_NAMES,
};
pub use svm::{
    load_model, rbf, save_model, smo_solve, train, BinaryMachine, ExudateClass, FeatureNorm, Hyperparams,
    LabeledSample, Prediction, SmoSolution, SvmModel, KKT_TOL, MODEL_VERSION,
};

use crate::error::{Error, Result};

/// Stratified fold assignment: per class, shuffled indices are dealt to folds
/// round-robin, continuing the rotation across classes so fold sizes differ by at most one.
pub fn stratified_folds(samples: &[LabeledSample], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::arg("cross-validation needs at least two folds"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for class in ExudateClass::ALL {
        let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].class == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < folds {
            return Err(Error::arg(format!(
                "class {class:?} has {} samples, fewer than {folds} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            out[next % folds].push(i);
            next += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(v: &[f64]) -> MeanStd {
    if v.is_empty() {
        return MeanStd {
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub hyperparams: Hyperparams,
    pub folds: usize,
    pub fold_sizes: Vec<usize>,
    pub accuracy: MeanStd,
    /// Per-class recall over folds, in [`ExudateClass::ALL`] order; NaN for absent classes.
    pub per_class: Vec<MeanStd>,
    /// Pooled out-of-fold accuracy.
    pub pooled_accuracy: f64,
}

pub fn cross_validate(samples: &[LabeledSample], hp: &Hyperparams, folds: usize, seed: u64) -> Result<CvReport> {
    let parts = stratified_folds(samples, folds, seed)?;
    let mut fold_acc = Vec::with_capacity(folds);
    let mut class_acc: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let (mut correct_total, mut total) = (0usize, 0usize);
    for (k, test) in parts.iter().enumerate() {
        let train_set: Vec<LabeledSample> = parts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .flat_map(|(_, p)| p.iter().map(|&i| samples[i].clone()))
            .collect();
        let model = train(&train_set, hp)?;
        let mut hits = [0usize; 3];
        let mut seen = [0usize; 3];
        let mut correct = 0;
        for &i in test {
            let s = &samples[i];
            let pred = model.predict(&s.features)?;
            seen[s.class.index()] += 1;
            if pred.class == s.class {
                hits[s.class.index()] += 1;
                correct += 1;
            }
        }
        fold_acc.push(correct as f64 / test.len() as f64);
        for c in 0..3 {
            if seen[c] > 0 {
                class_acc[c].push(hits[c] as f64 / seen[c] as f64);
            }
        }
        correct_total += correct;
        total += test.len();
    }
    Ok(CvReport {
        hyperparams: *hp,
        folds,
        fold_sizes: parts.iter().map(Vec::len).collect(),
        accuracy: mean_std(&fold_acc),
        per_class: class_acc.iter().map(|v| mean_std(v)).collect(),
        pooled_accuracy: correct_total as f64 / total as f64,
    })
}

/// Hyperparameter grid; the default spans C in 10^-1..10^3 and gamma in 2^-6..2^2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            c: (-1..=3).map(|e| 10f64.powi(e)).collect(),
            gamma: (-6..=2).map(|e| 2f64.powi(e)).collect(),
        }
    }
}

/// Picks the grid point with the best mean CV accuracy (first one on ties).
pub fn grid_search(
    samples: &[LabeledSample],
    grid: &Grid,
    folds: usize,
    seed: u64,
) -> Result<(Hyperparams, Vec<CvReport>)> {
    let mut reports = Vec::new();
    let mut best: Option<(f64, Hyperparams)> = None;
    for &c in &grid.c {
        for &gamma in &grid.gamma {
            let hp = Hyperparams { c, gamma };
            let rep = cross_validate(samples, &hp, folds, seed)?;
            if best.is_none_or(|(acc, _)| rep.accuracy.mean > acc) {
                best = Some((rep.accuracy.mean, hp));
            }
            reports.push(rep);
        }
    }
    let (_, hp) = best.ok_or_else(|| Error::arg("empty hyperparameter grid"))?;
    Ok((hp, reports))
}
