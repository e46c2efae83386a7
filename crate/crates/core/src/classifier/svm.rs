//! Kernel SVM trained by sequential minimal optimization.
//!
//! Each binary machine solves the standard C-SVC dual
//! `min 1/2 a'Qa - e'a, 0 <= a <= C, y'a = 0` with second-order working-set
//! selection. Multi-class prediction is one-vs-one voting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

/// Default stopping tolerance on the maximal KKT violation.
pub const KKT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExudateClass {
    Hard,
    Soft,
    Outlier,
}

impl ExudateClass {
    pub const ALL: [ExudateClass; 3] = [ExudateClass::Hard, ExudateClass::Soft, ExudateClass::Outlier];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Box constraint.
    pub c: f64,
    /// RBF width in `exp(-gamma |x - z|^2)`.
    pub gamma: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { c: 10.0, gamma: 0.125 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub class: ExudateClass,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, class: ExudateClass) -> Self {
        Self { features, class }
    }
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Dual solution of one binary problem.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Decision offset: `f(x) = sum a_i y_i K(x_i, x) - rho`.
    pub rho: f64,
    pub iterations: usize,
}

/// Solves the binary dual for labels `y` in {+1, -1} with a precomputed kernel matrix.
pub fn smo_solve(kernel: &[Vec<f64>], y: &[f64], c: f64, tol: f64, max_iter: usize) -> SmoSolution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i][j];
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    while iterations < max_iter {
        // i: maximal violator in the up set
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        // j: second-order choice in the low set
        let mut gmin = f64::INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                if !low(alpha[t], y[t]) {
                    continue;
                }
                let v = -y[t] * grad[t];
                gmin = gmin.min(v);
                let b = gmax - v;
                if b > 0.0 {
                    let mut a = kernel[i][i] + kernel[t][t] - 2.0 * kernel[i][t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -(b * b) / a;
                    if obj < best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gmax - gmin >= tol => (i, j),
            _ => break,
        };
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = kernel[i][i] + kernel[j][j] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = kernel[i][i] + kernel[j][j] - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(i, t) * di + q(j, t) * dj;
        }
    }

    // offset: average over free vectors, midpoint of the feasible interval otherwise
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else {
        (ub + lb) / 2.0
    };
    SmoSolution { alpha, rho, iterations }
}

/// One pairwise machine: `positive` is predicted when the decision value is > 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub positive: ExudateClass,
    pub negative: ExudateClass,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
}

impl BinaryMachine {
    /// Decision value on already-normalized input.
    pub fn decision(&self, x: &[f64], gamma: f64) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, a)| a * rbf(sv, x, gamma))
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNorm {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub version: u32,
    pub hyperparams: Hyperparams,
    pub classes: Vec<ExudateClass>,
    pub feature_norm: FeatureNorm,
    pub machines: Vec<BinaryMachine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: ExudateClass,
    /// Votes per class in [`ExudateClass::ALL`] order.
    pub votes: [u32; 3],
    /// Summed absolute decision values of won duels, same order.
    pub margins: [f64; 3],
}

fn check_samples(samples: &[LabeledSample]) -> Result<usize> {
    let first = samples.first().ok_or_else(|| Error::arg("no training samples"))?;
    let dim = first.features.len();
    if dim == 0 {
        return Err(Error::arg("samples have no features"));
    }
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::arg("samples differ in dimension"));
        }
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("non-finite feature in training data"));
        }
    }
    Ok(dim)
}

/// Trains a one-vs-one RBF machine for every pair of classes present.
pub fn train(samples: &[LabeledSample], hp: &Hyperparams) -> Result<SvmModel> {
    check_samples(samples)?;
    if !(hp.c > 0.0) || !(hp.gamma > 0.0) {
        return Err(Error::arg("C and gamma must be positive"));
    }
    let mut classes: Vec<ExudateClass> = samples.iter().map(|s| s.class).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::arg("training needs at least two classes"));
    }
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
    let norm = FeatureNorm::fit(&rows);
    let z: Vec<Vec<f64>> = rows.iter().map(|r| norm.apply(r)).collect();

    let mut machines = Vec::new();
    for (a, &pos) in classes.iter().enumerate() {
        for &neg in &classes[a + 1..] {
            let idx: Vec<usize> = (0..samples.len())
                .filter(|&i| samples[i].class == pos || samples[i].class == neg)
                .collect();
            let y: Vec<f64> = idx
                .iter()
                .map(|&i| if samples[i].class == pos { 1.0 } else { -1.0 })
                .collect();
            let kernel: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| idx.iter().map(|&j| rbf(&z[i], &z[j], hp.gamma)).collect())
                .collect();
            let sol = smo_solve(&kernel, &y, hp.c, KKT_TOL, 100_000 + 100 * idx.len());
            let mut svs = Vec::new();
            let mut coef = Vec::new();
            for (k, &i) in idx.iter().enumerate() {
                if sol.alpha[k] > 0.0 {
                    svs.push(z[i].clone());
                    coef.push(sol.alpha[k] * y[k]);
                }
            }
            machines.push(BinaryMachine {
                positive: pos,
                negative: neg,
                support_vectors: svs,
                dual_coef: coef,
                bias: -sol.rho,
            });
        }
    }
    Ok(SvmModel {
        version: MODEL_VERSION,
        hyperparams: *hp,
        classes,
        feature_norm: norm,
        machines,
    })
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.feature_norm.mean.len()
    }

    /// Decision values of every machine for a raw (unnormalized) input.
    pub fn decisions(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.dim() {
            return Err(Error::arg(format!(
                "expected {} features, got {}",
                self.dim(),
                features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("non-finite feature"));
        }
        let z = self.feature_norm.apply(features);
        Ok(self
            .machines
            .iter()
            .map(|m| m.decision(&z, self.hyperparams.gamma))
            .collect())
    }

    pub fn predict(&self, features: &[f64]) -> Result<Prediction> {
        let dec = self.decisions(features)?;
        let mut votes = [0u32; 3];
        let mut margins = [0.0f64; 3];
        for (m, d) in self.machines.iter().zip(dec) {
            let winner = if d > 0.0 { m.positive } else { m.negative };
            votes[winner.index()] += 1;
            margins[winner.index()] += d.abs();
        }
        let mut best = self.classes[0];
        for &c in &self.classes[1..] {
            let (vc, vb) = (votes[c.index()], votes[best.index()]);
            if vc > vb || (vc == vb && margins[c.index()] > margins[best.index()]) {
                best = c;
            }
        }
        Ok(Prediction {
            class: best,
            votes,
            margins,
        })
    }

    /// Largest KKT violation of any machine over the samples it was trained on.
    pub fn kkt_residual(&self, samples: &[LabeledSample]) -> f64 {
        let mut worst: f64 = 0.0;
        for m in &self.machines {
            for s in samples
                .iter()
                .filter(|s| s.class == m.positive || s.class == m.negative)
            {
                let z = self.feature_norm.apply(&s.features);
                let y = if s.class == m.positive { 1.0 } else { -1.0 };
                let yf = y * m.decision(&z, self.hyperparams.gamma);
                let alpha = m
                    .support_vectors
                    .iter()
                    .position(|sv| *sv == z)
                    .map(|k| m.dual_coef[k].abs())
                    .unwrap_or(0.0);
                let c = self.hyperparams.c;
                let v = if alpha <= 0.0 {
                    (1.0 - yf).max(0.0)
                } else if alpha >= c {
                    (yf - 1.0).max(0.0)
                } else {
                    (yf - 1.0).abs()
                };
                worst = worst.max(v);
            }
        }
        worst
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Model(format!("corrupt model file: {e}")))?;
        match v.get("version").and_then(|x| x.as_u64()) {
            Some(ver) if ver == u64::from(MODEL_VERSION) => {}
            Some(ver) => {
                return Err(Error::Model(format!(
                    "model version {ver} not supported (expected {MODEL_VERSION})"
                )))
            }
            None => return Err(Error::Model("model file has no version".into())),
        }
        let model: SvmModel =
            serde_json::from_value(v).map_err(|e| Error::Model(format!("corrupt model file: {e}")))?;
        let dim = model.dim();
        if model.feature_norm.std.len() != dim
            || model.machines.iter().any(|m| {
                m.support_vectors.len() != m.dual_coef.len() || m.support_vectors.iter().any(|s| s.len() != dim)
            })
        {
            return Err(Error::Model("inconsistent model dimensions".into()));
        }
        Ok(model)
    }
}

pub fn save_model(model: &SvmModel, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<std::path::Path>) -> Result<SvmModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SvmModel::from_json(&text)
}
