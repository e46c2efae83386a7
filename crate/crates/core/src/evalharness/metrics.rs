//! Pixel-level confusion counts, rates and ROC curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = ConfusionCounts>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), |a, b| a + b)
    }
}

/// Tallies `pred` against `truth`, optionally only over pixels set in `universe`.
pub fn confusion(pred: &BinaryMask, truth: &BinaryMask, universe: Option<&BinaryMask>) -> Result<ConfusionCounts> {
    if !pred.same_dims(truth) || universe.is_some_and(|u| !u.same_dims(truth)) {
        return Err(Error::arg("prediction, truth and universe masks differ in size"));
    }
    let mut c = ConfusionCounts::default();
    for (i, (&p, &t)) in pred.bits().iter().zip(truth.bits()).enumerate() {
        if universe.is_some_and(|u| !u.bits()[i]) {
            continue;
        }
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Sensitivity, precision ("prediction"), specificity and accuracy.
/// A rate whose denominator is zero is undefined (`None`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub se: Option<f64>,
    pub pred: Option<f64>,
    pub sp: Option<f64>,
    pub ac: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn rates(c: &ConfusionCounts) -> Rates {
    Rates {
        se: ratio(c.tp, c.tp + c.fn_),
        pred: ratio(c.tp, c.tp + c.fp),
        sp: ratio(c.tn, c.tn + c.fp),
        ac: ratio(c.tp + c.tn, c.total()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Operating parameter: a score threshold or a detector setting.
    pub threshold: f64,
    pub se: f64,
    /// `1 - SP`.
    pub fpr: f64,
    /// Precision; undefined when nothing is predicted positive.
    pub pred: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Ordered by rising false-positive rate, from `(0, 0)` to `(1, 1)`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn point(threshold: f64, c: &ConfusionCounts) -> RocPoint {
    RocPoint {
        threshold,
        se: c.tp as f64 / (c.tp + c.fn_) as f64,
        fpr: c.fp as f64 / (c.fp + c.tn) as f64,
        pred: ratio(c.tp, c.tp + c.fp),
    }
}

fn trapezoid(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].se + w[0].se) / 2.0)
        .sum()
}

fn check_scores(scores: &[f64], truth: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != truth.len() {
        return Err(Error::arg("scores and labels differ in length"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::arg("scores must be finite"));
    }
    let pos = truth.iter().filter(|&&t| t).count() as u64;
    let neg = truth.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::arg("ROC needs both positive and negative samples"));
    }
    Ok((pos, neg))
}

/// Exact ROC: one point per distinct score, predicting positive at `score >= threshold`.
pub fn roc_exact(scores: &[f64], truth: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = check_scores(scores, truth)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut c = ConfusionCounts {
        tp: 0,
        fp: 0,
        fn_: pos,
        tn: neg,
    };
    let mut points = vec![point(f64::INFINITY, &c)];
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                c.tp += 1;
                c.fn_ -= 1;
            } else {
                c.fp += 1;
                c.tn -= 1;
            }
            i += 1;
        }
        points.push(point(s, &c));
    }
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc })
}

/// ROC at the given thresholds only, closed with the `(0, 0)` and `(1, 1)` corners.
pub fn roc_sweep(scores: &[f64], truth: &[bool], thresholds: &[f64]) -> Result<RocCurve> {
    let (pos, neg) = check_scores(scores, truth)?;
    let mut ts: Vec<f64> = thresholds.to_vec();
    ts.sort_by(|a, b| b.total_cmp(a));
    let mut points = vec![point(
        f64::INFINITY,
        &ConfusionCounts {
            tp: 0,
            fp: 0,
            fn_: pos,
            tn: neg,
        },
    )];
    for t in ts {
        let mut c = ConfusionCounts::default();
        for (&s, &y) in scores.iter().zip(truth) {
            match (s >= t, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        points.push(point(t, &c));
    }
    points.push(point(
        f64::NEG_INFINITY,
        &ConfusionCounts {
            tp: pos,
            fp: neg,
            fn_: 0,
            tn: 0,
        },
    ));
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc })
}

/// ROC from detector runs at several operating parameters, each summarized by
/// its confusion counts. Points are ordered by false-positive rate.
pub fn roc_from_counts(runs: &[(f64, ConfusionCounts)]) -> Result<RocCurve> {
    let first = runs.first().ok_or_else(|| Error::arg("no operating points"))?.1;
    let (pos, neg) = (first.tp + first.fn_, first.fp + first.tn);
    if pos == 0 || neg == 0 {
        return Err(Error::arg("ROC needs both positive and negative pixels"));
    }
    if runs.iter().any(|(_, c)| c.tp + c.fn_ != pos || c.fp + c.tn != neg) {
        return Err(Error::arg("operating points were evaluated on different pixel sets"));
    }
    let mut points: Vec<RocPoint> = runs.iter().map(|(t, c)| point(*t, c)).collect();
    points.push(point(
        f64::INFINITY,
        &ConfusionCounts {
            tp: 0,
            fp: 0,
            fn_: pos,
            tn: neg,
        },
    ));
    points.push(point(
        f64::NEG_INFINITY,
        &ConfusionCounts {
            tp: pos,
            fp: neg,
            fn_: 0,
            tn: 0,
        },
    ));
    points.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.se.total_cmp(&b.se)));
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc })
}
