//! Correlation, classification and ordinal error metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(x: &[f64], y: &[f64], min_len: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < min_len {
        return Err(Error::TooFewSamples {
            required: min_len,
            actual: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("metric inputs must be finite".into()));
    }
    Ok(())
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation of a constant sequence".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank-order correlation.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 3)?;
    pearson_unchecked(&average_ranks(x), &average_ranks(y))
}

/// Pearson linear correlation.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 3)?;
    pearson_unchecked(x, y)
}

pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 1)?;
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / x.len() as f64).sqrt())
}

/// Binary confusion counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn new(tp: usize, tn: usize, fp: usize, fn_: usize) -> Self {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    pub fn from_labels(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        let mut c = ConfusionCounts::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t > 0, p > 0) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }
}

/// `(TP + TN) / (P + N)`.
pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    if c.total() == 0 {
        return Err(Error::Validation("accuracy of an empty prediction set".into()));
    }
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

/// Mean of the two per-class recalls.
pub fn balanced_accuracy(c: &ConfusionCounts) -> Result<f64> {
    if c.positives() == 0 || c.negatives() == 0 {
        return Err(Error::Degenerate(
            "balanced accuracy needs both classes in the ground truth".into(),
        ));
    }
    // single rounding of (tp N + tn P) / 2PN
    let (p, n) = (c.positives() as u128, c.negatives() as u128);
    let num = c.tp as u128 * n + c.tn as u128 * p;
    Ok(num as f64 / (2 * p * n) as f64)
}

fn check_labels(predicted: &[usize], truth: &[usize]) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Validation("empty prediction set".into()));
    }
    Ok(())
}

/// Fraction of exact matches, for any number of classes.
pub fn label_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    check_labels(predicted, truth)?;
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean zero-one error, defined as `1 - accuracy` on the same predictions.
pub fn mze(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    Ok(1.0 - label_accuracy(predicted, truth)?)
}

/// Mean absolute rank difference. Class indices and 1-based ranks give the same value.
pub fn mae_ordinal(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    check_labels(predicted, truth)?;
    let total: usize = predicted.iter().zip(truth).map(|(&p, &t)| p.abs_diff(t)).sum();
    Ok(total as f64 / truth.len() as f64)
}

/// Four-parameter logistic `b2 + (b1 - b2) / (1 + exp(-(x - b3) / |b4|))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Logistic4(pub [f64; 4]);

impl Logistic4 {
    pub fn eval(&self, x: f64) -> f64 {
        let [b1, b2, b3, b4] = self.0;
        b2 + (b1 - b2) / (1.0 + (-(x - b3) / b4.abs().max(1e-12)).exp())
    }

    fn sse(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(a, b)| (self.eval(*a) - b).powi(2)).sum()
    }

    /// Least-squares fit of `y ~ f(x)` by Levenberg-Marquardt.
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self> {
        check_pair(x, y, 4)?;
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let sx = (x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n).sqrt();
        if sx == 0.0 {
            return Err(Error::Degenerate("logistic fit on constant predictions".into()));
        }
        let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
        let mut model = Logistic4([ymax, ymin, mx, sx]);
        let mut sse = model.sse(x, y);
        let mut lambda = 1e-3;
        for _ in 0..500 {
            let mut jtj = [[0.0; 4]; 4];
            let mut jtr = [0.0; 4];
            for (&xi, &yi) in x.iter().zip(y) {
                let r = yi - model.eval(xi);
                let mut g = [0.0; 4];
                for (k, gk) in g.iter_mut().enumerate() {
                    let h = 1e-6 * model.0[k].abs().max(1e-3);
                    let mut up = model;
                    up.0[k] += h;
                    let mut down = model;
                    down.0[k] -= h;
                    *gk = (up.eval(xi) - down.eval(xi)) / (2.0 * h);
                }
                for a in 0..4 {
                    jtr[a] += g[a] * r;
                    for b in 0..4 {
                        jtj[a][b] += g[a] * g[b];
                    }
                }
            }
            let mut improved = false;
            while lambda < 1e12 {
                let mut m = jtj;
                for (a, row) in m.iter_mut().enumerate() {
                    row[a] += lambda * (jtj[a][a] + 1e-12);
                }
                let Some(step) = solve4(m, jtr) else {
                    lambda *= 10.0;
                    continue;
                };
                let mut trial = model;
                trial.0.iter_mut().zip(step).for_each(|(p, s)| *p += s);
                let trial_sse = trial.sse(x, y);
                if trial_sse.is_finite() && trial_sse < sse {
                    let rel = (sse - trial_sse) / sse.max(f64::MIN_POSITIVE);
                    model = trial;
                    sse = trial_sse;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = rel > 1e-12;
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        Ok(model)
    }
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut out = [0.0; 4];
    for row in (0..4).rev() {
        let tail: f64 = (row + 1..4).map(|k| a[row][k] * out[k]).sum();
        out[row] = (b[row] - tail) / a[row][row];
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// PLCC after mapping `predicted` through a logistic fitted to `truth`.
pub fn plcc_logistic(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    let f = Logistic4::fit(predicted, truth)?;
    let mapped: Vec<f64> = predicted.iter().map(|&v| f.eval(v)).collect();
    plcc(&mapped, truth)
}
