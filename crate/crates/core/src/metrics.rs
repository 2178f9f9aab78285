//! Evaluation: confusion counts, precision/recall/F1, rank-based AUC, the
//! composite selection score, the differentiable threshold agent, PCA
//! projection and silhouette.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::sigmoid_scalar;
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Tallies predictions with the strict rule `prob > tau` => fraud.
pub fn confusion(labels: &[u8], probs: &[f64], tau: f64) -> Result<Confusion> {
    if labels.len() != probs.len() {
        return Err(Error::shape("confusion", labels.len(), probs.len()));
    }
    let mut c = Confusion::default();
    for (&y, &p) in labels.iter().zip(probs) {
        match (y == 1, p > tau) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Precision, recall, F1. Zero denominators yield 0.
pub fn prf(c: &Confusion) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// Model-selection score `0.5 * precision + 0.5 * recall`.
pub fn composite(precision: f64, recall: f64) -> f64 {
    0.5 * precision + 0.5 * recall
}

pub fn composite_weighted(precision: f64, recall: f64, weights: (f64, f64)) -> f64 {
    weights.0 * precision + weights.1 * recall
}

/// Mann-Whitney AUC with mid-ranks for ties.
pub fn auc_roc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::shape("auc_roc", labels.len(), scores.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass("auc_roc"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tie group i..=j shares the mean rank
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc_roc: f64,
    pub composite: f64,
    pub threshold: f64,
}

pub fn evaluate(labels: &[u8], probs: &[f64], tau: f64) -> Result<MetricsReport> {
    let c = confusion(labels, probs, tau)?;
    let (precision, recall, f1) = prf(&c);
    Ok(MetricsReport {
        tp: c.tp,
        fp: c.fp,
        tn: c.tn,
        fn_: c.fn_,
        precision,
        recall,
        f1,
        auc_roc: auc_roc(labels, probs)?,
        composite: composite(precision, recall),
        threshold: tau,
    })
}

/// Learns a decision threshold `tau = sigmoid(theta)` by gradient descent on
/// the mean squared error of soft predictions `sigmoid(sharpness * (p - tau))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAgent {
    pub theta: f64,
    pub sharpness: f64,
    pub lr: f64,
    pub steps: usize,
}

impl Default for ThresholdAgent {
    fn default() -> Self {
        Self {
            theta: 0.0,
            sharpness: 50.0,
            lr: 0.05,
            steps: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdFit {
    pub tau: f64,
    pub f1: f64,
    /// Threshold reached by the last descent step.
    pub final_tau: f64,
}

impl ThresholdAgent {
    pub fn tau(&self) -> f64 {
        sigmoid_scalar(self.theta)
    }

    /// Surrogate loss and its derivative w.r.t. `theta`.
    pub fn loss_and_grad(&self, probs: &[f64], labels: &[u8]) -> (f64, f64) {
        let tau = self.tau();
        let n = probs.len().max(1) as f64;
        let mut loss = 0.0;
        let mut dtau = 0.0;
        for (&p, &y) in probs.iter().zip(labels) {
            let s = sigmoid_scalar(self.sharpness * (p - tau));
            let e = s - f64::from(y);
            loss += e * e;
            dtau += 2.0 * e * s * (1.0 - s) * -self.sharpness;
        }
        (loss / n, dtau / n * tau * (1.0 - tau))
    }

    /// Runs the descent and returns the visited threshold with the best F1
    /// (latest wins on ties).
    pub fn fit(&mut self, probs: &[f64], labels: &[u8]) -> Result<ThresholdFit> {
        if probs.len() != labels.len() {
            return Err(Error::shape("fit_threshold", labels.len(), probs.len()));
        }
        let (n0, n1) = labels.iter().fold((0, 0), |(a, b), &l| if l == 1 { (a, b + 1) } else { (a + 1, b) });
        if n0 == 0 || n1 == 0 {
            return Err(Error::SingleClass("fit_threshold"));
        }
        if probs.iter().all(|&p| p == probs[0]) {
            log::warn!("threshold agent: all probabilities are equal, falling back to 0.5");
            return Ok(ThresholdFit {
                tau: 0.5,
                f1: prf(&confusion(labels, probs, 0.5)?).2,
                final_tau: 0.5,
            });
        }
        let f1_at = |tau: f64| -> Result<f64> { Ok(prf(&confusion(labels, probs, tau)?).2) };
        let mut best = ThresholdFit {
            tau: self.tau(),
            f1: f1_at(self.tau())?,
            final_tau: self.tau(),
        };
        for _ in 0..self.steps {
            let (_, g) = self.loss_and_grad(probs, labels);
            self.theta -= self.lr * g;
            let tau = self.tau();
            let f1 = f1_at(tau)?;
            if f1 >= best.f1 {
                best.tau = tau;
                best.f1 = f1;
            }
        }
        best.final_tau = self.tau();
        Ok(best)
    }
}

pub fn fit_threshold(agent: &mut ThresholdAgent, probs: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(agent.fit(probs, labels)?.tau)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub coords: Matrix,
    pub explained_ratio: Vec<f64>,
    /// One principal axis per row.
    pub components: Matrix,
    pub mean: Vec<f64>,
}

/// Projects mean-centred rows onto the leading eigenvectors of the sample
/// covariance, found by power iteration with deflation. Each axis is signed
/// so its largest-magnitude loading is positive. Requested dimensions beyond
/// the data dimension come back as zero columns with zero explained ratio.
pub fn pca_project(x: &Matrix, dims: usize) -> Result<PcaProjection> {
    let (n, d) = x.shape();
    if dims == 0 || n < dims.min(d).max(1) || n < 2 {
        return Err(Error::TooFewSamples { needed: dims, got: n });
    }
    let mean = x.column_means();
    let mut centred = x.clone();
    for r in 0..n {
        for (v, m) in centred.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = centred.t_matmul(&centred)?;
    cov.as_mut_slice().iter_mut().for_each(|v| *v /= (n - 1) as f64);
    let trace: f64 = (0..d).map(|i| cov.get(i, i)).sum();
    if trace <= 0.0 {
        return Err(Error::ZeroVariance("pca_project"));
    }

    let mut components = Matrix::zeros(dims, d);
    let mut ratios = vec![0.0; dims];
    for (k, ratio) in ratios.iter_mut().enumerate().take(d) {
        let Some((lambda, v)) = leading_eigenpair(&cov) else {
            break;
        };
        *ratio = (lambda / trace).max(0.0);
        components.row_mut(k).copy_from_slice(&v);
        for i in 0..d {
            for j in 0..d {
                let upd = cov.get(i, j) - lambda * v[i] * v[j];
                cov.set(i, j, upd);
            }
        }
    }
    let coords = centred.matmul_t(&components)?;
    Ok(PcaProjection {
        coords,
        explained_ratio: ratios,
        components,
        mean,
    })
}

fn leading_eigenpair(c: &Matrix) -> Option<(f64, Vec<f64>)> {
    let d = c.rows();
    // Start from the covariance column with the largest norm: it lies in the
    // range of `c`, so it is not orthogonal to the dominant eigenvector.
    let start = (0..d)
        .map(|j| (j, (0..d).map(|i| c.get(i, j).powi(2)).sum::<f64>()))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    if start.1 <= 1e-300 {
        return None;
    }
    let mut v: Vec<f64> = (0..d).map(|i| c.get(i, start.0)).collect();
    normalize(&mut v);
    for _ in 0..200_000 {
        let mut w: Vec<f64> = (0..d).map(|i| crate::nn::matrix::dot(c.row(i), &v)).collect();
        if normalize(&mut w) == 0.0 {
            return None;
        }
        let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = w;
        if delta < 1e-14 {
            break;
        }
    }
    let cv: Vec<f64> = (0..d).map(|i| crate::nn::matrix::dot(c.row(i), &v)).collect();
    let lambda = crate::nn::matrix::dot(&v, &cv);
    let pivot = v
        .iter()
        .cloned()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(1.0);
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Some((lambda, v))
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Mean silhouette coefficient (Euclidean) for a binary labelling.
/// Points alone in their cluster score 0.
pub fn silhouette(x: &Matrix, labels: &[u8]) -> Result<f64> {
    if x.rows() != labels.len() {
        return Err(Error::shape("silhouette", x.rows(), labels.len()));
    }
    let counts = [
        labels.iter().filter(|&&l| l == 0).count(),
        labels.iter().filter(|&&l| l == 1).count(),
    ];
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::SingleClass("silhouette"));
    }
    let n = x.rows();
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = [0.0f64; 2];
        let xi = x.row(i);
        for j in 0..n {
            if j != i {
                sums[labels[j] as usize] +=
                    crate::nn::matrix::squared_distance(xi, x.row(j)).sqrt();
            }
        }
        let own = labels[i] as usize;
        if counts[own] == 1 {
            continue;
        }
        let a = sums[own] / (counts[own] - 1) as f64;
        let b = sums[1 - own] / counts[1 - own] as f64;
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_hand_counts() {
        let c = confusion(&[1, 0, 1, 0], &[0.9, 0.8, 0.4, 0.1], 0.5).unwrap();
        assert_eq!(
            c,
            Confusion {
                tp: 1,
                fp: 1,
                tn: 1,
                fn_: 1
            }
        );
        let perfect = confusion(&[1, 0, 1], &[1.0, 0.0, 1.0], 0.5).unwrap();
        assert_eq!((perfect.fp, perfect.fn_), (0, 0));
        let tie = confusion(&[1], &[0.5], 0.5).unwrap();
        assert_eq!(tie.fn_, 1);
        assert!(confusion(&[1], &[0.5, 0.2], 0.5).is_err());
    }

    #[test]
    fn prf_conventions() {
        let perfect = Confusion {
            tp: 3,
            fp: 0,
            tn: 5,
            fn_: 0,
        };
        assert_eq!(prf(&perfect), (1.0, 1.0, 1.0));
        assert_eq!(composite(1.0, 1.0), 1.0);
        assert!((composite(0.9, 0.7) - 0.8).abs() < 1e-15);
        let none = Confusion {
            tp: 0,
            fp: 0,
            tn: 4,
            fn_: 2,
        };
        assert_eq!(prf(&none), (0.0, 0.0, 0.0));
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(auc_roc(&[0, 0, 1, 1], &[0.1, 0.2, 0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0, 1, 0, 1], &[0.3; 4]).unwrap(), 0.5);
        assert!(auc_roc(&[1, 1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn degenerate_threshold_input() {
        let mut agent = ThresholdAgent::default();
        let fit = agent.fit(&[0.3, 0.3, 0.3], &[0, 1, 0]).unwrap();
        assert_eq!(fit.tau, 0.5);
    }

    #[test]
    fn threshold_on_exact_labels() {
        let mut agent = ThresholdAgent::default();
        let fit = agent.fit(&[0.0, 1.0, 0.0, 1.0], &[0, 1, 0, 1]).unwrap();
        assert!(fit.tau > 0.0 && fit.tau < 1.0);
        assert_eq!(fit.f1, 1.0);
    }

    #[test]
    fn pca_rank_one_line() {
        let rows: Vec<[f64; 2]> = (0..50).map(|i| [i as f64, 2.0 * i as f64 + 1.0]).collect();
        let p = pca_project(&Matrix::from_rows(&rows).unwrap(), 2).unwrap();
        assert!(p.explained_ratio[0] >= 0.999);
        assert!(p.components.get(0, 1) > 0.0);
    }

    #[test]
    fn pca_errors() {
        assert!(matches!(
            pca_project(&Matrix::filled(5, 2, 3.0), 2),
            Err(Error::ZeroVariance(_))
        ));
        assert!(pca_project(&Matrix::zeros(1, 2), 2).is_err());
    }

    #[test]
    fn silhouette_separated_clusters() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let e = i as f64 * 1e-3;
            rows.push([e, -e]);
            labels.push(0);
            rows.push([100.0 + e, 100.0]);
            labels.push(1);
        }
        let s = silhouette(&Matrix::from_rows(&rows).unwrap(), &labels).unwrap();
        assert!(s > 0.9);
        assert!(silhouette(&Matrix::zeros(3, 2), &[0, 0, 0]).is_err());
    }
}
