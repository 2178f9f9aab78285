//! Scalar losses. Each returns the batch-mean value together with the
//! gradient with respect to its prediction argument(s).

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Probability clipping applied before every logarithm.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalConfig {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.95,
            gamma: 2.0,
        }
    }
}

impl FocalConfig {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || gamma < 0.0 || !gamma.is_finite() {
            return Err(Error::Config(format!(
                "focal loss needs alpha in [0,1] and gamma >= 0, got alpha={alpha} gamma={gamma}"
            )));
        }
        Ok(Self { alpha, gamma })
    }
}

/// Classification loss selector shared by every binary head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassLoss {
    Bce,
    Focal(FocalConfig),
}

impl ClassLoss {
    pub fn evaluate(&self, y: &[f64], p: &[f64]) -> Result<LossGrad> {
        match self {
            ClassLoss::Bce => bce(y, p),
            ClassLoss::Focal(cfg) => focal(cfg, y, p),
        }
    }
}

fn check_len(context: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(context, a, b));
    }
    Ok(())
}

/// Clipped probability and whether the clip was inactive (gradient passes).
#[inline]
fn clip(p: f64) -> (f64, bool) {
    if p < PROB_EPS {
        (PROB_EPS, false)
    } else if p > 1.0 - PROB_EPS {
        (1.0 - PROB_EPS, false)
    } else {
        (p, true)
    }
}

/// Mean squared error over every element; gradient is w.r.t. `rec`.
pub fn mse(target: &Matrix, rec: &Matrix) -> Result<(f64, Matrix)> {
    if target.shape() != rec.shape() {
        return Err(Error::shape(
            "mse",
            format!("{:?}", target.shape()),
            format!("{:?}", rec.shape()),
        ));
    }
    let n = target.as_slice().len().max(1) as f64;
    let value = target
        .as_slice()
        .iter()
        .zip(rec.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let grad = rec.zip_map(target, |r, t| 2.0 * (r - t) / n)?;
    Ok((value, grad))
}

pub fn bce(y: &[f64], p: &[f64]) -> Result<LossGrad> {
    check_len("bce", y.len(), p.len())?;
    let n = y.len().max(1) as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(y.len());
    for (&t, &q) in y.iter().zip(p) {
        let (q, live) = clip(q);
        value += -t * q.ln() - (1.0 - t) * (1.0 - q).ln();
        grad.push(if live {
            (-t / q + (1.0 - t) / (1.0 - q)) / n
        } else {
            0.0
        });
    }
    Ok(LossGrad {
        value: value / n,
        grad,
    })
}

/// Class-weighted focal loss, mean over the batch.
pub fn focal(cfg: &FocalConfig, y: &[f64], p: &[f64]) -> Result<LossGrad> {
    check_len("focal", y.len(), p.len())?;
    let n = y.len().max(1) as f64;
    let (a, g) = (cfg.alpha, cfg.gamma);
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(y.len());
    for (&t, &q) in y.iter().zip(p) {
        let (q, live) = clip(q);
        let (lq, lnq) = (q.ln(), (1.0 - q).ln());
        let pos_w = (1.0 - q).powf(g);
        let neg_w = q.powf(g);
        value += -a * pos_w * t * lq - (1.0 - a) * neg_w * (1.0 - t) * lnq;
        if !live {
            grad.push(0.0);
            continue;
        }
        // d/dq of the positive and negative terms
        let dpos_w = if g == 0.0 { 0.0 } else { -g * (1.0 - q).powf(g - 1.0) };
        let dneg_w = if g == 0.0 { 0.0 } else { g * q.powf(g - 1.0) };
        let d_pos = -a * t * (dpos_w * lq + pos_w / q);
        let d_neg = -(1.0 - a) * (1.0 - t) * (dneg_w * lnq - neg_w / (1.0 - q));
        grad.push((d_pos + d_neg) / n);
    }
    Ok(LossGrad {
        value: value / n,
        grad,
    })
}

/// Closed-form KL of `N(mu, exp(logvar))` against `N(0, I)`, summed over latent
/// dimensions and averaged over the batch. Returns `(value, d/dmu, d/dlogvar)`.
pub fn kl_divergence(mu: &Matrix, logvar: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    if mu.shape() != logvar.shape() {
        return Err(Error::shape(
            "kl_divergence",
            format!("{:?}", mu.shape()),
            format!("{:?}", logvar.shape()),
        ));
    }
    let n = mu.rows().max(1) as f64;
    let value = mu
        .as_slice()
        .iter()
        .zip(logvar.as_slice())
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - lv - 1.0))
        .sum::<f64>()
        / n;
    let dmu = mu.map(|m| m / n);
    let dlv = logvar.map(|lv| 0.5 * (lv.exp() - 1.0) / n);
    Ok((value, dmu, dlv))
}

/// Discriminator objective `-mean log(real) - mean log(1 - fake)`.
/// Returns the value and gradients w.r.t. the real and fake probabilities.
pub fn discriminator_loss(real: &[f64], fake: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let nr = real.len().max(1) as f64;
    let nf = fake.len().max(1) as f64;
    let mut value = 0.0;
    let mut g_real = Vec::with_capacity(real.len());
    for &r in real {
        let (r, live) = clip(r);
        value -= r.ln() / nr;
        g_real.push(if live { -1.0 / (r * nr) } else { 0.0 });
    }
    let mut g_fake = Vec::with_capacity(fake.len());
    for &f in fake {
        let (f, live) = clip(f);
        value -= (1.0 - f).ln() / nf;
        g_fake.push(if live { 1.0 / ((1.0 - f) * nf) } else { 0.0 });
    }
    (value, g_real, g_fake)
}

/// Generator adversarial objective `-mean log(fake)`.
pub fn generator_adv_loss(fake: &[f64]) -> LossGrad {
    let n = fake.len().max(1) as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(fake.len());
    for &f in fake {
        let (f, live) = clip(f);
        value -= f.ln() / n;
        grad.push(if live { -1.0 / (f * n) } else { 0.0 });
    }
    LossGrad { value, grad }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_hand_values() {
        let z = Matrix::zeros(3, 2);
        assert_eq!(kl_divergence(&z, &z).unwrap().0, 0.0);
        let mu = Matrix::column(&[1.0]);
        let lv = Matrix::column(&[0.0]);
        assert!((kl_divergence(&mu, &lv).unwrap().0 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bce_perfect_prediction_is_zero() {
        let l = bce(&[1.0], &[1.0 - PROB_EPS]).unwrap();
        assert!(l.value.abs() < 1e-6);
    }

    #[test]
    fn focal_direct_evaluation() {
        let cfg = FocalConfig::default();
        let l = focal(&cfg, &[1.0], &[0.9]).unwrap();
        let expected = 0.95 * 0.1f64.powi(2) * -(0.9f64.ln());
        assert!((l.value - expected).abs() < 1e-15);
    }

    #[test]
    fn focal_decreases_with_gamma_on_easy_batch() {
        let y = [1.0, 1.0, 0.0];
        let p = [0.9, 0.9, 0.1];
        let mut prev = f64::INFINITY;
        for g in [0.0, 0.5, 1.0, 2.0, 5.0] {
            let v = focal(&FocalConfig::new(0.95, g).unwrap(), &y, &p).unwrap().value;
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn gan_losses_symmetric_cases() {
        let (d, _, _) = discriminator_loss(&[0.5, 0.5], &[0.5]);
        assert!((d - 2.0 * 2f64.ln()).abs() < 1e-12);
        let g = generator_adv_loss(&[0.5, 0.5]);
        assert!((g.value - 2f64.ln()).abs() < 1e-9);
        let (d, _, _) = discriminator_loss(&[1.0 - PROB_EPS], &[PROB_EPS]);
        assert!(d.abs() < 1e-6);
    }

    #[test]
    fn focal_config_bounds() {
        assert!(FocalConfig::new(1.2, 2.0).is_err());
        assert!(FocalConfig::new(0.5, -1.0).is_err());
    }

    #[test]
    fn length_mismatch() {
        assert!(bce(&[1.0], &[0.5, 0.5]).is_err());
        assert!(mse(&Matrix::zeros(1, 2), &Matrix::zeros(2, 1)).is_err());
    }
}
