//! Developer gradient-check suite: every layer, loss and composite path
//! against central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cpac::{CpacConfig, CpacParams};
use crate::error::Result;
use crate::heads::{MlpHead, MlpVariant};
use crate::nn::gradcheck::{grad_check, grad_check_params, GradCheckReport};
use crate::nn::layers::{prefixed, ParamMut, Trainable};
use crate::nn::loss::{bce, discriminator_loss, focal, generator_adv_loss, kl_divergence, mse};
use crate::nn::{BatchNorm, ClassLoss, Dense, Dropout, FocalConfig, Layer, Matrix, Mode, Sequential};
use crate::vaegan::{VaeGan, VaeGanConfig};

pub const SUITE_TOLERANCE: f64 = 1e-4;

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::new(rows, cols, data).expect("sized above")
}

fn reseed_dropouts(net: &mut Sequential, seed: u64) {
    for l in &mut net.layers {
        if let Layer::Dropout(d) = l {
            d.reseed(seed);
        }
    }
}

/// Checks parameters and inputs of `net` under the linear probe loss
/// `sum(net(x) * probe)`.
fn check_net(name: &str, mut net: Sequential, x: &Matrix, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Vec<GradCheckReport>> {
    let out_dim = net.out_dim().unwrap_or(x.cols());
    let probe = uniform(rng, x.rows(), out_dim, -1.0, 1.0);
    let dot = |a: &Matrix| a.as_slice().iter().zip(probe.as_slice()).map(|(u, v)| u * v).sum::<f64>();

    let params = grad_check_params(
        &format!("{name} params"),
        &mut net,
        |m, backward| {
            reseed_dropouts(m, 17);
            let y = m.forward(x, mode)?;
            if backward {
                m.backward(&probe)?;
            }
            Ok(dot(&y))
        },
        SUITE_TOLERANCE,
    )?;

    reseed_dropouts(&mut net, 17);
    net.forward(x, mode)?;
    let dx = net.backward(&probe)?;
    net.zero_grad();
    let (r, c) = x.shape();
    let inputs = grad_check(
        &format!("{name} input"),
        x.as_slice(),
        |v| {
            reseed_dropouts(&mut net, 17);
            let xm = Matrix::new(r, c, v.to_vec()).expect("same shape");
            net.forward(&xm, mode).map(|y| dot(&y)).unwrap_or(f64::NAN)
        },
        dx.as_slice(),
        SUITE_TOLERANCE,
    )?;
    Ok(vec![params, inputs])
}

struct EncoderDecoder<'a>(&'a mut VaeGan);

impl Trainable for EncoderDecoder<'_> {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let m = &mut *self.0;
        let mut out = prefixed("encoder", m.encoder.params_mut());
        out.extend(prefixed("decoder", m.decoder.params_mut()));
        out
    }
}

fn probs_and_labels(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let p = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
    let y = (0..n).map(|i| (i % 3 == 0) as u8 as f64).collect();
    (p, y)
}

/// Runs every check; each report carries its own pass flag.
pub fn run_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    let x = uniform(&mut rng, 6, 4, -2.0, 2.0);

    let dense = Sequential::new(vec![Layer::Dense(Dense::new(4, 3, &mut rng))]);
    reports.extend(check_net("dense", dense, &x, Mode::Train, &mut rng)?);
    let relu = Sequential::new(vec![
        Layer::Dense(Dense::new(4, 5, &mut rng)),
        Layer::relu(),
        Layer::Dense(Dense::new(5, 2, &mut rng)),
    ]);
    reports.extend(check_net("relu", relu, &x, Mode::Train, &mut rng)?);
    let sig = Sequential::new(vec![Layer::Dense(Dense::new(4, 3, &mut rng)), Layer::sigmoid()]);
    reports.extend(check_net("sigmoid", sig, &x, Mode::Train, &mut rng)?);
    let bn = Sequential::new(vec![
        Layer::Dense(Dense::new(4, 3, &mut rng)),
        Layer::BatchNorm(BatchNorm::new(3)),
    ]);
    reports.extend(check_net("batchnorm", bn, &x, Mode::Train, &mut rng)?);
    let drop = Sequential::new(vec![
        Layer::Dense(Dense::new(4, 5, &mut rng)),
        Layer::Dropout(Dropout::new(0.3, 1)),
    ]);
    reports.extend(check_net("dropout", drop, &x, Mode::Train, &mut rng)?);

    let (p, y) = probs_and_labels(&mut rng, 12);
    reports.push(grad_check("bce", &p, |v| bce(&y, v).map(|l| l.value).unwrap_or(f64::NAN), &bce(&y, &p)?.grad, SUITE_TOLERANCE)?);
    for cfg in [FocalConfig::default(), FocalConfig::new(0.25, 0.5)?] {
        reports.push(grad_check(
            &format!("focal(alpha={}, gamma={})", cfg.alpha, cfg.gamma),
            &p,
            |v| focal(&cfg, &y, v).map(|l| l.value).unwrap_or(f64::NAN),
            &focal(&cfg, &y, &p)?.grad,
            SUITE_TOLERANCE,
        )?);
    }
    let target = uniform(&mut rng, 5, 3, -1.0, 1.0);
    let rec = uniform(&mut rng, 5, 3, -1.0, 1.0);
    let (_, drec) = mse(&target, &rec)?;
    reports.push(grad_check(
        "mse",
        rec.as_slice(),
        |v| mse(&target, &Matrix::new(5, 3, v.to_vec()).expect("shape")).map(|r| r.0).unwrap_or(f64::NAN),
        drec.as_slice(),
        SUITE_TOLERANCE,
    )?);

    let mu = uniform(&mut rng, 5, 2, -1.5, 1.5);
    let lv = uniform(&mut rng, 5, 2, -1.5, 1.5);
    let (_, dmu, dlv) = kl_divergence(&mu, &lv)?;
    let mut point = mu.as_slice().to_vec();
    point.extend_from_slice(lv.as_slice());
    let mut analytic = dmu.as_slice().to_vec();
    analytic.extend_from_slice(dlv.as_slice());
    reports.push(grad_check(
        "kl",
        &point,
        |v| {
            let m = Matrix::new(5, 2, v[..10].to_vec()).expect("shape");
            let l = Matrix::new(5, 2, v[10..].to_vec()).expect("shape");
            kl_divergence(&m, &l).map(|r| r.0).unwrap_or(f64::NAN)
        },
        &analytic,
        SUITE_TOLERANCE,
    )?);

    let (real, _) = probs_and_labels(&mut rng, 6);
    let (fake, _) = probs_and_labels(&mut rng, 6);
    let (_, g_real, g_fake) = discriminator_loss(&real, &fake);
    let mut point = real.clone();
    point.extend_from_slice(&fake);
    let mut analytic = g_real;
    analytic.extend(g_fake);
    reports.push(grad_check(
        "discriminator loss",
        &point,
        |v| discriminator_loss(&v[..6], &v[6..]).0,
        &analytic,
        SUITE_TOLERANCE,
    )?);
    reports.push(grad_check(
        "generator adversarial loss",
        &fake,
        |v| generator_adv_loss(v).value,
        &generator_adv_loss(&fake).grad,
        SUITE_TOLERANCE,
    )?);

    // z = mu + exp(logvar / 2) * eps with fixed eps, probed linearly.
    let eps = uniform(&mut rng, 5, 2, -2.0, 2.0);
    let probe = uniform(&mut rng, 5, 2, -1.0, 1.0);
    let z_probe = |v: &[f64]| -> f64 {
        (0..10)
            .map(|i| (v[i] + (0.5 * v[10 + i]).exp() * eps.as_slice()[i]) * probe.as_slice()[i])
            .sum()
    };
    let mut point = mu.as_slice().to_vec();
    point.extend_from_slice(lv.as_slice());
    let mut analytic = probe.as_slice().to_vec();
    analytic.extend((0..10).map(|i| {
        probe.as_slice()[i] * eps.as_slice()[i] * 0.5 * (0.5 * lv.as_slice()[i]).exp()
    }));
    reports.push(grad_check("reparameterization", &point, z_probe, &analytic, SUITE_TOLERANCE)?);

    let mut vg = VaeGan::new(VaeGanConfig {
        seed,
        ..VaeGanConfig::new(4)
    })?;
    let eps = uniform(&mut rng, 6, 2, -1.5, 1.5);
    reports.push(grad_check_params(
        "vae-gan generator path",
        &mut EncoderDecoder(&mut vg),
        |m, backward| {
            if backward {
                m.0.generator_objective(&x, &eps).map(|g| g.total)
            } else {
                let out = m.0.encode_with_noise(&x, &eps)?;
                let rec = m.0.decode(&out.z)?;
                let adv = generator_adv_loss(&m.0.discriminate(&rec)?).value;
                let c = &m.0.config;
                let (r, _) = mse(&x, &rec)?;
                let (kl, _, _) = kl_divergence(&out.mu, &out.logvar)?;
                Ok(c.recon_weight * r + c.kl_weight * kl + c.gan_weight * adv)
            }
        },
        SUITE_TOLERANCE,
    )?);

    let z = uniform(&mut rng, 8, 2, -2.0, 2.0);
    let zy: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
    for v in [MlpVariant::One, MlpVariant::Two, MlpVariant::Three] {
        let mut head = MlpHead::new(v, 2, seed);
        reports.push(grad_check_params(
            &format!("mlp head {}", v.index()),
            &mut head,
            |h, backward| {
                reseed_dropouts(&mut h.net, 5);
                if backward {
                    h.forward_backward(&z, &zy, &ClassLoss::Bce).map(|r| r.0)
                } else {
                    let p = h.forward(&z, Mode::Train)?;
                    Ok(bce(&zy, &p)?.value)
                }
            },
            SUITE_TOLERANCE,
        )?);
    }

    let xc = uniform(&mut rng, 100, 3, -2.0, 2.0);
    let yc: Vec<f64> = (0..100).map(|i| (i % 4 == 0) as u8 as f64).collect();
    let variants = [
        ("cpac", CpacConfig::new(3), ClassLoss::Focal(FocalConfig::default())),
        ("cpac bce", CpacConfig::new(3), ClassLoss::Bce),
        (
            "cpac no-attention",
            CpacConfig {
                use_attention: false,
                ..CpacConfig::new(3)
            },
            ClassLoss::Bce,
        ),
        (
            "cpac no-prototypes",
            CpacConfig {
                use_prototypes: false,
                ..CpacConfig::new(3)
            },
            ClassLoss::Bce,
        ),
    ];
    for (name, cfg, loss) in variants {
        let mut params = CpacParams::new(cfg, &mut rng);
        params.alpha = [rng.random_range(0.3..1.5)];
        reports.push(grad_check_params(
            &format!("{name} params"),
            &mut params,
            |c, backward| {
                if backward {
                    c.forward_backward(&xc, &yc, &loss).map(|r| r.0.total)
                } else {
                    c.total_loss(&xc, &yc, &loss).map(|r| r.total)
                }
            },
            SUITE_TOLERANCE,
        )?);
        let (_, dx) = params.forward_backward(&xc, &yc, &loss)?;
        params.zero_grad();
        reports.push(grad_check(
            &format!("{name} input"),
            xc.as_slice(),
            |v| {
                let m = Matrix::new(100, 3, v.to_vec()).expect("shape");
                params.total_loss(&m, &yc, &loss).map(|r| r.total).unwrap_or(f64::NAN)
            },
            dx.as_slice(),
            SUITE_TOLERANCE,
        )?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for r in run_suite(1).unwrap() {
            assert!(r.passed(), "{r:?}");
        }
    }
}
