//! Convergence, determinism and data-flow behaviour of the trainable models.

use cpac_core::cpac::{train_standalone, CpacTrainConfig};
use cpac_core::heads::{LatentHead, MlpHead, MlpVariant};
use cpac_core::nn::Trainable;
use cpac_core::vaegan::JointConfig;
use cpac_core::{CpacConfig, CpacParams, GenerativeScope, Matrix, VaeGan, VaeGanConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two unit-variance Gaussians at -(3,3) and +(3,3); the first `frac` of
/// rows are the minority.
fn two_blobs(n: usize, frac: f64, seed: u64) -> (Matrix, Vec<u8>) {
    let mut r = rng(seed);
    let n1 = (n as f64 * frac).round() as usize;
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = if i < n1 { 3.0 } else { -3.0 };
        let a: f64 = r.sample(StandardNormal);
        let b: f64 = r.sample(StandardNormal);
        rows.push([c + a, c + b]);
        y.push(u8::from(i < n1));
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

/// Mixed data in `dim` columns: class 1 shifted by 3 in every coordinate.
fn shifted(n: usize, dim: usize, every: usize, seed: u64) -> (Matrix, Vec<u8>) {
    let mut r = rng(seed);
    let y: Vec<u8> = (0..n).map(|i| u8::from(i % every == 0)).collect();
    let data = y
        .iter()
        .flat_map(|&l| (0..dim).map(|_| r.sample::<f64, _>(StandardNormal) + 3.0 * f64::from(l)).collect::<Vec<_>>())
        .collect();
    (Matrix::new(n, dim, data).unwrap(), y)
}

fn flat_params<M: Trainable + ?Sized>(m: &mut M) -> Vec<f64> {
    m.params_mut().into_iter().flat_map(|p| p.value.to_vec()).collect()
}

#[test]
fn vaegan_learns_a_point_mass() {
    let row: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 0.7).collect();
    let x = Matrix::from_rows(&vec![row; 64]).unwrap();
    let mut m = VaeGan::new(VaeGanConfig {
        epochs: 300,
        batch_size: 16,
        lr: 5e-3,
        patience: 300,
        seed: 3,
        ..VaeGanConfig::new(6)
    })
    .unwrap();
    m.train_minority_oversampler(&x, &x).unwrap();
    let err = m.reconstruction_error(&x).unwrap();
    assert!(err < 1e-2, "reconstruction mse {err}");
}

#[test]
fn vaegan_samples_match_the_training_mean() {
    let mut r = rng(4);
    let (mean, sigma) = ([1.5, -2.0], 1.0);
    let rows: Vec<[f64; 2]> = (0..600)
        .map(|_| {
            [
                mean[0] + sigma * r.sample::<f64, _>(StandardNormal),
                mean[1] + sigma * r.sample::<f64, _>(StandardNormal),
            ]
        })
        .collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let mut m = VaeGan::new(VaeGanConfig {
        epochs: 150,
        lr: 3e-3,
        seed: 5,
        ..VaeGanConfig::new(2)
    })
    .unwrap();
    m.train_minority_oversampler(&x, &Matrix::zeros(0, 2)).unwrap();
    let s = m.sample_frauds(500, 9).unwrap();
    let got = s.column_means();
    for c in 0..2 {
        assert!((got[c] - mean[c]).abs() < 0.5 * sigma, "column {c}: {} vs {}", got[c], mean[c]);
    }
}

#[test]
fn oversampler_training_is_seed_deterministic() {
    let (x, _) = shifted(80, 5, 1, 6);
    let train = |seed| {
        let mut m = VaeGan::new(VaeGanConfig {
            epochs: 15,
            seed,
            ..VaeGanConfig::new(5)
        })
        .unwrap();
        m.train_minority_oversampler(&x, &x).unwrap();
        m.sample_frauds(10, 1).unwrap()
    };
    assert_eq!(train(11), train(11));
    assert_ne!(train(11), train(12));
}

fn joint_fixture() -> (Matrix, Vec<u8>, Matrix, Vec<u8>) {
    let (x, y) = shifted(600, 8, 10, 20);
    let (vx, vy) = shifted(200, 8, 10, 21);
    (x, y, vx, vy)
}

fn small_vaegan(scope: GenerativeScope, seed: u64) -> VaeGan {
    VaeGan::new(VaeGanConfig {
        scope,
        seed,
        ..VaeGanConfig::new(8)
    })
    .unwrap()
}

#[test]
fn joint_training_moves_head_and_encoder() {
    let (x, y, vx, vy) = joint_fixture();
    let mut m = small_vaegan(GenerativeScope::Minority, 1);
    let mut head = LatentHead::Cpac(CpacParams::new(CpacConfig::new(2), &mut rng(2)));
    let enc_before = m.means(&x).unwrap();
    let cfg = JointConfig {
        epochs: 3,
        patience: 100,
        ..Default::default()
    };
    // A single epoch, so model selection has nothing earlier to restore.
    let mut probe = head.clone();
    probe.init_from(&m.means(&x).unwrap(), &y.iter().map(|&l| f64::from(l)).collect::<Vec<_>>()).unwrap();
    let head_before = flat_params(&mut probe);
    m.train_joint(&mut head, &x, &y, &vx, &vy, &JointConfig { epochs: 1, ..cfg.clone() })
        .unwrap();
    assert_ne!(flat_params(&mut head), head_before);
    assert_ne!(m.means(&x).unwrap(), enc_before);

    // Without a head only the generative path moves the encoder, so the two runs differ.
    let mut plain = small_vaegan(GenerativeScope::Minority, 1);
    plain
        .train_joint(&mut LatentHead::None, &x, &y, &vx, &vy, &JointConfig { epochs: 1, ..cfg })
        .unwrap();
    assert_ne!(plain.means(&x).unwrap(), m.means(&x).unwrap());
}

#[test]
fn minority_scope_ignores_normal_rows_in_the_generative_phase() {
    let (x, y, vx, vy) = joint_fixture();
    let mut perturbed = x.clone();
    for (r, &label) in y.iter().enumerate() {
        if label == 0 {
            for v in perturbed.row_mut(r) {
                *v = *v * 7.0 - 11.0;
            }
        }
    }
    let cfg = JointConfig {
        epochs: 4,
        ..Default::default()
    };
    let run = |data: &Matrix| {
        let mut m = small_vaegan(GenerativeScope::Minority, 7);
        m.train_joint(&mut LatentHead::None, data, &y, &vx, &vy, &cfg).unwrap();
        (m.means(&vx).unwrap(), m.log.clone())
    };
    let (a, log_a) = run(&x);
    let (b, log_b) = run(&perturbed);
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);

    // Scope `all` does see them.
    let run_all = |data: &Matrix| {
        let mut m = small_vaegan(GenerativeScope::All, 7);
        m.train_joint(&mut LatentHead::None, data, &y, &vx, &vy, &cfg).unwrap();
        m.means(&vx).unwrap()
    };
    assert_ne!(run_all(&x), run_all(&perturbed));
}

#[test]
fn validation_rows_only_affect_selection() {
    let (x, y, vx, vy) = joint_fixture();
    let mut vx2 = vx.clone();
    for v in vx2.as_mut_slice() {
        *v = -*v;
    }
    let cfg = JointConfig {
        epochs: 5,
        patience: 100,
        ..Default::default()
    };
    let run = |val: &Matrix| {
        let mut m = small_vaegan(GenerativeScope::Minority, 8);
        let mut head = LatentHead::Mlp(MlpHead::new(MlpVariant::One, 2, 3));
        m.train_joint(&mut head, &x, &y, val, &vy, &cfg).unwrap();
        m.log.iter().map(|e| (e.generator, e.discriminator, e.head)).collect::<Vec<_>>()
    };
    assert_eq!(run(&vx), run(&vx2));
}

#[test]
fn joint_training_is_seed_deterministic() {
    let (x, y, vx, vy) = joint_fixture();
    let run = || {
        let mut m = small_vaegan(GenerativeScope::Minority, 9);
        let mut head = LatentHead::Cpac(CpacParams::new(CpacConfig::new(2), &mut rng(9)));
        let out = m
            .train_joint(&mut head, &x, &y, &vx, &vy, &JointConfig { epochs: 4, ..Default::default() })
            .unwrap();
        (out.best_epoch, m.means(&vx).unwrap(), head.predict(&m.means(&vx).unwrap()).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn standalone_anchors_prototypes_on_two_blobs() {
    let (x, y) = two_blobs(2000, 0.01, 0);
    let (vx, vy) = two_blobs(2000, 0.01, 100);
    let p = CpacParams::new(CpacConfig::new(2), &mut rng(0));
    let out = train_standalone(p, &x, &y, &vx, &vy, &CpacTrainConfig::default()).unwrap();
    for (c, proto) in [(0u8, &out.best.p0), (1u8, &out.best.p1)] {
        let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        let m = x.select_rows(&idx).column_means();
        let d = proto.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(d < 0.5, "class {c} prototype off by {d}");
    }
}

#[test]
fn standalone_keeps_the_best_checkpoint_and_stops_early() {
    let (x, y) = shifted(400, 3, 8, 30);
    let (vx, vy) = shifted(200, 3, 8, 31);
    let p = CpacParams::new(CpacConfig::new(3), &mut rng(1));
    let cfg = CpacTrainConfig {
        epochs: 200,
        patience: 5,
        ..Default::default()
    };
    let out = train_standalone(p, &x, &y, &vx, &vy, &cfg).unwrap();
    let max_logged = out.log.iter().map(|e| e.score).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best_score, max_logged);
    assert!(out.best_score >= out.log.last().unwrap().score);
    // Early stop fires exactly `patience` epochs after the best one.
    assert!(out.log.len() < 200);
    assert_eq!(out.log.len(), out.best_epoch + 5);
}
