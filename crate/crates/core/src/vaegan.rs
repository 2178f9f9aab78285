//! VAE-GAN oversampler and the joint training loop that lets a
//! classification head shape the encoder's latent space.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::LatentHead;
use crate::metrics::{confusion, prf};
use crate::nn::loss::{discriminator_loss, generator_adv_loss, kl_divergence, mse};
use crate::nn::{Adam, AdamConfig, Checkpoint, ClassLoss, Layer, Matrix, Mode, Sequential, Trainable};

pub const LOGVAR_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GenerativeScope {
    #[default]
    Minority,
    All,
}

impl std::str::FromStr for GenerativeScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minority" => Ok(Self::Minority),
            "all" => Ok(Self::All),
            other => Err(Error::Config(format!("unknown generative scope `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeGanConfig {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub recon_weight: f64,
    /// KL weight, beta.
    pub kl_weight: f64,
    pub gan_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub seed: u64,
    pub scope: GenerativeScope,
}

impl VaeGanConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            latent_dim: 2,
            encoder_hidden: vec![16, 8],
            decoder_hidden: vec![8, 16],
            discriminator_hidden: vec![16, 8],
            recon_weight: 1.0,
            kl_weight: 0.1,
            gan_weight: 0.1,
            epochs: 200,
            batch_size: 64,
            lr: 1e-3,
            patience: 10,
            seed: 0,
            scope: GenerativeScope::Minority,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.input_dim == 0 {
            return Err(Error::Config("input and latent dimensions must be positive".into()));
        }
        if [self.recon_weight, self.kl_weight, self.gan_weight]
            .iter()
            .any(|w| *w < 0.0 || !w.is_finite())
        {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub mu: Matrix,
    pub logvar: Matrix,
    pub z: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaeLoss {
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

/// All generator-side terms of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorLoss {
    pub recon: f64,
    pub kl: f64,
    pub adversarial: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeGanEpoch {
    pub epoch: usize,
    pub generator: f64,
    pub discriminator: f64,
    pub head: f64,
    pub val_recon: f64,
    pub val_precision: Option<f64>,
    pub val_recall: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct VaeGan {
    pub config: VaeGanConfig,
    pub encoder: Sequential,
    pub decoder: Sequential,
    pub discriminator: Sequential,
    pub trained: bool,
    pub log: Vec<VaeGanEpoch>,
    rng: ChaCha8Rng,
}

/// `x_rec` MSE plus `beta` times the KL term; components reported separately.
pub fn vae_loss(x: &Matrix, x_rec: &Matrix, mu: &Matrix, logvar: &Matrix, beta: f64) -> Result<VaeLoss> {
    let (recon, _) = mse(x, x_rec)?;
    let (kl, _, _) = kl_divergence(mu, logvar)?;
    Ok(VaeLoss {
        recon,
        kl,
        total: recon + beta * kl,
    })
}

fn widths(first: usize, hidden: &[usize], last: usize) -> Vec<usize> {
    let mut w = vec![first];
    w.extend_from_slice(hidden);
    w.push(last);
    w
}

fn standard_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::new(rows, cols, data).expect("sized above")
}

impl VaeGan {
    pub fn new(config: VaeGanConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, l) = (config.input_dim, config.latent_dim);
        let encoder = Sequential::mlp(&widths(d, &config.encoder_hidden, 2 * l), &mut rng);
        let decoder = Sequential::mlp(&widths(l, &config.decoder_hidden, d), &mut rng);
        let mut discriminator = Sequential::mlp(&widths(d, &config.discriminator_hidden, 1), &mut rng);
        discriminator.layers.push(Layer::sigmoid());
        Ok(Self {
            config,
            encoder,
            decoder,
            discriminator,
            trained: false,
            log: Vec::new(),
            rng,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.config.input_dim {
            return Err(Error::shape("vaegan input", self.config.input_dim, x.cols()));
        }
        Ok(())
    }

    /// Splits the encoder output into `mu` and clamped `logvar`.
    fn split(&self, h: &Matrix) -> (Matrix, Matrix) {
        let l = self.latent_dim();
        let mu = h.select_cols(&(0..l).collect::<Vec<_>>());
        let logvar = h
            .select_cols(&(l..2 * l).collect::<Vec<_>>())
            .map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
        (mu, logvar)
    }

    fn reparameterize(mu: &Matrix, logvar: &Matrix, eps: &Matrix) -> Result<Matrix> {
        let sigma = logvar.map(|v| (0.5 * v).exp());
        let noise = sigma.zip_map(eps, |s, e| s * e)?;
        mu.zip_map(&noise, |m, n| m + n)
    }

    /// Encodes with noise drawn from the model's own seeded stream.
    pub fn encode(&mut self, x: &Matrix) -> Result<EncoderOutput> {
        self.check_input(x)?;
        let eps = standard_normal(&mut self.rng, x.rows(), self.config.latent_dim);
        self.encode_with_noise(x, &eps)
    }

    pub fn encode_with_noise(&self, x: &Matrix, eps: &Matrix) -> Result<EncoderOutput> {
        self.check_input(x)?;
        if eps.shape() != (x.rows(), self.latent_dim()) {
            return Err(Error::shape(
                "reparameterization noise",
                format!("{}x{}", x.rows(), self.latent_dim()),
                format!("{}x{}", eps.rows(), eps.cols()),
            ));
        }
        let (mu, logvar) = self.split(&self.encoder.infer(x)?);
        let z = Self::reparameterize(&mu, &logvar, eps)?;
        Ok(EncoderOutput { mu, logvar, z })
    }

    /// Deterministic latent means.
    pub fn means(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        Ok(self.split(&self.encoder.infer(x)?).0)
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.latent_dim() {
            return Err(Error::shape("decoder input", self.latent_dim(), z.cols()));
        }
        self.decoder.infer(z)
    }

    pub fn discriminate(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.discriminator.infer(x)?.into_vec())
    }

    /// Reconstruction MSE through the means (no sampling noise).
    pub fn reconstruction_error(&self, x: &Matrix) -> Result<f64> {
        Ok(mse(x, &self.decode(&self.means(x)?)?)?.0)
    }

    /// Decodes `n` draws from the standard normal prior.
    pub fn sample_frauds(&self, n: usize, seed: u64) -> Result<Matrix> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        if n == 0 {
            return Ok(Matrix::zeros(0, self.config.input_dim));
        }
        let z = standard_normal(&mut ChaCha8Rng::seed_from_u64(seed), n, self.latent_dim());
        self.decode(&z)
    }

    /// Weighted reconstruction + KL + adversarial loss with fixed noise.
    /// Accumulates gradients into the encoder and decoder; the discriminator
    /// also receives gradients, which callers discard.
    pub fn generator_objective(&mut self, x: &Matrix, eps: &Matrix) -> Result<GeneratorLoss> {
        self.check_input(x)?;
        let l = self.latent_dim();
        let h = self.encoder.forward(x, Mode::Train)?;
        let (mu, logvar) = self.split(&h);
        let z = Self::reparameterize(&mu, &logvar, eps)?;
        let x_rec = self.decoder.forward(&z, Mode::Train)?;
        let (recon, drec) = mse(x, &x_rec)?;
        let (kl, dmu_kl, dlv_kl) = kl_divergence(&mu, &logvar)?;
        let fake = self.discriminator.forward(&x_rec, Mode::Train)?.into_vec();
        let adv = generator_adv_loss(&fake);
        let dx_adv = self.discriminator.backward(&Matrix::column(&adv.grad))?;

        let c = &self.config;
        let (wr, wk, wg) = (c.recon_weight, c.kl_weight, c.gan_weight);
        let dxrec = drec.zip_map(&dx_adv, |a, b| wr * a + wg * b)?;
        let dz = self.decoder.backward(&dxrec)?;

        let mut dh = Matrix::zeros(x.rows(), 2 * l);
        for r in 0..x.rows() {
            for j in 0..l {
                let lv = logvar.get(r, j);
                let dmu = dz.get(r, j) + wk * dmu_kl.get(r, j);
                let raw = h.get(r, l + j);
                let dlv = if raw.abs() > LOGVAR_CLAMP {
                    0.0
                } else {
                    dz.get(r, j) * eps.get(r, j) * 0.5 * (0.5 * lv).exp() + wk * dlv_kl.get(r, j)
                };
                dh.set(r, j, dmu);
                dh.set(r, l + j, dlv);
            }
        }
        self.encoder.backward(&dh)?;
        Ok(GeneratorLoss {
            recon,
            kl,
            adversarial: adv.value,
            total: wr * recon + wk * kl + wg * adv.value,
        })
    }

    /// Discriminator loss on real rows against their reconstructions;
    /// accumulates discriminator gradients only.
    pub fn discriminator_objective(&mut self, x: &Matrix, eps: &Matrix) -> Result<f64> {
        let out = self.encode_with_noise(x, eps)?;
        let fake = self.decode(&out.z)?;
        let n = x.rows();
        let probs = self.discriminator.forward(&x.vstack(&fake)?, Mode::Train)?.into_vec();
        let (value, g_real, g_fake) = discriminator_loss(&probs[..n], &probs[n..]);
        let mut g = g_real;
        g.extend(g_fake);
        self.discriminator.backward(&Matrix::column(&g))?;
        Ok(value)
    }

    /// One alternating update on `x`: discriminator first, then encoder and
    /// decoder. Returns `(generator, discriminator)` losses.
    fn generative_step(&mut self, x: &Matrix, opt: &mut Optimizers) -> Result<(f64, f64)> {
        let eps = standard_normal(&mut self.rng, x.rows(), self.config.latent_dim);
        let d = self.discriminator_objective(x, &eps)?;
        opt.disc.step(&mut self.discriminator)?;
        let eps = standard_normal(&mut self.rng, x.rows(), self.config.latent_dim);
        let g = self.generator_objective(x, &eps)?;
        self.discriminator.zero_grad();
        opt.enc.step(&mut self.encoder)?;
        opt.dec.step(&mut self.decoder)?;
        Ok((g.total, d))
    }

    fn snapshot(&self) -> Snapshot {
        (self.encoder.clone(), self.decoder.clone(), self.discriminator.clone())
    }

    fn restore(&mut self, s: Snapshot) {
        self.encoder = s.0;
        self.decoder = s.1;
        self.discriminator = s.2;
    }

    /// Trains on fraud rows only, stopping early when the validation
    /// reconstruction error stops improving. An empty validation set falls
    /// back to the training rows.
    pub fn train_minority_oversampler(&mut self, fraud: &Matrix, val_fraud: &Matrix) -> Result<()> {
        self.check_input(fraud)?;
        if fraud.rows() < 2 {
            return Err(Error::TooFewSamples {
                needed: 1,
                got: fraud.rows(),
            });
        }
        let monitor = if val_fraud.rows() > 0 { val_fraud } else { fraud };
        let mut opt = Optimizers::new(self.config.lr);
        let mut order: Vec<usize> = (0..fraud.rows()).collect();
        let mut best = (f64::INFINITY, self.snapshot());
        let mut since = 0;
        self.log.clear();
        for epoch in 1..=self.config.epochs {
            order.shuffle(&mut self.rng);
            let (mut gsum, mut dsum, mut batches) = (0.0, 0.0, 0.0);
            for chunk in order.chunks(self.config.batch_size) {
                let (g, d) = self.generative_step(&fraud.select_rows(chunk), &mut opt)?;
                check_finite(epoch, "generator loss", g)?;
                check_finite(epoch, "discriminator loss", d)?;
                gsum += g;
                dsum += d;
                batches += 1.0;
            }
            let val_recon = self.reconstruction_error(monitor)?;
            check_finite(epoch, "validation reconstruction", val_recon)?;
            self.log.push(VaeGanEpoch {
                epoch,
                generator: gsum / batches,
                discriminator: dsum / batches,
                head: 0.0,
                val_recon,
                val_precision: None,
                val_recall: None,
            });
            if val_recon < best.0 {
                best = (val_recon, self.snapshot());
                since = 0;
            } else {
                since += 1;
                if since >= self.config.patience {
                    break;
                }
            }
        }
        self.restore(best.1);
        self.trained = true;
        Ok(())
    }

    /// Joint training: per mini-batch a generative update on the rows chosen
    /// by the scope, then the head loss on the whole batch backpropagated into
    /// the encoder through `mu`. Validation rows are only used for model
    /// selection.
    pub fn train_joint(
        &mut self,
        head: &mut LatentHead,
        train_x: &Matrix,
        train_y: &[u8],
        val_x: &Matrix,
        val_y: &[u8],
        cfg: &JointConfig,
    ) -> Result<JointOutcome> {
        self.check_input(train_x)?;
        if train_x.rows() != train_y.len() || val_x.rows() != val_y.len() {
            return Err(Error::shape("train_joint labels", train_x.rows(), train_y.len()));
        }
        if let Some(d) = head.in_dim() {
            if d != self.latent_dim() {
                return Err(Error::shape("head input", self.latent_dim(), d));
            }
        }
        if !train_y.contains(&0) || !train_y.contains(&1) {
            return Err(Error::SingleClass("train_joint"));
        }
        let y: Vec<f64> = train_y.iter().map(|&l| f64::from(l)).collect();
        head.init_from(&self.means(train_x)?, &y)?;

        let val_monitor = match self.config.scope {
            GenerativeScope::Minority => {
                let idx: Vec<usize> = (0..val_y.len()).filter(|&i| val_y[i] == 1).collect();
                val_x.select_rows(&idx)
            }
            GenerativeScope::All => val_x.clone(),
        };

        let mut opt = Optimizers::new(self.config.lr);
        let mut head_opt = Adam::new(AdamConfig::with_lr(cfg.head_lr));
        let mut order: Vec<usize> = (0..train_x.rows()).collect();
        let mut best: Option<(SelectionKey, Snapshot, LatentHead, usize)> = None;
        let mut since = 0;
        self.log.clear();

        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut self.rng);
            let (mut gsum, mut dsum, mut hsum, mut gb, mut hb) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for chunk in order.chunks(cfg.batch_size.max(1)) {
                let gen_rows: Vec<usize> = match self.config.scope {
                    GenerativeScope::Minority => chunk.iter().copied().filter(|&i| train_y[i] == 1).collect(),
                    GenerativeScope::All => chunk.to_vec(),
                };
                if !gen_rows.is_empty() {
                    let (g, d) = self.generative_step(&train_x.select_rows(&gen_rows), &mut opt)?;
                    check_finite(epoch, "generator loss", g)?;
                    check_finite(epoch, "discriminator loss", d)?;
                    gsum += g;
                    dsum += d;
                    gb += 1.0;
                }
                if head.is_none() {
                    continue;
                }
                let xb = train_x.select_rows(chunk);
                let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
                let h = self.encoder.forward(&xb, Mode::Train)?;
                let (mu, _) = self.split(&h);
                let (hl, dmu) = head.forward_backward(&mu, &yb, &cfg.head_loss)?;
                check_finite(epoch, "head loss", hl)?;
                let l = self.latent_dim();
                let mut dh = Matrix::zeros(xb.rows(), 2 * l);
                for r in 0..xb.rows() {
                    dh.row_mut(r)[..l].copy_from_slice(dmu.row(r));
                }
                self.encoder.backward(&dh)?;
                opt.enc.step(&mut self.encoder)?;
                head_opt.step(head)?;
                head.after_step();
                hsum += hl;
                hb += 1.0;
            }

            let val_recon = if val_monitor.rows() > 0 {
                self.reconstruction_error(&val_monitor)?
            } else {
                0.0
            };
            let (mut vp, mut vr) = (None, None);
            let key = if head.is_none() {
                SelectionKey::Recon(val_recon)
            } else {
                let probs = head.predict(&self.means(val_x)?)?;
                let (p, r, _) = prf(&confusion(val_y, &probs, 0.5)?);
                let yv: Vec<f64> = val_y.iter().map(|&l| f64::from(l)).collect();
                let val_loss = cfg.head_loss.evaluate(&yv, &probs)?.value;
                vp = Some(p);
                vr = Some(r);
                SelectionKey::Gated {
                    passes: p >= cfg.min_precision,
                    recall: r,
                    precision: p,
                    neg_loss: -val_loss,
                }
            };
            self.log.push(VaeGanEpoch {
                epoch,
                generator: if gb > 0.0 { gsum / gb } else { 0.0 },
                discriminator: if gb > 0.0 { dsum / gb } else { 0.0 },
                head: if hb > 0.0 { hsum / hb } else { 0.0 },
                val_recon,
                val_precision: vp,
                val_recall: vr,
            });
            let improved = best.as_ref().is_none_or(|b| key.better_than(&b.0));
            if improved {
                best = Some((key, self.snapshot(), head.clone(), epoch));
                since = 0;
            } else {
                since += 1;
                if since >= cfg.patience {
                    break;
                }
            }
        }

        let best_epoch = match best {
            Some((_, snap, h, e)) => {
                self.restore(snap);
                *head = h;
                e
            }
            None => 0,
        };
        self.trained = true;
        Ok(JointOutcome {
            best_epoch,
            epochs_run: self.log.len(),
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new("vaegan", serde_json::to_value(&self.config)?);
        ck.push_model("encoder", &mut self.encoder.clone())?;
        ck.push_model("decoder", &mut self.decoder.clone())?;
        ck.push_model("discriminator", &mut self.discriminator.clone())?;
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("vaegan")?;
        let config: VaeGanConfig = serde_json::from_value(ck.config.clone())
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut m = Self::new(config)?;
        ck.load_model("encoder", &mut m.encoder)?;
        ck.load_model("decoder", &mut m.decoder)?;
        ck.load_model("discriminator", &mut m.discriminator)?;
        m.trained = true;
        Ok(m)
    }
}

struct Optimizers {
    enc: Adam,
    dec: Adam,
    disc: Adam,
}

impl Optimizers {
    fn new(lr: f64) -> Self {
        let cfg = AdamConfig::with_lr(lr);
        Self {
            enc: Adam::new(cfg),
            dec: Adam::new(cfg),
            disc: Adam::new(cfg),
        }
    }
}

fn check_finite(epoch: usize, what: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { epoch, what, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SelectionKey {
    Recon(f64),
    /// Recall among epochs meeting the precision floor; ties fall back to
    /// precision, then validation head loss.
    Gated {
        passes: bool,
        recall: f64,
        precision: f64,
        neg_loss: f64,
    },
}

impl SelectionKey {
    fn better_than(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Recon(a), Self::Recon(b)) => a < b,
            (
                Self::Gated {
                    passes: pa,
                    recall: ra,
                    precision: qa,
                    neg_loss: la,
                },
                Self::Gated {
                    passes: pb,
                    recall: rb,
                    precision: qb,
                    neg_loss: lb,
                },
            ) => (pa, ra, qa, la).partial_cmp(&(pb, rb, qb, lb)) == Some(std::cmp::Ordering::Greater),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub min_precision: f64,
    pub head_loss: ClassLoss,
    pub head_lr: f64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            patience: 10,
            min_precision: 0.85,
            head_loss: ClassLoss::Bce,
            head_lr: 1e-3,
        }
    }
}

type Snapshot = (Sequential, Sequential, Sequential);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointOutcome {
    pub best_epoch: usize,
    pub epochs_run: usize,
}
