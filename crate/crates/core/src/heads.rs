//! MLP latent heads, the logistic-regression baseline and the head interface
//! used by joint training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cpac::{CpacConfig, CpacParams};
use crate::error::{Error, Result};
use crate::metrics::{composite, confusion, prf};
use crate::nn::layers::{ParamMut, Trainable};
use crate::nn::{
    sigmoid_scalar, Adam, AdamConfig, BatchNorm, Checkpoint, ClassLoss, Dense, Dropout, Layer,
    Matrix, Mode, Sequential,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MlpVariant {
    /// 32 ReLU units.
    One,
    /// 64 units, batch norm, ReLU, dropout 0.2.
    Two,
    /// 128 then 64 ReLU units.
    Three,
}

impl MlpVariant {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            3 => Ok(Self::Three),
            _ => Err(Error::Config(format!("unknown MLP head variant {i}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Self::One => 1,
            Self::Two => 2,
            Self::Three => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpHead {
    pub variant: MlpVariant,
    pub net: Sequential,
}

impl MlpHead {
    pub fn new(variant: MlpVariant, in_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = match variant {
            MlpVariant::One => vec![
                Layer::Dense(Dense::new(in_dim, 32, &mut rng)),
                Layer::relu(),
                Layer::Dense(Dense::new(32, 1, &mut rng)),
            ],
            MlpVariant::Two => vec![
                Layer::Dense(Dense::new(in_dim, 64, &mut rng)),
                Layer::BatchNorm(BatchNorm::new(64)),
                Layer::relu(),
                Layer::Dropout(Dropout::new(0.2, seed ^ 0x5eed)),
                Layer::Dense(Dense::new(64, 1, &mut rng)),
            ],
            MlpVariant::Three => vec![
                Layer::Dense(Dense::new(in_dim, 128, &mut rng)),
                Layer::relu(),
                Layer::Dense(Dense::new(128, 64, &mut rng)),
                Layer::relu(),
                Layer::Dense(Dense::new(64, 1, &mut rng)),
            ],
        };
        let mut layers = layers;
        layers.push(Layer::sigmoid());
        Self {
            variant,
            net: Sequential::new(layers),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.net.in_dim().unwrap_or(0)
    }

    fn check(&self, z: &Matrix) -> Result<()> {
        if z.cols() != self.in_dim() {
            return Err(Error::shape("mlp head input", self.in_dim(), z.cols()));
        }
        Ok(())
    }

    pub fn predict(&self, z: &Matrix) -> Result<Vec<f64>> {
        self.check(z)?;
        Ok(self.net.infer(z)?.into_vec())
    }

    pub fn forward(&mut self, z: &Matrix, mode: Mode) -> Result<Vec<f64>> {
        self.check(z)?;
        Ok(self.net.forward(z, mode)?.into_vec())
    }

    /// Backpropagates `dL/dprob` and returns `dL/dz`.
    pub fn backward(&mut self, dprob: &[f64]) -> Result<Matrix> {
        self.net.backward(&Matrix::column(dprob))
    }

    /// Loss on a batch in train mode; accumulates gradients and returns `dL/dz`.
    pub fn forward_backward(&mut self, z: &Matrix, y: &[f64], loss: &ClassLoss) -> Result<(f64, Matrix)> {
        let p = self.forward(z, Mode::Train)?;
        let lg = loss.evaluate(y, &p)?;
        let dz = self.backward(&lg.grad)?;
        Ok((lg.value, dz))
    }
}

impl Trainable for MlpHead {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.net.params_mut()
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        self.net.buffers_mut()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.1,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
}

impl LogRegParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            l2: 0.0,
        }
    }
}

/// Full-batch gradient descent on mean BCE plus `l2/2 * ||w||^2`, starting
/// from zero weights.
pub fn logreg_fit(x: &Matrix, y: &[u8], cfg: &LogRegConfig) -> Result<LogRegParams> {
    if x.rows() != y.len() {
        return Err(Error::shape("logreg labels", x.rows(), y.len()));
    }
    if !y.contains(&0) || !y.contains(&1) {
        return Err(Error::SingleClass("logreg_fit"));
    }
    if cfg.l2 < 0.0 || cfg.lr <= 0.0 {
        return Err(Error::Config("logreg needs lr > 0 and l2 >= 0".into()));
    }
    let (n, d) = x.shape();
    let mut p = LogRegParams {
        weights: vec![0.0; d],
        bias: 0.0,
        l2: cfg.l2,
    };
    let mut gw = vec![0.0; d];
    for _ in 0..cfg.epochs {
        gw.fill(0.0);
        let mut gb = 0.0;
        for (r, &label) in y.iter().enumerate() {
            let row = x.row(r);
            let s = crate::nn::matrix::dot(row, &p.weights) + p.bias;
            let err = sigmoid_scalar(s) - f64::from(label);
            for (g, v) in gw.iter_mut().zip(row) {
                *g += err * v;
            }
            gb += err;
        }
        for (w, g) in p.weights.iter_mut().zip(&gw) {
            *w -= cfg.lr * (g / n as f64 + cfg.l2 * *w);
        }
        p.bias -= cfg.lr * gb / n as f64;
    }
    if !p.weights.iter().all(|w| w.is_finite()) || !p.bias.is_finite() {
        return Err(Error::NonFinite("logistic regression weights".into()));
    }
    Ok(p)
}

pub fn logreg_predict(p: &LogRegParams, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != p.weights.len() {
        return Err(Error::shape("logreg input", p.weights.len(), x.cols()));
    }
    Ok(x.iter_rows()
        .map(|row| sigmoid_scalar(crate::nn::matrix::dot(row, &p.weights) + p.bias))
        .collect())
}

/// Classification head attached to encoder means during joint training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LatentHead {
    None,
    Mlp(MlpHead),
    Cpac(CpacParams),
}

impl LatentHead {
    pub fn is_none(&self) -> bool {
        matches!(self, LatentHead::None)
    }

    pub fn name(&self) -> String {
        match self {
            LatentHead::None => "none".into(),
            LatentHead::Mlp(m) => format!("mlp{}", m.variant.index()),
            LatentHead::Cpac(_) => "cpac".into(),
        }
    }

    pub fn in_dim(&self) -> Option<usize> {
        match self {
            LatentHead::None => None,
            LatentHead::Mlp(m) => Some(m.in_dim()),
            LatentHead::Cpac(c) => Some(c.dim()),
        }
    }

    pub fn predict(&self, mu: &Matrix) -> Result<Vec<f64>> {
        match self {
            LatentHead::None => Err(Error::Config("no classification head attached".into())),
            LatentHead::Mlp(m) => m.predict(mu),
            LatentHead::Cpac(c) => c.predict(mu),
        }
    }

    /// Head loss on `mu` with gradients accumulated into the head; returns the
    /// loss and `dL/dmu`. A missing head contributes zero loss and gradient.
    pub fn forward_backward(&mut self, mu: &Matrix, y: &[f64], loss: &ClassLoss) -> Result<(f64, Matrix)> {
        match self {
            LatentHead::None => Ok((0.0, Matrix::zeros(mu.rows(), mu.cols()))),
            LatentHead::Mlp(m) => m.forward_backward(mu, y, loss),
            LatentHead::Cpac(c) => {
                let (l, dmu) = c.forward_backward(mu, y, loss)?;
                Ok((l.total, dmu))
            }
        }
    }

    pub fn after_step(&mut self) {
        if let LatentHead::Cpac(c) = self {
            c.clamp_alpha();
        }
    }

    pub fn init_from(&mut self, mu: &Matrix, y: &[f64]) -> Result<()> {
        if let LatentHead::Cpac(c) = self {
            c.init_prototypes(mu, y)?;
        }
        Ok(())
    }
}

impl Trainable for LatentHead {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        match self {
            LatentHead::None => Vec::new(),
            LatentHead::Mlp(m) => m.params_mut(),
            LatentHead::Cpac(c) => c.params_mut(),
        }
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        match self {
            LatentHead::Mlp(m) => m.buffers_mut(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Logreg,
    Cpac,
    Mlp1,
    Mlp2,
    Mlp3,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(Self::Logreg),
            "cpac" => Ok(Self::Cpac),
            "mlp1" => Ok(Self::Mlp1),
            "mlp2" => Ok(Self::Mlp2),
            "mlp3" => Ok(Self::Mlp3),
            other => Err(Error::Config(format!("unknown classifier `{other}`"))),
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Logreg => "logreg",
            Self::Cpac => "cpac",
            Self::Mlp1 => "mlp1",
            Self::Mlp2 => "mlp2",
            Self::Mlp3 => "mlp3",
        })
    }
}

/// A trained classifier on normalized feature rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Classifier {
    Logreg(LogRegParams),
    Cpac(CpacParams),
    Mlp(MlpHead),
}

impl Classifier {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Classifier::Logreg(p) => logreg_predict(p, x),
            Classifier::Cpac(c) => c.predict(x),
            Classifier::Mlp(m) => m.predict(x),
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        match self {
            Classifier::Cpac(c) => c.to_checkpoint(),
            Classifier::Logreg(p) => {
                let mut ck = Checkpoint::new("logreg", serde_json::json!({ "l2": p.l2 }));
                ck.push("weights", vec![p.weights.len()], p.weights.clone());
                ck.push("bias", vec![1], vec![p.bias]);
                Ok(ck)
            }
            Classifier::Mlp(m) => {
                let config = serde_json::json!({ "variant": m.variant.index(), "in_dim": m.in_dim() });
                let mut ck = Checkpoint::new("mlp", config);
                ck.push_model("mlp", &mut m.clone())?;
                Ok(ck)
            }
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let field = |k: &str| -> Result<u64> {
            ck.config
                .get(k)
                .and_then(|v| v.as_u64())
                .ok_or_else(|| Error::Checkpoint(format!("config is missing `{k}`")))
        };
        match ck.kind.as_str() {
            "cpac" => Ok(Classifier::Cpac(CpacParams::from_checkpoint(ck)?)),
            "logreg" => {
                let l2 = ck.config.get("l2").and_then(|v| v.as_f64()).unwrap_or(0.0);
                let weights = ck.get("weights")?.data.clone();
                let bias = *ck
                    .get("bias")?
                    .data
                    .first()
                    .ok_or_else(|| Error::Checkpoint("empty bias".into()))?;
                Ok(Classifier::Logreg(LogRegParams { weights, bias, l2 }))
            }
            "mlp" => {
                let variant = MlpVariant::from_index(field("variant")? as u8)?;
                let mut m = MlpHead::new(variant, field("in_dim")? as usize, 0);
                ck.load_model("mlp", &mut m)?;
                Ok(Classifier::Mlp(m))
            }
            other => Err(Error::Checkpoint(format!("unexpected checkpoint kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainConfig {
    pub kind: ClassifierKind,
    pub loss: ClassLoss,
    pub logreg: LogRegConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub lr: f64,
    pub seed: u64,
    pub no_attention: bool,
    pub no_prototypes: bool,
    pub no_penalties: bool,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Logreg,
            loss: ClassLoss::Bce,
            logreg: LogRegConfig::default(),
            epochs: 30,
            batch_size: 256,
            patience: 10,
            lr: 1e-2,
            seed: 0,
            no_attention: false,
            no_prototypes: false,
            no_penalties: false,
        }
    }
}

/// Trains any classifier kind on feature rows; neural models keep the
/// checkpoint with the best validation composite score at threshold 0.5.
pub fn train_classifier(
    train_x: &Matrix,
    train_y: &[u8],
    val_x: &Matrix,
    val_y: &[u8],
    cfg: &ClassifierTrainConfig,
) -> Result<Classifier> {
    let dim = train_x.cols();
    match cfg.kind {
        ClassifierKind::Logreg => Ok(Classifier::Logreg(logreg_fit(train_x, train_y, &cfg.logreg)?)),
        ClassifierKind::Cpac => {
            let mut cc = CpacConfig::new(dim);
            cc.use_attention = !cfg.no_attention;
            cc.use_prototypes = !cfg.no_prototypes;
            if cfg.no_penalties {
                cc = cc.without_penalties();
            }
            let params = CpacParams::new(cc, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
            let tc = crate::cpac::CpacTrainConfig {
                loss: cfg.loss,
                epochs: cfg.epochs,
                batch_size: cfg.batch_size,
                patience: cfg.patience,
                score_weights: (0.5, 0.5),
                lr: cfg.lr,
                seed: cfg.seed,
            };
            let out = crate::cpac::train_standalone(params, train_x, train_y, val_x, val_y, &tc)?;
            Ok(Classifier::Cpac(out.best))
        }
        ClassifierKind::Mlp1 | ClassifierKind::Mlp2 | ClassifierKind::Mlp3 => {
            let variant = match cfg.kind {
                ClassifierKind::Mlp1 => MlpVariant::One,
                ClassifierKind::Mlp2 => MlpVariant::Two,
                _ => MlpVariant::Three,
            };
            train_mlp(MlpHead::new(variant, dim, cfg.seed), train_x, train_y, val_x, val_y, cfg)
                .map(Classifier::Mlp)
        }
    }
}

fn train_mlp(
    mut head: MlpHead,
    train_x: &Matrix,
    train_y: &[u8],
    val_x: &Matrix,
    val_y: &[u8],
    cfg: &ClassifierTrainConfig,
) -> Result<MlpHead> {
    if !train_y.contains(&0) || !train_y.contains(&1) {
        return Err(Error::SingleClass("train_mlp"));
    }
    let y: Vec<f64> = train_y.iter().map(|&l| f64::from(l)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut order: Vec<usize> = (0..train_x.rows()).collect();
    let mut best = (f64::NEG_INFINITY, head.clone());
    let mut since = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(2)) {
            if chunk.len() < 2 {
                continue;
            }
            let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            let (l, _) = head.forward_backward(&train_x.select_rows(chunk), &yb, &cfg.loss)?;
            if !l.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    what: "mlp loss",
                    value: l,
                });
            }
            opt.step(&mut head)?;
        }
        let (p, r, _) = prf(&confusion(val_y, &head.predict(val_x)?, 0.5)?);
        let s = composite(p, r);
        if s > best.0 {
            best = (s, head.clone());
            since = 0;
        } else {
            since += 1;
            if since >= cfg.patience {
                break;
            }
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_out(head: &mut MlpHead) {
        for p in head.params_mut() {
            if !p.name.ends_with("gamma") {
                p.value.fill(0.0);
            }
        }
    }

    #[test]
    fn zero_parameters_give_half() {
        for v in [MlpVariant::One, MlpVariant::Two, MlpVariant::Three] {
            let mut h = MlpHead::new(v, 2, 3);
            zero_out(&mut h);
            let z = Matrix::from_rows(&[[1.0, -4.0], [0.3, 9.0]]).unwrap();
            assert!(h.predict(&z).unwrap().iter().all(|&p| p == 0.5));
        }
    }

    #[test]
    fn variant_two_infer_is_deterministic() {
        let h = MlpHead::new(MlpVariant::Two, 2, 5);
        let z = Matrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]).unwrap();
        assert_eq!(h.predict(&z).unwrap(), h.predict(&z).unwrap());
    }

    #[test]
    fn wrong_latent_dim() {
        let h = MlpHead::new(MlpVariant::One, 2, 0);
        assert!(h.predict(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn logreg_zero_model_and_separable_toy() {
        let x = Matrix::from_rows(&[[-2.0, 0.0], [-1.5, 0.5], [1.5, -0.5], [2.0, 0.0]]).unwrap();
        assert!(logreg_predict(&LogRegParams::zeros(2), &x)
            .unwrap()
            .iter()
            .all(|&p| p == 0.5));
        let y = [0, 0, 1, 1];
        let p = logreg_fit(&x, &y, &LogRegConfig::default()).unwrap();
        let preds = logreg_predict(&p, &x).unwrap();
        for (prob, &label) in preds.iter().zip(&y) {
            assert_eq!(u8::from(*prob > 0.5), label);
        }
    }

    #[test]
    fn logreg_l2_shrinks_weights() {
        let x = Matrix::from_rows(&[[-2.0, 1.0], [-1.0, 0.0], [1.0, 0.3], [2.0, -1.0]]).unwrap();
        let y = [0, 0, 1, 1];
        let norms: Vec<f64> = [0.0, 1.0, 10.0]
            .iter()
            .map(|&l2| {
                let cfg = LogRegConfig {
                    l2,
                    lr: 0.05,
                    ..Default::default()
                };
                let p = logreg_fit(&x, &y, &cfg).unwrap();
                p.weights.iter().map(|w| w * w).sum::<f64>()
            })
            .collect();
        assert!(norms[0] > norms[1] && norms[1] > norms[2], "{norms:?}");
    }

    #[test]
    fn logreg_single_class() {
        let x = Matrix::zeros(3, 2);
        assert!(matches!(
            logreg_fit(&x, &[1, 1, 1], &LogRegConfig::default()),
            Err(Error::SingleClass(_))
        ));
    }

    #[test]
    fn headless_contributes_nothing() {
        let mut h = LatentHead::None;
        let mu = Matrix::filled(3, 2, 1.0);
        let (l, g) = h.forward_backward(&mu, &[0.0, 1.0, 0.0], &ClassLoss::Bce).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }
}
