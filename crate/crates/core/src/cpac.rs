//! Prototype-attention classifier.
//!
//! A per-feature attention mask `w = sigmoid(W2 relu(W1 x + b1) + b2)` weights
//! squared distances to two learnable class prototypes,
//! `d_c = alpha * sum_i w_i (x_i - p_c,i)^2`, and the fraud probability is the
//! class-1 entry of `softmax(-d0, -d1)`. The same module serves as a
//! standalone classifier on raw features and as a head on encoder means.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{composite_weighted, confusion, prf};
use crate::nn::layers::{prefixed, ParamMut, Trainable};
use crate::nn::{Adam, AdamConfig, Checkpoint, ClassLoss, Dense, FocalConfig, Matrix};

pub const MIN_ALPHA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpacConfig {
    pub dim: usize,
    pub hidden: usize,
    pub lambda_scale: f64,
    pub lambda_anchor: f64,
    /// When false the mask is fixed at 1 for every feature.
    pub use_attention: bool,
    /// When false the prototypes are replaced by a linear read-out of the
    /// attention-weighted input.
    pub use_prototypes: bool,
}

impl CpacConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            hidden: dim.max(8),
            lambda_scale: 0.001,
            lambda_anchor: 0.01,
            use_attention: true,
            use_prototypes: true,
        }
    }

    pub fn without_penalties(mut self) -> Self {
        self.lambda_scale = 0.0;
        self.lambda_anchor = 0.0;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CpacParams {
    pub config: CpacConfig,
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
    pub att_in: Dense,
    pub att_out: Dense,
    pub alpha: [f64; 1],
    pub readout: Vec<f64>,
    pub readout_bias: [f64; 1],
    #[serde(skip)]
    grads: Grads,
}

#[derive(Debug, Clone, Default)]
struct Grads {
    p0: Vec<f64>,
    p1: Vec<f64>,
    alpha: [f64; 1],
    readout: Vec<f64>,
    readout_bias: [f64; 1],
}

/// Loss terms of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpacLoss {
    pub classification: f64,
    pub scale: f64,
    pub anchor: f64,
    pub total: f64,
}

/// Per-row transparency record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub attention: Vec<f64>,
    pub d0: f64,
    pub d1: f64,
    pub prob: f64,
    /// `alpha * w_i * (x_i - p0_i)^2` per feature.
    pub contributions0: Vec<f64>,
    pub contributions1: Vec<f64>,
}

struct Forward {
    pre: Matrix,
    hidden: Matrix,
    w: Matrix,
    d0: Vec<f64>,
    d1: Vec<f64>,
    probs: Vec<f64>,
}

/// `alpha * sum_i w_i (x_i - p_i)^2`.
pub fn weighted_distance(x: &[f64], p: &[f64], w: &[f64], alpha: f64) -> Result<f64> {
    if x.len() != p.len() || x.len() != w.len() {
        return Err(Error::shape("weighted_distance", x.len(), p.len().min(w.len())));
    }
    Ok(alpha
        * x.iter()
            .zip(p)
            .zip(w)
            .map(|((xi, pi), wi)| wi * (xi - pi) * (xi - pi))
            .sum::<f64>())
}

/// Class-1 entry of `softmax(-d0, -d1)`.
pub fn two_class_softmax(d0: f64, d1: f64) -> f64 {
    let (l0, l1) = (-d0, -d1);
    let m = l0.max(l1);
    let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
    e1 / (e0 + e1)
}

impl CpacParams {
    pub fn new<R: Rng + ?Sized>(config: CpacConfig, rng: &mut R) -> Self {
        let d = config.dim;
        let noise = |rng: &mut R| -> Vec<f64> { (0..d).map(|_| rng.random_range(-0.1..=0.1)).collect() };
        let p0 = noise(rng);
        let p1 = noise(rng);
        let att_in = Dense::new(d, config.hidden, rng);
        let att_out = Dense::new(config.hidden, d, rng);
        let readout = noise(rng);
        Self {
            config,
            p0,
            p1,
            att_in,
            att_out,
            alpha: [1.0],
            readout,
            readout_bias: [0.0],
            grads: Grads::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha[0]
    }

    /// Sets each prototype to its class mean of `x`; classes absent from
    /// `labels` keep their current (noise) initialisation.
    pub fn init_prototypes(&mut self, x: &Matrix, labels: &[f64]) -> Result<()> {
        self.check_input(x)?;
        for (c, proto) in [(0.0, &mut self.p0), (1.0, &mut self.p1)] {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            if !idx.is_empty() {
                *proto = x.select_rows(&idx).column_means();
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::shape("cpac input", self.dim(), x.cols()));
        }
        Ok(())
    }

    /// Per-feature attention mask, every entry in (0, 1) (or exactly 1 with
    /// attention disabled).
    pub fn attention(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        if !self.config.use_attention {
            return Ok(Matrix::filled(x.rows(), self.dim(), 1.0));
        }
        let hidden = crate::nn::relu(&self.att_in.infer(x)?);
        Ok(crate::nn::sigmoid(&self.att_out.infer(&hidden)?))
    }

    fn forward(&self, x: &Matrix) -> Result<Forward> {
        self.check_input(x)?;
        let (pre, hidden, w) = if self.config.use_attention {
            let pre = self.att_in.infer(x)?;
            let hidden = crate::nn::relu(&pre);
            let w = crate::nn::sigmoid(&self.att_out.infer(&hidden)?);
            (pre, hidden, w)
        } else {
            (
                Matrix::zeros(0, 0),
                Matrix::zeros(0, 0),
                Matrix::filled(x.rows(), self.dim(), 1.0),
            )
        };
        let n = x.rows();
        let (mut d0, mut d1, mut probs) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for r in 0..n {
            let (xr, wr) = (x.row(r), w.row(r));
            if self.config.use_prototypes {
                let a = weighted_distance(xr, &self.p0, wr, self.alpha())?;
                let b = weighted_distance(xr, &self.p1, wr, self.alpha())?;
                d0.push(a);
                d1.push(b);
                probs.push(two_class_softmax(a, b));
            } else {
                let s = xr
                    .iter()
                    .zip(wr)
                    .zip(&self.readout)
                    .map(|((xi, wi), ui)| ui * wi * xi)
                    .sum::<f64>()
                    + self.readout_bias[0];
                probs.push(crate::nn::sigmoid_scalar(s));
            }
        }
        Ok(Forward {
            pre,
            hidden,
            w,
            d0,
            d1,
            probs,
        })
    }

    /// Fraud probability per row.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.probs)
    }

    /// Returns `(d0, d1)` per row.
    pub fn distances(&self, x: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let f = self.forward(x)?;
        Ok((f.d0, f.d1))
    }

    pub fn scale_penalty(&self) -> f64 {
        self.config.lambda_scale * self.alpha() * self.alpha()
    }

    /// `lambda_anchor * sum_c ||p_c - mean(x | y = c)||^2`, skipping classes
    /// absent from the batch.
    pub fn anchor_penalty(&self, x: &Matrix, labels: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        if !self.config.use_prototypes {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for (c, proto) in [(0.0, &self.p0), (1.0, &self.p1)] {
            if let Some(centroid) = class_mean(x, labels, c) {
                total += crate::nn::matrix::squared_distance(proto, &centroid);
            }
        }
        Ok(self.config.lambda_anchor * total)
    }

    pub fn total_loss(&self, x: &Matrix, labels: &[f64], loss: &ClassLoss) -> Result<CpacLoss> {
        if x.rows() != labels.len() {
            return Err(Error::shape("cpac labels", x.rows(), labels.len()));
        }
        let classification = loss.evaluate(labels, &self.predict(x)?)?.value;
        let scale = self.scale_penalty();
        let anchor = self.anchor_penalty(x, labels)?;
        Ok(CpacLoss {
            classification,
            scale,
            anchor,
            total: classification + scale + anchor,
        })
    }

    /// Evaluates the total loss, accumulates parameter gradients and returns
    /// the gradient w.r.t. the input rows.
    pub fn forward_backward(
        &mut self,
        x: &Matrix,
        labels: &[f64],
        loss: &ClassLoss,
    ) -> Result<(CpacLoss, Matrix)> {
        if x.rows() != labels.len() {
            return Err(Error::shape("cpac labels", x.rows(), labels.len()));
        }
        self.ensure_grads();
        let f = self.forward(x)?;
        let lg = loss.evaluate(labels, &f.probs)?;
        let (n, d) = x.shape();
        let alpha = self.alpha();
        let mut dx = Matrix::zeros(n, d);
        let mut dw = Matrix::zeros(n, d);

        for r in 0..n {
            let q = f.probs[r];
            // dL/dscore where prob = sigmoid(score)
            let ds = lg.grad[r] * q * (1.0 - q);
            if ds == 0.0 {
                continue;
            }
            let (xr, wr) = (x.row(r), f.w.row(r));
            if self.config.use_prototypes {
                // score = d0 - d1
                for (proto, gp, sign) in [
                    (&self.p0, &mut self.grads.p0, 1.0),
                    (&self.p1, &mut self.grads.p1, -1.0),
                ] {
                    let dd = sign * ds;
                    let mut weighted = 0.0;
                    for j in 0..d {
                        let e = xr[j] - proto[j];
                        weighted += wr[j] * e * e;
                        let dxj = dd * 2.0 * alpha * wr[j] * e;
                        dx.row_mut(r)[j] += dxj;
                        gp[j] -= dxj;
                        dw.row_mut(r)[j] += dd * alpha * e * e;
                    }
                    self.grads.alpha[0] += dd * weighted;
                }
            } else {
                for j in 0..d {
                    let u = self.readout[j];
                    self.grads.readout[j] += ds * wr[j] * xr[j];
                    dw.set(r, j, ds * u * xr[j]);
                    dx.set(r, j, ds * u * wr[j]);
                }
                self.grads.readout_bias[0] += ds;
            }
        }

        if self.config.use_attention {
            let da = dw.zip_map(&f.w, |g, w| g * w * (1.0 - w))?;
            let gw2 = da.t_matmul(&f.hidden)?;
            let dh = da.matmul(&self.att_out.weight)?;
            let dpre = dh.zip_map(&f.pre, |g, p| if p > 0.0 { g } else { 0.0 })?;
            let gw1 = dpre.t_matmul(x)?;
            let dx_att = dpre.matmul(&self.att_in.weight)?;
            accumulate(&mut self.att_out, &gw2, &da);
            accumulate(&mut self.att_in, &gw1, &dpre);
            for (a, b) in dx.as_mut_slice().iter_mut().zip(dx_att.as_slice()) {
                *a += b;
            }
        }

        let scale = self.scale_penalty();
        self.grads.alpha[0] += 2.0 * self.config.lambda_scale * alpha;

        let mut anchor = 0.0;
        if self.config.use_prototypes && self.config.lambda_anchor > 0.0 {
            let la = self.config.lambda_anchor;
            for c in [0.0, 1.0] {
                let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                if idx.is_empty() {
                    continue;
                }
                let centroid = x.select_rows(&idx).column_means();
                let (proto, gp) = if c == 0.0 {
                    (&self.p0, &mut self.grads.p0)
                } else {
                    (&self.p1, &mut self.grads.p1)
                };
                anchor += la * crate::nn::matrix::squared_distance(proto, &centroid);
                let nc = idx.len() as f64;
                for j in 0..d {
                    let g = 2.0 * la * (proto[j] - centroid[j]);
                    gp[j] += g;
                    for &i in &idx {
                        dx.row_mut(i)[j] -= g / nc;
                    }
                }
            }
        }

        Ok((
            CpacLoss {
                classification: lg.value,
                scale,
                anchor,
                total: lg.value + scale + anchor,
            },
            dx,
        ))
    }

    /// Keeps the distance scale strictly positive.
    pub fn clamp_alpha(&mut self) {
        if self.alpha[0] < MIN_ALPHA {
            self.alpha[0] = MIN_ALPHA;
        }
    }

    pub fn explain(&self, row: &[f64]) -> Result<Explanation> {
        let x = Matrix::new(1, row.len(), row.to_vec())?;
        let f = self.forward(&x)?;
        let w = f.w.row(0).to_vec();
        let contrib = |p: &[f64]| -> Vec<f64> {
            row.iter()
                .zip(p)
                .zip(&w)
                .map(|((xi, pi), wi)| self.alpha() * wi * (xi - pi) * (xi - pi))
                .collect()
        };
        let (contributions0, contributions1) = if self.config.use_prototypes {
            (contrib(&self.p0), contrib(&self.p1))
        } else {
            (vec![], vec![])
        };
        Ok(Explanation {
            attention: w.clone(),
            d0: f.d0.first().copied().unwrap_or(0.0),
            d1: f.d1.first().copied().unwrap_or(0.0),
            prob: f.probs[0],
            contributions0,
            contributions1,
        })
    }

    fn ensure_grads(&mut self) {
        let d = self.dim();
        if self.grads.p0.len() != d {
            self.grads.p0 = vec![0.0; d];
            self.grads.p1 = vec![0.0; d];
            self.grads.readout = vec![0.0; d];
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new("cpac", serde_json::to_value(&self.config)?);
        ck.push_model("cpac", &mut self.clone())?;
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("cpac")?;
        let config: CpacConfig = serde_json::from_value(ck.config.clone())
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut params = Self::new(config, &mut ChaCha8Rng::seed_from_u64(0));
        ck.load_model("cpac", &mut params)?;
        Ok(params)
    }
}

fn accumulate(layer: &mut Dense, gw: &Matrix, dy: &Matrix) {
    let sums = dy.column_sums();
    let mut params = layer.params_mut();
    for (a, g) in params[0].grad.iter_mut().zip(gw.as_slice()) {
        *a += g;
    }
    for (a, g) in params[1].grad.iter_mut().zip(&sums) {
        *a += g;
    }
}

pub(crate) fn class_mean(x: &Matrix, labels: &[f64], class: f64) -> Option<Vec<f64>> {
    let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
    (!idx.is_empty()).then(|| x.select_rows(&idx).column_means())
}

impl Trainable for CpacParams {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.ensure_grads();
        let d = self.dim();
        let mut out = vec![
            ParamMut {
                name: "p0".into(),
                shape: vec![d],
                value: &mut self.p0,
                grad: &mut self.grads.p0,
            },
            ParamMut {
                name: "p1".into(),
                shape: vec![d],
                value: &mut self.p1,
                grad: &mut self.grads.p1,
            },
            ParamMut {
                name: "alpha".into(),
                shape: vec![1],
                value: &mut self.alpha,
                grad: &mut self.grads.alpha,
            },
            ParamMut {
                name: "readout".into(),
                shape: vec![d],
                value: &mut self.readout,
                grad: &mut self.grads.readout,
            },
            ParamMut {
                name: "readout_bias".into(),
                shape: vec![1],
                value: &mut self.readout_bias,
                grad: &mut self.grads.readout_bias,
            },
        ];
        out.extend(prefixed("att_in", self.att_in.params_mut()));
        out.extend(prefixed("att_out", self.att_out.params_mut()));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpacTrainConfig {
    pub loss: ClassLoss,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub score_weights: (f64, f64),
    pub lr: f64,
    pub seed: u64,
}

impl Default for CpacTrainConfig {
    fn default() -> Self {
        Self {
            loss: ClassLoss::Focal(FocalConfig::default()),
            epochs: 100,
            batch_size: 128,
            patience: 10,
            score_weights: (0.5, 0.5),
            lr: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct StandaloneOutcome {
    pub best: CpacParams,
    pub last: CpacParams,
    pub best_epoch: usize,
    pub best_score: f64,
    pub log: Vec<EpochLog>,
}

/// Trains a standalone classifier, checkpointing whenever the validation
/// composite score improves and stopping after `patience` epochs without gain.
pub fn train_standalone(
    mut params: CpacParams,
    train_x: &Matrix,
    train_y: &[u8],
    val_x: &Matrix,
    val_y: &[u8],
    cfg: &CpacTrainConfig,
) -> Result<StandaloneOutcome> {
    if (cfg.score_weights.0 + cfg.score_weights.1 - 1.0).abs() > 1e-12 {
        return Err(Error::Config("composite weights must sum to 1".into()));
    }
    if train_x.rows() != train_y.len() || val_x.rows() != val_y.len() {
        return Err(Error::shape("train_standalone", train_x.rows(), train_y.len()));
    }
    if !train_y.contains(&0) || !train_y.contains(&1) {
        return Err(Error::SingleClass("train_standalone"));
    }
    let y: Vec<f64> = train_y.iter().map(|&l| f64::from(l)).collect();
    params.init_prototypes(train_x, &y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut order: Vec<usize> = (0..train_x.rows()).collect();
    let batch = cfg.batch_size.max(1);

    let mut best = params.clone();
    let mut best_score = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut log = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let xb = train_x.select_rows(chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            let (l, _) = params.forward_backward(&xb, &yb, &cfg.loss)?;
            if !l.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    what: "cpac loss",
                    value: l.total,
                });
            }
            epoch_loss += l.total * chunk.len() as f64;
            opt.step(&mut params)?;
            params.clamp_alpha();
        }
        let probs = params.predict(val_x)?;
        let (precision, recall, _) = prf(&confusion(val_y, &probs, 0.5)?);
        let score = composite_weighted(precision, recall, cfg.score_weights);
        log.push(EpochLog {
            epoch,
            train_loss: epoch_loss / train_x.rows() as f64,
            precision,
            recall,
            score,
        });
        if score > best_score {
            best_score = score;
            best = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(StandaloneOutcome {
        best,
        last: params,
        best_epoch,
        best_score,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(dim: usize, seed: u64) -> CpacParams {
        CpacParams::new(CpacConfig::new(dim), &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn zero_attention_branch_gives_half() {
        let mut p = params(3, 1);
        p.att_in = Dense::zeros(3, p.config.hidden);
        p.att_out = Dense::zeros(p.config.hidden, 3);
        let w = p.attention(&Matrix::filled(4, 3, 2.5)).unwrap();
        assert!(w.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn weighted_distance_hand_values() {
        assert_eq!(weighted_distance(&[1.0, 2.0], &[1.0, 2.0], &[0.3, 0.9], 7.0).unwrap(), 0.0);
        assert_eq!(weighted_distance(&[1.0, 2.0], &[0.0, 0.0], &[1.0, 1.0], 1.0).unwrap(), 5.0);
        assert_eq!(weighted_distance(&[1.0, 2.0], &[0.0, 0.0], &[0.5, 0.5], 2.0).unwrap(), 5.0);
        assert!(weighted_distance(&[1.0], &[0.0, 0.0], &[1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn predict_symmetry_and_prototype_side() {
        assert_eq!(two_class_softmax(3.0, 3.0), 0.5);
        let mut p = params(2, 2);
        p.p1 = vec![1.0, 1.0];
        p.p0 = vec![-9.0, -9.0];
        let prob = p.predict(&Matrix::from_rows(&[[1.0, 1.0]]).unwrap()).unwrap()[0];
        assert!(prob > 0.5);
    }

    #[test]
    fn penalties() {
        let mut p = params(2, 3);
        let x = Matrix::from_rows(&[[0.0, 0.0], [2.0, 2.0], [5.0, 5.0]]).unwrap();
        let y = [0.0, 0.0, 1.0];
        p.p0 = vec![1.0, 1.0];
        p.p1 = vec![5.0, 5.0];
        assert_eq!(p.anchor_penalty(&x, &y).unwrap(), 0.0);
        p.alpha = [0.0];
        assert_eq!(p.scale_penalty(), 0.0);
        let only0 = Matrix::from_rows(&[[3.0, 1.0]]).unwrap();
        let a = p.anchor_penalty(&only0, &[0.0]).unwrap();
        assert!((a - 0.01 * 4.0).abs() < 1e-15);
    }

    #[test]
    fn no_penalty_total_equals_classification() {
        let mut p = params(2, 4);
        p.config = p.config.clone().without_penalties();
        let x = Matrix::from_rows(&[[0.3, -1.0], [2.0, 0.5]]).unwrap();
        let l = p.total_loss(&x, &[0.0, 1.0], &ClassLoss::Bce).unwrap();
        assert_eq!(l.total, l.classification);
    }

    #[test]
    fn alpha_clamped_positive() {
        let mut p = params(2, 5);
        p.alpha = [-3.0];
        p.clamp_alpha();
        assert_eq!(p.alpha(), MIN_ALPHA);
    }

    #[test]
    fn explain_matches_predict() {
        let p = params(4, 6);
        let row = [0.2, -1.0, 3.0, 0.0];
        let e = p.explain(&row).unwrap();
        let prob = p.predict(&Matrix::from_rows(&[row]).unwrap()).unwrap()[0];
        assert!((e.prob - prob).abs() < 1e-12);
        assert!(e.attention.iter().all(|&w| w > 0.0 && w < 1.0));
        let s0: f64 = e.contributions0.iter().sum();
        assert!((s0 - e.d0).abs() < 1e-12);
    }

    #[test]
    fn single_class_training_rejected() {
        let x = Matrix::zeros(4, 2);
        let r = train_standalone(params(2, 1), &x, &[0, 0, 0, 0], &x, &[0, 1, 0, 1], &CpacTrainConfig::default());
        assert!(matches!(r, Err(Error::SingleClass(_))));
    }
}
