//! Dense layers with hand-written backward passes.
//!
//! Every layer caches what its backward pass needs during a training-mode
//! forward call. `infer` paths never touch the cache, so a frozen model can
//! be shared behind `&`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

/// Mutable view of one parameter tensor and its gradient accumulator.
pub struct ParamMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

/// Anything with trainable parameters.
///
/// Parameter order must be stable: optimizers key their moment buffers on it.
pub trait Trainable {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>>;

    /// Non-trainable state that still belongs in a checkpoint (running stats).
    fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        Vec::new()
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.value.len()).sum()
    }

    /// Flattened copy of all parameter values, in `params_mut` order.
    fn flat_params(&mut self) -> Vec<f64> {
        self.params_mut()
            .into_iter()
            .flat_map(|p| p.value.to_vec())
            .collect()
    }

    fn flat_grads(&mut self) -> Vec<f64> {
        self.params_mut()
            .into_iter()
            .flat_map(|p| p.grad.to_vec())
            .collect()
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, params: Vec<ParamMut<'a>>) -> Vec<ParamMut<'a>> {
    params
        .into_iter()
        .map(|mut p| {
            p.name = format!("{prefix}.{}", p.name);
            p
        })
        .collect()
}

/// Uniform Glorot initialisation bound.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fully connected layer computing `y = x W^T + b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    #[serde(skip)]
    grad_w: Option<Matrix>,
    #[serde(skip)]
    grad_b: Vec<f64>,
    #[serde(skip)]
    input: Option<Matrix>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = glorot_bound(in_dim, out_dim);
        let data = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self::from_parts(
            Matrix::new(out_dim, in_dim, data).expect("sized above"),
            vec![0.0; out_dim],
        )
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self::from_parts(Matrix::zeros(out_dim, in_dim), vec![0.0; out_dim])
    }

    pub fn from_parts(weight: Matrix, bias: Vec<f64>) -> Self {
        assert_eq!(weight.rows(), bias.len(), "bias length must equal out dim");
        let grad_b = vec![0.0; bias.len()];
        Self {
            grad_w: Some(Matrix::zeros(weight.rows(), weight.cols())),
            weight,
            bias,
            grad_b,
            input: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape("dense forward", self.in_dim(), x.cols()));
        }
        let mut y = x.matmul_t(&self.weight)?;
        y.add_row_vector(&self.bias);
        Ok(y)
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, dy: &Matrix) -> Result<Matrix> {
        let x = self
            .input
            .as_ref()
            .ok_or(Error::Config("dense backward called before forward".into()))?;
        if dy.cols() != self.out_dim() || dy.rows() != x.rows() {
            return Err(Error::shape(
                "dense backward",
                format!("{}x{}", x.rows(), self.out_dim()),
                format!("{}x{}", dy.rows(), dy.cols()),
            ));
        }
        let gw = dy.t_matmul(x)?;
        self.ensure_grads();
        let acc = self.grad_w.as_mut().expect("ensured");
        for (a, g) in acc.as_mut_slice().iter_mut().zip(gw.as_slice()) {
            *a += g;
        }
        for (a, g) in self.grad_b.iter_mut().zip(dy.column_sums()) {
            *a += g;
        }
        dy.matmul(&self.weight)
    }

    fn ensure_grads(&mut self) {
        if self.grad_w.is_none() {
            self.grad_w = Some(Matrix::zeros(self.weight.rows(), self.weight.cols()));
        }
        if self.grad_b.len() != self.bias.len() {
            self.grad_b = vec![0.0; self.bias.len()];
        }
    }
}

impl Trainable for Dense {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.ensure_grads();
        let shape = vec![self.weight.rows(), self.weight.cols()];
        let out = self.bias.len();
        vec![
            ParamMut {
                name: "weight".into(),
                shape,
                value: self.weight.as_mut_slice(),
                grad: self.grad_w.as_mut().expect("ensured").as_mut_slice(),
            },
            ParamMut {
                name: "bias".into(),
                shape: vec![out],
                value: &mut self.bias,
                grad: &mut self.grad_b,
            },
        ]
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(sigmoid_scalar)
}

/// Row-wise softmax, max-shifted.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Batch normalisation over the feature axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    #[serde(skip)]
    grad_gamma: Vec<f64>,
    #[serde(skip)]
    grad_beta: Vec<f64>,
    #[serde(skip)]
    cache: Option<(Matrix, Vec<f64>)>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: 0.1,
            eps: 1e-5,
            grad_gamma: vec![0.0; dim],
            grad_beta: vec![0.0; dim],
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::shape("batchnorm", self.dim(), x.cols()));
        }
        let mut y = x.clone();
        for r in 0..y.rows() {
            for (j, v) in y.row_mut(r).iter_mut().enumerate() {
                let xhat = (*v - self.running_mean[j]) / (self.running_var[j] + self.eps).sqrt();
                *v = self.gamma[j] * xhat + self.beta[j];
            }
        }
        Ok(y)
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        if mode == Mode::Infer {
            return self.infer(x);
        }
        if x.cols() != self.dim() {
            return Err(Error::shape("batchnorm", self.dim(), x.cols()));
        }
        let n = x.rows();
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 1, got: n });
        }
        let mean = x.column_means();
        let mut var = vec![0.0; self.dim()];
        for row in x.iter_rows() {
            for (j, v) in row.iter().enumerate() {
                var[j] += (v - mean[j]).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = x.clone();
        for r in 0..n {
            for (j, v) in xhat.row_mut(r).iter_mut().enumerate() {
                *v = (*v - mean[j]) * inv_std[j];
            }
        }
        let mut y = xhat.clone();
        for r in 0..n {
            for (j, v) in y.row_mut(r).iter_mut().enumerate() {
                *v = self.gamma[j] * *v + self.beta[j];
            }
        }
        let unbiased = n as f64 / (n as f64 - 1.0);
        for j in 0..self.dim() {
            self.running_mean[j] = (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
            self.running_var[j] =
                (1.0 - self.momentum) * self.running_var[j] + self.momentum * var[j] * unbiased;
        }
        self.cache = Some((xhat, inv_std));
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Matrix) -> Result<Matrix> {
        let (xhat, inv_std) = self
            .cache
            .as_ref()
            .ok_or(Error::Config("batchnorm backward called before forward".into()))?;
        let n = xhat.rows() as f64;
        let d = self.dim();
        if self.grad_gamma.len() != d {
            self.grad_gamma = vec![0.0; d];
            self.grad_beta = vec![0.0; d];
        }
        let mut sum_dy = vec![0.0; d];
        let mut sum_dy_xhat = vec![0.0; d];
        for r in 0..xhat.rows() {
            for j in 0..d {
                let g = dy.get(r, j);
                sum_dy[j] += g;
                sum_dy_xhat[j] += g * xhat.get(r, j);
            }
        }
        for j in 0..d {
            self.grad_gamma[j] += sum_dy_xhat[j];
            self.grad_beta[j] += sum_dy[j];
        }
        let mut dx = Matrix::zeros(xhat.rows(), d);
        for r in 0..xhat.rows() {
            for j in 0..d {
                let g = dy.get(r, j);
                let v = self.gamma[j] * inv_std[j] / n
                    * (n * g - sum_dy[j] - xhat.get(r, j) * sum_dy_xhat[j]);
                dx.set(r, j, v);
            }
        }
        Ok(dx)
    }
}

impl Trainable for BatchNorm {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let d = self.dim();
        if self.grad_gamma.len() != d {
            self.grad_gamma = vec![0.0; d];
            self.grad_beta = vec![0.0; d];
        }
        vec![
            ParamMut {
                name: "gamma".into(),
                shape: vec![d],
                value: &mut self.gamma,
                grad: &mut self.grad_gamma,
            },
            ParamMut {
                name: "beta".into(),
                shape: vec![d],
                value: &mut self.beta,
                grad: &mut self.grad_beta,
            },
        ]
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        vec![
            ("running_mean".into(), &mut self.running_mean),
            ("running_var".into(), &mut self.running_var),
        ]
    }
}

/// Inverted dropout; identity in inference mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dropout {
    pub p: f64,
    seed: u64,
    #[serde(skip, default = "default_rng")]
    rng: ChaCha8Rng,
    #[serde(skip)]
    mask: Option<Vec<f64>>,
}

fn default_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

impl Dropout {
    pub fn new(p: f64, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout p must lie in [0, 1)");
        Self {
            p,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        }
    }

    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Matrix {
        if mode == Mode::Infer || self.p == 0.0 {
            self.mask = None;
            return x.clone();
        }
        let keep = 1.0 - self.p;
        let mask: Vec<f64> = (0..x.as_slice().len())
            .map(|_| {
                if self.rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mut y = x.clone();
        for (v, m) in y.as_mut_slice().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        y
    }

    pub fn backward(&self, dy: &Matrix) -> Matrix {
        match &self.mask {
            None => dy.clone(),
            Some(mask) => {
                let mut dx = dy.clone();
                for (v, m) in dx.as_mut_slice().iter_mut().zip(mask) {
                    *v *= m;
                }
                dx
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Layer {
    Dense(Dense),
    Relu {
        #[serde(skip)]
        mask: Option<Vec<bool>>,
    },
    Sigmoid {
        #[serde(skip)]
        out: Option<Matrix>,
    },
    BatchNorm(BatchNorm),
    Dropout(Dropout),
}

impl Layer {
    pub fn relu() -> Self {
        Layer::Relu { mask: None }
    }

    pub fn sigmoid() -> Self {
        Layer::Sigmoid { out: None }
    }

    fn infer(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Dense(d) => d.infer(x),
            Layer::Relu { .. } => Ok(relu(x)),
            Layer::Sigmoid { .. } => Ok(sigmoid(x)),
            Layer::BatchNorm(bn) => bn.infer(x),
            Layer::Dropout(_) => Ok(x.clone()),
        }
    }

    fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        match self {
            Layer::Dense(d) => d.forward(x),
            Layer::Relu { mask } => {
                *mask = Some(x.as_slice().iter().map(|&v| v > 0.0).collect());
                Ok(relu(x))
            }
            Layer::Sigmoid { out } => {
                let y = sigmoid(x);
                *out = Some(y.clone());
                Ok(y)
            }
            Layer::BatchNorm(bn) => bn.forward(x, mode),
            Layer::Dropout(dr) => Ok(dr.forward(x, mode)),
        }
    }

    fn backward(&mut self, dy: &Matrix) -> Result<Matrix> {
        let missing = || Error::Config("backward called before forward".into());
        match self {
            Layer::Dense(d) => d.backward(dy),
            Layer::Relu { mask } => {
                let mask = mask.as_ref().ok_or_else(missing)?;
                let mut dx = dy.clone();
                for (v, &on) in dx.as_mut_slice().iter_mut().zip(mask) {
                    if !on {
                        *v = 0.0;
                    }
                }
                Ok(dx)
            }
            Layer::Sigmoid { out } => {
                let y = out.as_ref().ok_or_else(missing)?;
                dy.zip_map(y, |g, s| g * s * (1.0 - s))
            }
            Layer::BatchNorm(bn) => bn.backward(dy),
            Layer::Dropout(dr) => Ok(dr.backward(dy)),
        }
    }
}

/// A stack of layers applied in order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    /// Dense layers of the given widths with ReLU between them; no activation
    /// after the last layer.
    pub fn mlp<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            layers.push(Layer::Dense(Dense::new(pair[0], pair[1], rng)));
            if i + 2 < widths.len() {
                layers.push(Layer::relu());
            }
        }
        Self { layers }
    }

    pub fn in_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Dense(d) => Some(d.in_dim()),
            _ => None,
        })
    }

    pub fn out_dim(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer::Dense(d) => Some(d.out_dim()),
            _ => None,
        })
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.infer(&h)?;
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, mode)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, dy: &Matrix) -> Result<Matrix> {
        let mut g = dy.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }
}

impl Trainable for Sequential {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            match l {
                Layer::Dense(d) => out.extend(prefixed(&format!("{i}"), d.params_mut())),
                Layer::BatchNorm(bn) => out.extend(prefixed(&format!("{i}"), bn.params_mut())),
                _ => {}
            }
        }
        out
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            if let Layer::BatchNorm(bn) = l {
                out.extend(
                    bn.buffers_mut()
                        .into_iter()
                        .map(|(n, b)| (format!("{i}.{n}"), b)),
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_affine_identity() {
        let mut layer = Dense::from_parts(Matrix::zeros(2, 3), vec![1.5, -2.0]);
        let y = layer.forward(&Matrix::filled(4, 3, 7.0)).unwrap();
        for row in y.iter_rows() {
            assert_eq!(row, &[1.5, -2.0]);
        }
        let layer = Dense::from_parts(Matrix::column(&[2.0]), vec![1.0]);
        assert_eq!(layer.infer(&Matrix::column(&[3.0])).unwrap().as_slice(), &[7.0]);
    }

    #[test]
    fn dense_shape_mismatch() {
        let mut layer = Dense::zeros(3, 2);
        assert!(layer.forward(&Matrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn activations() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        let r = relu(&Matrix::from_rows(&[[-3.0, 3.0]]).unwrap());
        assert_eq!(r.as_slice(), &[0.0, 3.0]);
        let s = softmax(&Matrix::from_rows(&[[4.2, 4.2]]).unwrap());
        assert_eq!(s.as_slice(), &[0.5, 0.5]);
        assert!(sigmoid_scalar(-800.0) >= 0.0 && sigmoid_scalar(800.0) <= 1.0);
    }

    #[test]
    fn batchnorm_train_mode_hand_value() {
        let mut bn = BatchNorm::new(1);
        let y = bn.forward(&Matrix::column(&[1.0, 3.0]), Mode::Train).unwrap();
        let s = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.get(0, 0) + s).abs() < 1e-12);
        assert!((y.get(1, 0) - s).abs() < 1e-12);
        assert!((y.get(0, 0) + 1.0).abs() < 1e-5);
    }

    #[test]
    fn batchnorm_rejects_single_row_in_train() {
        let mut bn = BatchNorm::new(2);
        assert!(bn.forward(&Matrix::zeros(1, 2), Mode::Train).is_err());
        assert!(bn.forward(&Matrix::zeros(1, 2), Mode::Infer).is_ok());
    }

    #[test]
    fn dropout_identities() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let mut d0 = Dropout::new(0.0, 1);
        assert_eq!(d0.forward(&x, Mode::Train), x);
        assert_eq!(d0.forward(&x, Mode::Infer), x);
        let mut d = Dropout::new(0.2, 1);
        assert_eq!(d.forward(&x, Mode::Infer), x);
    }
}
