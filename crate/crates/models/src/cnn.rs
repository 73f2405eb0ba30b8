//! Two temporal convolution blocks (same padding, ReLU, max-pool 2), global
//! average pooling over time and a dense readout. Channels are the input
//! depth.

use crate::error::check_batch;
use crate::lstm::row_sums;
use crate::nn::{cross_entropy, softmax_cols, uniform_matrix, Differentiable, Params, Standardizer};
use crate::optim::{fit_minibatch, LoopConfig, SgdConfig};
use crate::ModelError;
use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub kernel: usize,
    pub maps1: usize,
    pub maps2: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub schedule: LoopConfig,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            kernel: 7,
            maps1: 16,
            maps2: 32,
            seed: 0,
            schedule: LoopConfig { epochs: 15, batch_size: 32, sgd: SgdConfig { lr: 0.05, momentum: 0.9, clip_norm: 5.0 } },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    pub input_size: usize,
    pub kernel: usize,
    pub n_classes: usize,
    pub standardizer: Standardizer,
    /// `maps1 × (kernel · channels)`, column `k * channels + c`.
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub w_out: DMatrix<f64>,
    pub b_out: DVector<f64>,
}

struct Conv {
    cols: DMatrix<f64>,
    /// Post-ReLU activations, `maps × (batch · len)`.
    act: DMatrix<f64>,
    pooled: DMatrix<f64>,
    argmax: Vec<usize>,
    len: usize,
}

struct Trace {
    c1: Conv,
    c2: Conv,
    gap: DMatrix<f64>,
    probs: DMatrix<f64>,
}

/// Zero-padded patches: row `k * depth + c`, column `b * len + t` holds
/// `x_b[c, t + k - kernel/2]`.
fn im2col(x: &DMatrix<f64>, batch: usize, len: usize, kernel: usize) -> DMatrix<f64> {
    let depth = x.nrows();
    let half = kernel / 2;
    let mut cols = DMatrix::zeros(kernel * depth, batch * len);
    for b in 0..batch {
        for t in 0..len {
            let col = b * len + t;
            for k in 0..kernel {
                let src = t as isize + k as isize - half as isize;
                if src < 0 || src >= len as isize {
                    continue;
                }
                let src = b * len + src as usize;
                for c in 0..depth {
                    cols[(k * depth + c, col)] = x[(c, src)];
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im(dcols: &DMatrix<f64>, depth: usize, batch: usize, len: usize, kernel: usize) -> DMatrix<f64> {
    let half = kernel / 2;
    let mut dx = DMatrix::zeros(depth, batch * len);
    for b in 0..batch {
        for t in 0..len {
            let col = b * len + t;
            for k in 0..kernel {
                let src = t as isize + k as isize - half as isize;
                if src < 0 || src >= len as isize {
                    continue;
                }
                let src = b * len + src as usize;
                for c in 0..depth {
                    dx[(c, src)] += dcols[(k * depth + c, col)];
                }
            }
        }
    }
    dx
}

fn conv_block(x: &DMatrix<f64>, w: &DMatrix<f64>, bias: &DVector<f64>, batch: usize, len: usize, kernel: usize) -> Conv {
    let cols = im2col(x, batch, len, kernel);
    let mut act = w * &cols;
    for mut col in act.column_iter_mut() {
        col += bias;
        col.apply(|v| *v = v.max(0.0));
    }
    let out_len = len / 2;
    let maps = act.nrows();
    let mut pooled = DMatrix::zeros(maps, batch * out_len);
    let mut argmax = vec![0; maps * batch * out_len];
    for b in 0..batch {
        for p in 0..out_len {
            let (a, c) = (b * len + 2 * p, b * len + 2 * p + 1);
            for m in 0..maps {
                let src = if act[(m, c)] > act[(m, a)] { c } else { a };
                pooled[(m, b * out_len + p)] = act[(m, src)];
                argmax[(b * out_len + p) * maps + m] = src;
            }
        }
    }
    Conv { cols, act, pooled, argmax, len }
}

/// Routes a pooled-output gradient back through max-pool and ReLU.
fn unpool_relu(conv: &Conv, dpooled: &DMatrix<f64>) -> DMatrix<f64> {
    let maps = conv.act.nrows();
    let mut dact = DMatrix::zeros(maps, conv.act.ncols());
    for j in 0..dpooled.ncols() {
        for m in 0..maps {
            let src = conv.argmax[j * maps + m];
            if conv.act[(m, src)] > 0.0 {
                dact[(m, src)] += dpooled[(m, j)];
            }
        }
    }
    dact
}

impl CnnModel {
    pub fn new(input_size: usize, cfg: &CnnConfig, n_classes: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let he = |fan_in: usize| (6.0 / fan_in as f64).sqrt();
        Self {
            input_size,
            kernel: cfg.kernel,
            n_classes,
            standardizer: Standardizer::identity(input_size),
            w1: uniform_matrix(cfg.maps1, cfg.kernel * input_size, he(cfg.kernel * input_size), &mut rng),
            b1: DVector::zeros(cfg.maps1),
            w2: uniform_matrix(cfg.maps2, cfg.kernel * cfg.maps1, he(cfg.kernel * cfg.maps1), &mut rng),
            b2: DVector::zeros(cfg.maps2),
            w_out: uniform_matrix(n_classes, cfg.maps2, (1.0 / cfg.maps2 as f64).sqrt(), &mut rng),
            b_out: DVector::zeros(n_classes),
        }
    }

    /// Shortest window that survives both pooling stages.
    pub const MIN_LEN: usize = 4;

    fn forward(&self, windows: &[&DMatrix<f64>]) -> Trace {
        let batch = windows.len();
        let len = windows[0].ncols();
        let st = &self.standardizer;
        let mut x = DMatrix::zeros(self.input_size, batch * len);
        for (b, w) in windows.iter().enumerate() {
            for t in 0..len {
                for c in 0..self.input_size {
                    x[(c, b * len + t)] = (w[(c, t)] - st.mean[c]) * st.scale[c];
                }
            }
        }
        let c1 = conv_block(&x, &self.w1, &self.b1, batch, len, self.kernel);
        let c2 = conv_block(&c1.pooled, &self.w2, &self.b2, batch, len / 2, self.kernel);
        let out_len = len / 4;
        let maps = c2.pooled.nrows();
        let mut gap = DMatrix::zeros(maps, batch);
        for b in 0..batch {
            for m in 0..maps {
                gap[(m, b)] = c2.pooled.row(m).columns(b * out_len, out_len).sum() / out_len as f64;
            }
        }
        let mut logits = &self.w_out * &gap;
        for mut col in logits.column_iter_mut() {
            col += &self.b_out;
        }
        Trace { c1, c2, gap, probs: softmax_cols(&logits) }
    }

    pub fn predict_batch(&self, windows: &[&DMatrix<f64>]) -> DMatrix<f64> {
        self.forward(windows).probs
    }

    pub fn predict(&self, window: &DMatrix<f64>) -> Result<DVector<f64>, ModelError> {
        if window.nrows() != self.input_size || window.ncols() < Self::MIN_LEN {
            return Err(ModelError::Shape(format!(
                "CNN expects {} channels and at least {} samples, window is {}×{}",
                self.input_size,
                Self::MIN_LEN,
                window.nrows(),
                window.ncols()
            )));
        }
        Ok(self.predict_batch(&[window]).column(0).into_owned())
    }

    fn backward(&self, tr: &Trace, labels: &[usize]) -> (f64, Vec<f64>) {
        let batch = labels.len();
        let (loss, dlogits) = cross_entropy(&tr.probs, labels);
        let dw_out = &dlogits * tr.gap.transpose();
        let db_out = row_sums(&dlogits);
        let dgap = self.w_out.transpose() * &dlogits;
        let out_len = tr.c2.len / 2;
        let maps2 = dgap.nrows();
        let mut dp2 = DMatrix::zeros(maps2, batch * out_len);
        for b in 0..batch {
            for p in 0..out_len {
                for m in 0..maps2 {
                    dp2[(m, b * out_len + p)] = dgap[(m, b)] / out_len as f64;
                }
            }
        }
        let da2 = unpool_relu(&tr.c2, &dp2);
        let dw2 = &da2 * tr.c2.cols.transpose();
        let db2 = row_sums(&da2);
        let dcols2 = self.w2.transpose() * &da2;
        let dp1 = col2im(&dcols2, self.w1.nrows(), batch, tr.c2.len, self.kernel);
        let da1 = unpool_relu(&tr.c1, &dp1);
        let dw1 = &da1 * tr.c1.cols.transpose();
        let db1 = row_sums(&da1);
        let grad = [
            dw1.as_slice(),
            db1.as_slice(),
            dw2.as_slice(),
            db2.as_slice(),
            dw_out.as_slice(),
            db_out.as_slice(),
        ]
        .concat();
        (loss, grad)
    }
}

impl Params for CnnModel {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w1.as_slice(),
            self.b1.as_slice(),
            self.w2.as_slice(),
            self.b2.as_slice(),
            self.w_out.as_slice(),
            self.b_out.as_slice(),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
            self.w_out.as_mut_slice(),
            self.b_out.as_mut_slice(),
        ]
    }
}

impl Differentiable for CnnModel {
    fn loss_and_grad(&self, windows: &[&DMatrix<f64>], labels: &[usize], _rng: Option<&mut dyn RngCore>) -> (f64, Vec<f64>) {
        let tr = self.forward(windows);
        self.backward(&tr, labels)
    }

    fn loss(&self, windows: &[&DMatrix<f64>], labels: &[usize]) -> f64 {
        cross_entropy(&self.forward(windows).probs, labels).0
    }
}

pub fn train_cnn(
    windows: &[DMatrix<f64>],
    labels: &[usize],
    n_classes: usize,
    cfg: &CnnConfig,
) -> Result<(CnnModel, crate::lstm::TrainCurve), ModelError> {
    let (channels, len) = check_batch(windows, labels, n_classes)?;
    if len < CnnModel::MIN_LEN || cfg.kernel == 0 || cfg.kernel % 2 == 0 || cfg.maps1 == 0 || cfg.maps2 == 0 {
        return Err(ModelError::Config(format!(
            "window length {len} (min {}), kernel {} (odd), maps {}/{}",
            CnnModel::MIN_LEN,
            cfg.kernel,
            cfg.maps1,
            cfg.maps2
        )));
    }
    let mut model = CnnModel::new(channels, cfg, n_classes);
    model.standardizer = Standardizer::fit(windows);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xc0ffee);
    let epoch_loss = fit_minibatch(&mut model, windows, labels, &cfg.schedule, &mut rng)?;
    Ok((model, crate::lstm::TrainCurve { epoch_loss }))
}
