//! Single-layer LSTM over the time axis of a window, read out from the last
//! hidden state.

use crate::error::check_batch;
use crate::nn::{cross_entropy, sigmoid, softmax_cols, uniform_matrix, Differentiable, Params, Standardizer};
use crate::optim::{fit_minibatch, LoopConfig, SgdConfig};
use crate::ModelError;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub hidden_size: usize,
    pub dropout: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub schedule: LoopConfig,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_size: 64,
            dropout: 0.2,
            seed: 0,
            schedule: LoopConfig { epochs: 12, batch_size: 32, sgd: SgdConfig { lr: 0.1, momentum: 0.9, clip_norm: 5.0 } },
        }
    }
}

/// Gate rows are stacked input, forget, cell, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub input_size: usize,
    pub hidden_size: usize,
    pub n_classes: usize,
    pub dropout: f64,
    pub standardizer: Standardizer,
    pub w_x: DMatrix<f64>,
    pub w_h: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub w_out: DMatrix<f64>,
    pub b_out: DVector<f64>,
}

struct Trace {
    x_all: DMatrix<f64>,
    gates: Vec<DMatrix<f64>>,
    cells: Vec<DMatrix<f64>>,
    hidden: Vec<DMatrix<f64>>,
    mask: Option<DMatrix<f64>>,
    probs: DMatrix<f64>,
}

impl LstmModel {
    pub fn new(input_size: usize, hidden_size: usize, n_classes: usize, dropout: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / (hidden_size as f64).sqrt();
        let mut bias = DVector::zeros(4 * hidden_size);
        bias.rows_mut(hidden_size, hidden_size).fill(1.0);
        Self {
            input_size,
            hidden_size,
            n_classes,
            dropout,
            standardizer: Standardizer::identity(input_size),
            w_x: uniform_matrix(4 * hidden_size, input_size, s, &mut rng),
            w_h: uniform_matrix(4 * hidden_size, hidden_size, s, &mut rng),
            bias,
            w_out: uniform_matrix(n_classes, hidden_size, s, &mut rng),
            b_out: DVector::zeros(n_classes),
        }
    }

    /// Stacks standardized windows as `channels × (steps · batch)`, column
    /// `t * batch + b`.
    fn stack(&self, windows: &[&DMatrix<f64>]) -> DMatrix<f64> {
        let b = windows.len();
        let steps = windows[0].ncols();
        let st = &self.standardizer;
        let mut x = DMatrix::zeros(self.input_size, steps * b);
        for (j, w) in windows.iter().enumerate() {
            for t in 0..steps {
                for c in 0..self.input_size {
                    x[(c, t * b + j)] = (w[(c, t)] - st.mean[c]) * st.scale[c];
                }
            }
        }
        x
    }

    fn forward(&self, windows: &[&DMatrix<f64>], rng: Option<&mut dyn RngCore>) -> Trace {
        let h = self.hidden_size;
        let b = windows.len();
        let steps = windows[0].ncols();
        let x_all = self.stack(windows);
        let zx = &self.w_x * &x_all;
        let mut gates = Vec::with_capacity(steps);
        let mut cells = Vec::with_capacity(steps);
        let mut hidden = Vec::with_capacity(steps);
        let mut h_prev = DMatrix::zeros(h, b);
        let mut c_prev = DMatrix::<f64>::zeros(h, b);
        for t in 0..steps {
            let mut z = zx.columns(t * b, b).into_owned();
            z.gemm(1.0, &self.w_h, &h_prev, 1.0);
            let mut c = DMatrix::zeros(h, b);
            let mut hn = DMatrix::zeros(h, b);
            let zbuf = z.as_mut_slice();
            for j in 0..b {
                let zs = &mut zbuf[j * 4 * h..(j + 1) * 4 * h];
                for k in 0..h {
                    let i = sigmoid(zs[k] + self.bias[k]);
                    let f = sigmoid(zs[h + k] + self.bias[h + k]);
                    let g = (zs[2 * h + k] + self.bias[2 * h + k]).tanh();
                    let o = sigmoid(zs[3 * h + k] + self.bias[3 * h + k]);
                    zs[k] = i;
                    zs[h + k] = f;
                    zs[2 * h + k] = g;
                    zs[3 * h + k] = o;
                    let cv = f * c_prev[(k, j)] + i * g;
                    c[(k, j)] = cv;
                    hn[(k, j)] = o * cv.tanh();
                }
            }
            gates.push(z);
            cells.push(c.clone());
            hidden.push(hn.clone());
            h_prev = hn;
            c_prev = c;
        }
        let mask = match rng {
            Some(rng) if self.dropout > 0.0 => {
                let keep = 1.0 - self.dropout;
                Some(DMatrix::from_fn(h, b, |_, _| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }))
            }
            _ => None,
        };
        let last = match &mask {
            Some(m) => h_prev.component_mul(m),
            None => h_prev,
        };
        let mut logits = &self.w_out * &last;
        for mut col in logits.column_iter_mut() {
            col += &self.b_out;
        }
        Trace { x_all, gates, cells, hidden, mask, probs: softmax_cols(&logits) }
    }

    /// Class probabilities, one column per window.
    pub fn predict_batch(&self, windows: &[&DMatrix<f64>]) -> DMatrix<f64> {
        self.forward(windows, None).probs
    }

    pub fn predict(&self, window: &DMatrix<f64>) -> Result<DVector<f64>, ModelError> {
        if window.nrows() != self.input_size || window.ncols() == 0 {
            return Err(ModelError::Shape(format!(
                "LSTM expects {} channels, window is {}×{}",
                self.input_size,
                window.nrows(),
                window.ncols()
            )));
        }
        Ok(self.predict_batch(&[window]).column(0).into_owned())
    }

    fn backward(&self, tr: &Trace, labels: &[usize]) -> (f64, Vec<f64>) {
        let h = self.hidden_size;
        let b = labels.len();
        let steps = tr.gates.len();
        let (loss, dlogits) = cross_entropy(&tr.probs, labels);
        let h_last = tr.hidden.last().unwrap();
        let last = match &tr.mask {
            Some(m) => h_last.component_mul(m),
            None => h_last.clone(),
        };
        let dw_out = &dlogits * last.transpose();
        let db_out = row_sums(&dlogits);
        let mut dh = self.w_out.transpose() * &dlogits;
        if let Some(m) = &tr.mask {
            dh.component_mul_assign(m);
        }
        let mut dc = DMatrix::<f64>::zeros(h, b);
        let mut dz_all = DMatrix::<f64>::zeros(4 * h, steps * b);
        let mut dw_h = DMatrix::<f64>::zeros(4 * h, h);
        let zeros = DMatrix::<f64>::zeros(h, b);
        for t in (0..steps).rev() {
            let g = &tr.gates[t];
            let c = &tr.cells[t];
            let c_prev = if t > 0 { &tr.cells[t - 1] } else { &zeros };
            let h_prev = if t > 0 { &tr.hidden[t - 1] } else { &zeros };
            let mut dz = DMatrix::<f64>::zeros(4 * h, b);
            for j in 0..b {
                for k in 0..h {
                    let (i, f, gg, o) = (g[(k, j)], g[(h + k, j)], g[(2 * h + k, j)], g[(3 * h + k, j)]);
                    let tc = c[(k, j)].tanh();
                    let dhv = dh[(k, j)];
                    let dcv = dc[(k, j)] + dhv * o * (1.0 - tc * tc);
                    dz[(k, j)] = dcv * gg * i * (1.0 - i);
                    dz[(h + k, j)] = dcv * c_prev[(k, j)] * f * (1.0 - f);
                    dz[(2 * h + k, j)] = dcv * i * (1.0 - gg * gg);
                    dz[(3 * h + k, j)] = dhv * tc * o * (1.0 - o);
                    dc[(k, j)] = dcv * f;
                }
            }
            dw_h.gemm(1.0, &dz, &h_prev.transpose(), 1.0);
            dh = self.w_h.transpose() * &dz;
            dz_all.columns_mut(t * b, b).copy_from(&dz);
        }
        let dw_x = &dz_all * tr.x_all.transpose();
        let dbias = row_sums(&dz_all);
        let grad = [dw_x.as_slice(), dw_h.as_slice(), dbias.as_slice(), dw_out.as_slice(), db_out.as_slice()].concat();
        (loss, grad)
    }
}

pub(crate) fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum()))
}

impl Params for LstmModel {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w_x.as_slice(), self.w_h.as_slice(), self.bias.as_slice(), self.w_out.as_slice(), self.b_out.as_slice()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_x.as_mut_slice(),
            self.w_h.as_mut_slice(),
            self.bias.as_mut_slice(),
            self.w_out.as_mut_slice(),
            self.b_out.as_mut_slice(),
        ]
    }
}

impl Differentiable for LstmModel {
    fn loss_and_grad(&self, windows: &[&DMatrix<f64>], labels: &[usize], rng: Option<&mut dyn RngCore>) -> (f64, Vec<f64>) {
        let tr = self.forward(windows, rng);
        self.backward(&tr, labels)
    }

    fn loss(&self, windows: &[&DMatrix<f64>], labels: &[usize]) -> f64 {
        cross_entropy(&self.forward(windows, None).probs, labels).0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainCurve {
    pub epoch_loss: Vec<f64>,
}

pub fn train_lstm(
    windows: &[DMatrix<f64>],
    labels: &[usize],
    n_classes: usize,
    cfg: &LstmConfig,
) -> Result<(LstmModel, TrainCurve), ModelError> {
    let (channels, _) = check_batch(windows, labels, n_classes)?;
    if cfg.hidden_size == 0 || !(0.0..1.0).contains(&cfg.dropout) {
        return Err(ModelError::Config(format!("hidden_size {} / dropout {}", cfg.hidden_size, cfg.dropout)));
    }
    let mut model = LstmModel::new(channels, cfg.hidden_size, n_classes, cfg.dropout, cfg.seed);
    model.standardizer = Standardizer::fit(windows);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_1500);
    let epoch_loss = fit_minibatch(&mut model, windows, labels, &cfg.schedule, &mut rng)?;
    Ok((model, TrainCurve { epoch_loss }))
}
