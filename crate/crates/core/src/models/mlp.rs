use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scaler::Scaler;
use super::{sigmoid, softmax_in_place, ModelConfig};
use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in x fan_out`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// ReLU hidden layers followed by a sigmoid (binary), softmax (multiclass)
/// or identity (regression) head. Regression targets are standardized
/// during training and mapped back on output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub scaler: Scaler,
    pub layers: Vec<Layer>,
    pub target_mean: f64,
    pub target_scale: f64,
}

impl Mlp {
    /// Pre-activations of every layer; the last entry holds the logits.
    fn forward(&self, z: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = z.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let s = a.dot(&layer.weights) + &layer.bias.view().insert_axis(Axis(0));
            if l + 1 < self.layers.len() {
                a = s.mapv(|v| v.max(0.0));
            }
            pre.push(s);
        }
        pre
    }

    pub(crate) fn raw(&self, x: ArrayView2<f64>, task: TaskKind) -> Array2<f64> {
        let z = self.scaler.transform(x);
        let logits = self.forward(z.view()).pop().expect("at least one layer");
        head(logits, task, self.target_mean, self.target_scale)
    }

    /// Gradient of the class-1 probability (or regression output) w.r.t. raw inputs.
    pub(crate) fn gradient(&self, x: ArrayView1<f64>, task: TaskKind) -> Array1<f64> {
        let z = self.scaler.transform_row(x).insert_axis(Axis(0));
        let pre = self.forward(z.view());
        let logits = pre.last().expect("layers").row(0).to_owned();
        let k = logits.len();
        let mut delta: Array1<f64> = match (task, k) {
            (TaskKind::Regression, _) => Array1::from_elem(1, self.target_scale),
            (TaskKind::Classification, 1) => {
                let p = sigmoid(logits[0]);
                Array1::from_elem(1, p * (1.0 - p))
            }
            (TaskKind::Classification, _) => {
                let mut p = logits.to_vec();
                softmax_in_place(&mut p);
                (0..k)
                    .map(|j| p[1] * (if j == 1 { 1.0 } else { 0.0 } - p[j]))
                    .collect()
            }
        };
        for l in (0..self.layers.len()).rev() {
            delta = self.layers[l].weights.dot(&delta);
            if l > 0 {
                let s = pre[l - 1].row(0);
                Zip::from(&mut delta).and(&s).for_each(|d, &v| {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
        }
        delta / &self.scaler.scale
    }
}

fn head(mut logits: Array2<f64>, task: TaskKind, mean: f64, scale: f64) -> Array2<f64> {
    match (task, logits.ncols()) {
        (TaskKind::Regression, _) => logits.mapv(|v| v * scale + mean),
        (TaskKind::Classification, 1) => {
            let mut out = Array2::zeros((logits.nrows(), 2));
            for (i, &m) in logits.column(0).iter().enumerate() {
                let p = sigmoid(m);
                out[[i, 0]] = 1.0 - p;
                out[[i, 1]] = p;
            }
            out
        }
        (TaskKind::Classification, _) => {
            for mut row in logits.rows_mut() {
                softmax_in_place(row.as_slice_mut().expect("contiguous"));
            }
            logits
        }
    }
}

struct Adam {
    m: Array2<f64>,
    v: Array2<f64>,
    mb: Array1<f64>,
    vb: Array1<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

pub(crate) fn fit(config: &ModelConfig, train: &Dataset) -> Result<Mlp> {
    let hidden = config.usize_or("hidden", 16)?;
    let n_layers = config.usize_or("layers", 1)?;
    let lr = config.f64_or("learning_rate", 0.01)?;
    let epochs = config.usize_or("epochs", 300)?;
    let l2 = config.f64_or("l2", 1e-4)?;
    if hidden == 0 || !(1..=2).contains(&n_layers) {
        return Err(Error::invalid("MLP needs hidden >= 1 and 1 or 2 hidden layers"));
    }

    let n = train.n_samples();
    let d = train.n_features();
    let scaler = Scaler::fit(train.features.view());
    let z = scaler.transform(train.features.view());

    let (out_dim, targets, target_mean, target_scale) = match train.task {
        TaskKind::Regression => {
            let y = &train.target;
            let mean = y.mean().unwrap_or(0.0);
            let sd = y.std(0.0);
            let scale = if sd > 0.0 { sd } else { 1.0 };
            (1, y.mapv(|v| (v - mean) / scale).insert_axis(Axis(1)), mean, scale)
        }
        TaskKind::Classification if train.n_classes() == 2 => {
            (1, train.target.clone().insert_axis(Axis(1)), 0.0, 1.0)
        }
        TaskKind::Classification => {
            let k = train.n_classes();
            let mut t = Array2::zeros((n, k));
            for (i, &c) in train.target.iter().enumerate() {
                t[[i, c as usize]] = 1.0;
            }
            (k, t, 0.0, 1.0)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dims = vec![d];
    dims.extend(std::iter::repeat_n(hidden, n_layers));
    dims.push(out_dim);
    let mut layers: Vec<Layer> = dims
        .windows(2)
        .map(|w| {
            let bound = (6.0 / w[0] as f64).sqrt();
            Layer {
                weights: Array2::from_shape_fn((w[0], w[1]), |_| rng.gen_range(-bound..bound)),
                bias: Array1::zeros(w[1]),
            }
        })
        .collect();
    let mut opt: Vec<Adam> = layers
        .iter()
        .map(|l| Adam {
            m: Array2::zeros(l.weights.raw_dim()),
            v: Array2::zeros(l.weights.raw_dim()),
            mb: Array1::zeros(l.bias.len()),
            vb: Array1::zeros(l.bias.len()),
        })
        .collect();

    let mut mlp = Mlp {
        scaler,
        layers: Vec::new(),
        target_mean,
        target_scale,
    };
    for epoch in 1..=epochs {
        mlp.layers = std::mem::take(&mut layers);
        let pre = mlp.forward(z.view());
        layers = std::mem::take(&mut mlp.layers);

        let logits = pre.last().expect("layers").clone();
        let out = match train.task {
            TaskKind::Regression => logits,
            TaskKind::Classification if out_dim == 1 => logits.mapv(sigmoid),
            TaskKind::Classification => head(logits, train.task, 0.0, 1.0),
        };
        let mut delta = (out - &targets) / n as f64;

        let t = epoch as i32;
        for l in (0..layers.len()).rev() {
            let input = if l == 0 {
                z.clone()
            } else {
                pre[l - 1].mapv(|v| v.max(0.0))
            };
            let gw = input.t().dot(&delta) + &(&layers[l].weights * l2);
            let gb = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&layers[l].weights.t());
                Zip::from(&mut back).and(&pre[l - 1]).for_each(|b, &s| {
                    if s <= 0.0 {
                        *b = 0.0;
                    }
                });
                delta = back;
            }
            let st = &mut opt[l];
            let c1 = 1.0 - BETA1.powi(t);
            let c2 = 1.0 - BETA2.powi(t);
            Zip::from(&mut layers[l].weights)
                .and(&mut st.m)
                .and(&mut st.v)
                .and(&gw)
                .for_each(|w, m, v, &g| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                });
            Zip::from(&mut layers[l].bias)
                .and(&mut st.mb)
                .and(&mut st.vb)
                .and(&gb)
                .for_each(|w, m, v, &g| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                });
        }
    }
    mlp.layers = layers;
    Ok(mlp)
}
