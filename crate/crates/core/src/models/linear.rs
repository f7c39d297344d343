use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::scaler::Scaler;
use super::{sigmoid, ModelConfig};
use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};

/// Linear model on standardized inputs.
///
/// Classification: one logistic unit per class (one-vs-rest, probabilities
/// renormalized) or a single unit for class 1 when binary. Regression: ridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub scaler: Scaler,
    /// `outputs x n_features`, in standardized units.
    pub weights: Array2<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    /// Weights expressed per unit of the raw (unstandardized) input.
    pub fn raw_weights(&self) -> Array2<f64> {
        &self.weights / &self.scaler.scale.view().insert_axis(ndarray::Axis(0))
    }

    fn margins(&self, z: ArrayView1<f64>) -> Vec<f64> {
        self.weights
            .rows()
            .into_iter()
            .zip(&self.bias)
            .map(|(w, b)| w.dot(&z) + b)
            .collect()
    }

    pub(crate) fn raw(&self, x: ArrayView2<f64>, task: TaskKind) -> Array2<f64> {
        let z = self.scaler.transform(x);
        let outputs = self.weights.nrows();
        let width = match task {
            TaskKind::Classification if outputs == 1 => 2,
            _ => outputs,
        };
        let mut out = Array2::zeros((z.nrows(), width));
        for (i, row) in z.rows().into_iter().enumerate() {
            let m = self.margins(row);
            match task {
                TaskKind::Regression => out[[i, 0]] = m[0],
                TaskKind::Classification if outputs == 1 => {
                    let p = sigmoid(m[0]);
                    out[[i, 0]] = 1.0 - p;
                    out[[i, 1]] = p;
                }
                TaskKind::Classification => {
                    let s: Vec<f64> = m.iter().map(|&v| sigmoid(v)).collect();
                    let total: f64 = s.iter().sum();
                    for (k, v) in s.iter().enumerate() {
                        out[[i, k]] = v / total;
                    }
                }
            }
        }
        out
    }

    pub(crate) fn gradient(&self, x: ArrayView1<f64>, task: TaskKind) -> Array1<f64> {
        let raw_w = self.raw_weights();
        let z = self.scaler.transform_row(x);
        let m = self.margins(z.view());
        match task {
            TaskKind::Regression => raw_w.row(0).to_owned(),
            TaskKind::Classification if m.len() == 1 => {
                let p = sigmoid(m[0]);
                raw_w.row(0).mapv(|w| p * (1.0 - p) * w)
            }
            TaskKind::Classification => {
                // p1 = s1 / Σ s_k with s_k = sigmoid(m_k)
                let s: Vec<f64> = m.iter().map(|&v| sigmoid(v)).collect();
                let total: f64 = s.iter().sum();
                let ds = |k: usize| raw_w.row(k).mapv(|w| s[k] * (1.0 - s[k]) * w);
                let mut dsum = Array1::zeros(raw_w.ncols());
                for k in 0..s.len() {
                    dsum += &ds(k);
                }
                (ds(1) * total - dsum * s[1]) / (total * total)
            }
        }
    }
}

/// Binary logistic regression by Newton's method on
/// `mean(logloss) + penalty/2 * |w|^2`, bias unpenalized.
fn newton_logistic(z: &DMatrix<f64>, y: &[f64], penalty: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let (n, d) = (z.nrows(), z.ncols());
    let mut beta = DVector::<f64>::zeros(d + 1);
    for _ in 0..max_iter {
        let mut grad = DVector::<f64>::zeros(d + 1);
        let mut hess = DMatrix::<f64>::zeros(d + 1, d + 1);
        let mut xi = DVector::<f64>::zeros(d + 1);
        for i in 0..n {
            for j in 0..d {
                xi[j] = z[(i, j)];
            }
            xi[d] = 1.0;
            let p = sigmoid(xi.dot(&beta));
            grad.axpy((p - y[i]) / n as f64, &xi, 1.0);
            hess.ger(p * (1.0 - p) / n as f64, &xi, &xi, 1.0);
        }
        for j in 0..d {
            grad[j] += penalty * beta[j];
            hess[(j, j)] += penalty;
        }
        // tiny ridge on the bias keeps separable single-feature data solvable
        hess[(d, d)] += 1e-12;
        let Some(step) = hess.cholesky().map(|c| c.solve(&grad)) else {
            break;
        };
        beta -= &step;
        if step.amax() < 1e-10 {
            break;
        }
    }
    (beta.iter().take(d).copied().collect(), beta[d])
}

pub(crate) fn fit(config: &ModelConfig, train: &Dataset) -> Result<Linear> {
    let c = config.f64_or("c", 1.0)?;
    if c <= 0.0 {
        return Err(Error::invalid("c must be positive"));
    }
    let max_iter = config.usize_or("max_iter", 100)?;
    let n = train.n_samples();
    let d = train.n_features();
    let penalty = 1.0 / (c * n as f64);
    let scaler = Scaler::fit(train.features.view());
    let zs = scaler.transform(train.features.view());
    let z = DMatrix::from_fn(n, d, |i, j| zs[[i, j]]);
    let y = train.target.to_vec();

    match train.task {
        TaskKind::Regression => {
            // standardized columns have zero mean, so the intercept is mean(y)
            let ym = y.iter().sum::<f64>() / n as f64;
            let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
            let mut a = z.transpose() * &z / n as f64;
            for j in 0..d {
                a[(j, j)] += penalty;
            }
            let b = z.transpose() * yc / n as f64;
            let w = a
                .cholesky()
                .ok_or_else(|| Error::invalid("singular ridge system"))?
                .solve(&b);
            Ok(Linear {
                scaler,
                weights: Array2::from_shape_vec((1, d), w.iter().copied().collect()).expect("shape"),
                bias: vec![ym],
            })
        }
        TaskKind::Classification => {
            let k = train.n_classes();
            let units: Vec<usize> = if k == 2 { vec![1] } else { (0..k).collect() };
            let mut weights = Array2::zeros((units.len(), d));
            let mut bias = Vec::with_capacity(units.len());
            for (r, &class) in units.iter().enumerate() {
                let yk: Vec<f64> = y.iter().map(|&t| if t as usize == class { 1.0 } else { 0.0 }).collect();
                let (w, b) = newton_logistic(&z, &yk, penalty, max_iter);
                weights.row_mut(r).assign(&Array1::from(w));
                bias.push(b);
            }
            Ok(Linear {
                scaler,
                weights,
                bias,
            })
        }
    }
}
