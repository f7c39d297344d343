#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xaipipe::data::{ColumnMeta, Dataset, TaskKind};
use xaipipe::models::{ModelState, Predictor, TrainedModel};

pub fn names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("F{i}")).collect()
}

pub fn classification(x: Array2<f64>, y: &[usize]) -> Dataset {
    let k = y.iter().copied().max().unwrap_or(0).max(1) + 1;
    Dataset::new(
        x.clone(),
        y.iter().map(|&c| c as f64).collect(),
        names(x.ncols()).into_iter().map(ColumnMeta::numeric).collect(),
        TaskKind::Classification,
        (0..k).map(|c| c.to_string()).collect(),
        "class",
    )
    .unwrap()
}

pub fn regression(x: Array2<f64>, y: Array1<f64>) -> Dataset {
    Dataset::new(
        x.clone(),
        y,
        names(x.ncols()).into_iter().map(ColumnMeta::numeric).collect(),
        TaskKind::Regression,
        Vec::new(),
        "y",
    )
    .unwrap()
}

pub fn uniform(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |_| rng.gen::<f64>())
}

/// Central finite difference of `f` at `x` with step `h`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// Signs of every hidden pre-activation; empty for models without kinks.
pub fn relu_pattern(m: &TrainedModel, x: &[f64]) -> Vec<bool> {
    let ModelState::Mlp(mlp) = &m.state else {
        return Vec::new();
    };
    let mut a = (&Array1::from(x.to_vec()) - &mlp.scaler.mean) / &mlp.scaler.scale;
    let mut signs = Vec::new();
    for layer in &mlp.layers[..mlp.layers.len() - 1] {
        let s = a.dot(&layer.weights) + &layer.bias;
        signs.extend(s.iter().map(|&v| v > 0.0));
        a = s.mapv(|v| v.max(0.0));
    }
    signs
}

/// Worst gradient error over coordinates whose +-h segment stays on one
/// linear piece, and the number of coordinates compared.
pub fn gradient_check(m: &TrainedModel, probes: &Array2<f64>) -> (f64, usize) {
    const H: f64 = 1e-5;
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for q in probes.rows() {
        let x = q.as_slice().unwrap();
        let g = m.gradient(q).unwrap();
        let fd = finite_difference(|v| m.output_row(Array1::from(v.to_vec()).view()), x, H);
        for i in 0..x.len() {
            let (mut lo, mut hi) = (x.to_vec(), x.to_vec());
            lo[i] -= H;
            hi[i] += H;
            let centre = relu_pattern(m, x);
            if relu_pattern(m, &lo) != centre || relu_pattern(m, &hi) != centre {
                continue;
            }
            compared += 1;
            worst = worst.max((g[i] - fd[i]).abs());
        }
    }
    (worst, compared)
}
