use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::check_width;
use crate::error::{Error, Result};
use crate::models::Predictor;

/// Kernel Shapley values for one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapValues {
    pub values: Vec<f64>,
    /// Mean model output over the background set.
    pub base_value: f64,
    /// Model output at the query point.
    pub output: f64,
    /// Whether every coalition was enumerated.
    pub exact: bool,
}

/// Rows of coalitions evaluated per model call.
const CHUNK_ROWS: usize = 1 << 15;

/// Interventional Kernel SHAP against a background sample.
///
/// Features whose value equals every background value cannot change the
/// output and get exactly zero. Over the remaining `m` features, all `2^m`
/// coalitions are enumerated when `2^m <= budget`, otherwise `budget`
/// coalitions are drawn from the Shapley kernel in complementary pairs.
/// The efficiency constraint `sum(values) = output - base_value` is imposed
/// exactly by eliminating the last active feature.
pub fn kernel_shap(
    model: &dyn Predictor,
    x: ArrayView1<f64>,
    background: ArrayView2<f64>,
    budget: usize,
    seed: u64,
) -> Result<ShapValues> {
    let d = x.len();
    check_width(model, d)?;
    if background.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            got: background.ncols(),
        });
    }
    if background.nrows() == 0 {
        return Err(Error::invalid("empty background set"));
    }

    let output = model.output(x.insert_axis(ndarray::Axis(0))).get(0).copied().unwrap_or(0.0);
    let base_value = model.output(background).mean().unwrap_or(0.0);
    let mut values = vec![0.0; d];
    let active: Vec<usize> = (0..d)
        .filter(|&j| background.column(j).iter().any(|&b| b != x[j]))
        .collect();
    let m = active.len();
    let delta = output - base_value;
    let exact_possible = m < usize::BITS as usize - 1 && (1usize << m) <= budget;

    match m {
        0 => return Ok(ShapValues { values, base_value, output, exact: true }),
        1 => {
            values[active[0]] = delta;
            return Ok(ShapValues { values, base_value, output, exact: true });
        }
        _ => {}
    }
    if !exact_possible && budget < m + 2 {
        return Err(Error::invalid(format!(
            "shap budget {budget} too small for {m} varying features (need at least {})",
            m + 2
        )));
    }

    let (masks, weights) = if exact_possible {
        exact_coalitions(m)
    } else {
        sampled_coalitions(m, budget, seed)
    };
    let v = coalition_values(model, x, background, &active, &masks);

    // y_z - z_last * delta ~ sum_{i<last} phi_i (z_i - z_last)
    let p = m - 1;
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for ((mask, &w), &vz) in masks.iter().zip(&weights).zip(&v) {
        let zl = f64::from(u8::from(mask[p]));
        for (i, r) in row.iter_mut().enumerate() {
            *r = f64::from(u8::from(mask[i])) - zl;
        }
        let target = vz - base_value - zl * delta;
        for i in 0..p {
            if row[i] == 0.0 {
                continue;
            }
            b[i] += w * row[i] * target;
            for k in 0..p {
                a[(i, k)] += w * row[i] * row[k];
            }
        }
    }
    let phi = match a.clone().cholesky() {
        Some(c) => c.solve(&b),
        None => a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::invalid(format!("shap regression failed: {e}")))?,
    };
    let mut rest = delta;
    for (i, &j) in active[..p].iter().enumerate() {
        values[j] = phi[i];
        rest -= phi[i];
    }
    values[active[p]] = rest;
    Ok(ShapValues {
        values,
        base_value,
        output,
        exact: exact_possible,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of a coalition of size `s` out of `m`.
fn kernel_weight(m: usize, s: usize) -> f64 {
    (m - 1) as f64 / (binomial(m, s) * s as f64 * (m - s) as f64)
}

fn exact_coalitions(m: usize) -> (Vec<Vec<bool>>, Vec<f64>) {
    let total = 1usize << m;
    let mut masks = Vec::with_capacity(total - 2);
    let mut weights = Vec::with_capacity(total - 2);
    for bits in 1..total - 1 {
        let mask: Vec<bool> = (0..m).map(|i| bits >> i & 1 == 1).collect();
        let s = bits.count_ones() as usize;
        masks.push(mask);
        weights.push(kernel_weight(m, s));
    }
    (masks, weights)
}

/// Coalition sizes drawn with probability proportional to the total kernel
/// mass of that size; each draw is paired with its complement. Sampled
/// coalitions carry equal weight.
fn sampled_coalitions(m: usize, budget: usize, seed: u64) -> (Vec<Vec<bool>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size_mass: Vec<f64> = (1..m).map(|s| 1.0 / (s as f64 * (m - s) as f64)).collect();
    let total: f64 = size_mass.iter().sum();
    let pairs = budget / 2;
    let mut masks = Vec::with_capacity(2 * pairs);
    for _ in 0..pairs {
        let mut u = rng.gen::<f64>() * total;
        let mut s = m - 1;
        for (i, w) in size_mass.iter().enumerate() {
            if u < *w {
                s = i + 1;
                break;
            }
            u -= w;
        }
        let mut mask = vec![false; m];
        for i in index::sample(&mut rng, m, s) {
            mask[i] = true;
        }
        let complement: Vec<bool> = mask.iter().map(|b| !b).collect();
        masks.push(mask);
        masks.push(complement);
    }
    let weights = vec![1.0; masks.len()];
    (masks, weights)
}

/// Mean output over the background with coalition features taken from `x`.
fn coalition_values(
    model: &dyn Predictor,
    x: ArrayView1<f64>,
    background: ArrayView2<f64>,
    active: &[usize],
    masks: &[Vec<bool>],
) -> Vec<f64> {
    let nb = background.nrows();
    let per_chunk = (CHUNK_ROWS / nb).max(1);
    let mut out = Vec::with_capacity(masks.len());
    for chunk in masks.chunks(per_chunk) {
        let mut rows = Array2::zeros((chunk.len() * nb, x.len()));
        for (c, mask) in chunk.iter().enumerate() {
            for b in 0..nb {
                let mut r = rows.row_mut(c * nb + b);
                r.assign(&background.row(b));
                for (i, &j) in active.iter().enumerate() {
                    if mask[i] {
                        r[j] = x[j];
                    }
                }
            }
        }
        let y = model.output(rows.view());
        for c in 0..chunk.len() {
            out.push(y.slice(ndarray::s![c * nb..(c + 1) * nb]).sum() / nb as f64);
        }
    }
    out
}
