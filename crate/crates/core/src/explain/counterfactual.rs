use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::check_width;
use crate::data::TaskKind;
use crate::error::{Error, Result};
use crate::models::Predictor;

/// Change threshold for counting a feature as modified.
const CHANGED: f64 = 1e-9;
/// Bisection steps when pulling a feature back towards the query.
const BISECT_STEPS: usize = 12;
/// Counterfactuals closer than this fraction of every feature's range are duplicates.
const DUPLICATE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Counterfactuals {
    /// One row per counterfactual, ordered by L1 distance to the query.
    pub points: Array2<f64>,
    /// Fraction of counterfactuals that change each feature.
    pub change_freq: Vec<f64>,
    /// `false` when the budget ran out before any counterfactual was found.
    pub found: bool,
    pub evaluations: usize,
}

/// Random-restart search for points the model assigns to `target_class`.
///
/// Each restart redraws a random subset of features uniformly within
/// `ranges`. A hit is then made sparse: every changed feature is reset to
/// the query value if the class survives, otherwise bisected towards it.
/// The `n_cfs` distinct hits with the smallest L1 distance are returned.
pub fn counterfactual(
    model: &dyn Predictor,
    x: ArrayView1<f64>,
    target_class: usize,
    ranges: &[(f64, f64)],
    n_cfs: usize,
    budget: usize,
    seed: u64,
) -> Result<Counterfactuals> {
    let d = x.len();
    check_width(model, d)?;
    if model.task() != TaskKind::Classification {
        return Err(Error::IncompatibleTask("counterfactuals need a classifier".into()));
    }
    if ranges.len() != d {
        return Err(Error::Dimension { expected: d, got: ranges.len() });
    }
    if n_cfs == 0 {
        return Err(Error::invalid("n_cfs must be at least 1"));
    }

    let class_of = |p: &Array1<f64>| -> usize { model.predict_labels(p.view().insert_axis(Axis(0)))[0] as usize };

    let query = x.to_owned();
    if class_of(&query) == target_class {
        return Ok(Counterfactuals {
            points: query.insert_axis(Axis(0)),
            change_freq: vec![0.0; d],
            found: true,
            evaluations: 1,
        });
    }

    let widths: Vec<f64> = ranges.iter().map(|(lo, hi)| (hi - lo).max(0.0)).collect();
    let mutable: Vec<usize> = (0..d).filter(|&j| widths[j] > 0.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found: Vec<Array1<f64>> = Vec::new();
    let mut spent = 1usize;
    while spent < budget && !mutable.is_empty() {
        let mut c = query.clone();
        let r = rng.gen_range(1..=mutable.len());
        for i in index::sample(&mut rng, mutable.len(), r) {
            let j = mutable[i];
            c[j] = rng.gen_range(ranges[j].0..=ranges[j].1);
        }
        spent += 1;
        if class_of(&c) != target_class {
            continue;
        }
        let mut order: Vec<usize> = (0..d).filter(|&j| c[j] != query[j]).collect();
        for k in (1..order.len()).rev() {
            order.swap(k, rng.gen_range(0..=k));
        }
        for j in order {
            if spent >= budget {
                break;
            }
            let far = c[j];
            c[j] = query[j];
            spent += 1;
            if class_of(&c) == target_class {
                continue;
            }
            // invariant: t = hi keeps the target class, t = lo does not
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..BISECT_STEPS {
                let mid = 0.5 * (lo + hi);
                c[j] = query[j] + mid * (far - query[j]);
                spent += 1;
                if class_of(&c) == target_class {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            c[j] = query[j] + hi * (far - query[j]);
        }
        let duplicate = found.iter().any(|f| {
            (0..d).all(|j| (f[j] - c[j]).abs() <= DUPLICATE_FRACTION * widths[j].max(CHANGED))
        });
        if !duplicate {
            found.push(c);
        }
    }

    let l1 = |p: &Array1<f64>| (p - &query).mapv(f64::abs).sum();
    let mut ranked: Vec<(f64, usize)> = found.iter().enumerate().map(|(i, p)| (l1(p), i)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(n_cfs);
    let mut points = Array2::zeros((ranked.len(), d));
    for (row, (_, i)) in ranked.iter().enumerate() {
        points.row_mut(row).assign(&found[*i]);
    }
    let change_freq = if ranked.is_empty() {
        vec![0.0; d]
    } else {
        (0..d)
            .map(|j| {
                let changed = points.column(j).iter().filter(|&&v| (v - query[j]).abs() > CHANGED).count();
                changed as f64 / ranked.len() as f64
            })
            .collect()
    };
    Ok(Counterfactuals {
        found: !ranked.is_empty(),
        points,
        change_freq,
        evaluations: spent,
    })
}
