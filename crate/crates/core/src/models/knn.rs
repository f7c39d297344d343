use std::sync::OnceLock;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::scaler::Scaler;
use super::ModelConfig;
use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};

/// Stored standardized training set. Distance ties go to the lower row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub scaler: Scaler,
    pub points: Array2<f64>,
    pub targets: Vec<f64>,
    #[serde(skip)]
    norms: OnceLock<Vec<f64>>,
}

/// Queries per distance block; bounds the block matrix at `BLOCK x n_train`.
const BLOCK: usize = 256;

impl Knn {
    /// Keeps the `k` smallest `(distance, row)` pairs of `dists`, nearest
    /// first; an equal distance loses to the lower row.
    fn select(k: usize, dists: impl Iterator<Item = f64>, best: &mut Vec<(f64, usize)>) {
        best.clear();
        for (i, d) in dists.enumerate() {
            let full = best.len() == k;
            if full && d >= best[k - 1].0 {
                continue;
            }
            let at = best.partition_point(|e| e.0 <= d);
            if full {
                best.pop();
            }
            best.insert(at, (d, i));
        }
    }

    /// Squared distances come from `|q|^2 + |p|^2 - 2 q.p`, clamped at zero.
    pub(crate) fn raw(&self, x: ArrayView2<f64>, task: TaskKind, width: usize) -> Array2<f64> {
        let z = self.scaler.transform(x);
        let mut out = Array2::zeros((x.nrows(), width));
        let k = self.k.min(self.targets.len());
        let p_norm = self
            .norms
            .get_or_init(|| self.points.rows().into_iter().map(|r| r.dot(&r)).collect());
        let mut best = Vec::with_capacity(k + 1);
        for start in (0..z.nrows()).step_by(BLOCK) {
            let end = (start + BLOCK).min(z.nrows());
            let zb = z.slice(s![start..end, ..]);
            let cross = zb.dot(&self.points.t());
            for (r, (q, c)) in zb.rows().into_iter().zip(cross.rows()).enumerate() {
                let q_norm = q.dot(&q);
                let dists = c.iter().zip(p_norm).map(|(&g, &pn)| (q_norm + pn - 2.0 * g).max(0.0));
                Self::select(k, dists, &mut best);
                let i = start + r;
                match task {
                    TaskKind::Classification => {
                        for &(_, j) in &best {
                            out[[i, self.targets[j] as usize]] += 1.0 / k as f64;
                        }
                    }
                    TaskKind::Regression => {
                        out[[i, 0]] = best.iter().map(|&(_, j)| self.targets[j]).sum::<f64>() / k as f64;
                    }
                }
            }
        }
        out
    }
}

pub(crate) fn fit(config: &ModelConfig, train: &Dataset) -> Result<Knn> {
    let k = config.usize_or("k", 5)?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let scaler = Scaler::fit(train.features.view());
    Ok(Knn {
        k,
        points: scaler.transform(train.features.view()),
        scaler,
        targets: train.target.to_vec(),
        norms: OnceLock::new(),
    })
}
