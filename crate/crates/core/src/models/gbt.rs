use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{self, Criterion, Presorted, Targets, Tree, TreeParams};
use super::{sigmoid, softmax_in_place, ModelConfig};
use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};

/// Boosted trees. `rounds[r][k]` is the tree of round `r` for output `k`;
/// binary classification and regression have one output per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    /// Initial margin per output (log-odds, log-prior or target mean).
    pub base: Vec<f64>,
    pub learning_rate: f64,
    pub rounds: Vec<Vec<Tree>>,
}

impl Boosted {
    fn margins(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let k = self.base.len();
        let mut out = Array2::zeros((x.nrows(), k));
        let mut buf = Vec::with_capacity(x.ncols());
        for (i, row) in x.rows().into_iter().enumerate() {
            buf.clear();
            buf.extend(row.iter().copied());
            for (j, b) in self.base.iter().enumerate() {
                let mut m = *b;
                for round in &self.rounds {
                    m += self.learning_rate * round[j].leaf_value(&buf)[0];
                }
                out[[i, j]] = m;
            }
        }
        out
    }

    pub(crate) fn raw(&self, x: ArrayView2<f64>, task: TaskKind) -> Array2<f64> {
        let m = self.margins(x);
        match (task, self.base.len()) {
            (TaskKind::Regression, _) => m,
            (TaskKind::Classification, 1) => {
                let mut out = Array2::zeros((m.nrows(), 2));
                for i in 0..m.nrows() {
                    let p = sigmoid(m[[i, 0]]);
                    out[[i, 0]] = 1.0 - p;
                    out[[i, 1]] = p;
                }
                out
            }
            (TaskKind::Classification, _) => {
                let mut m = m;
                for mut row in m.rows_mut() {
                    softmax_in_place(row.as_slice_mut().expect("contiguous"));
                }
                m
            }
        }
    }
}

const PRIOR_CLAMP: f64 = 1e-12;

pub(crate) fn fit(config: &ModelConfig, train: &Dataset) -> Result<Boosted> {
    let n_trees = config.usize_or("n_trees", 100)?;
    let learning_rate = config.f64_or("learning_rate", 0.1)?;
    let lambda = config.f64_or("lambda", 1.0)?;
    if learning_rate < 0.0 || lambda < 0.0 {
        return Err(Error::invalid("learning_rate and lambda must be non-negative"));
    }
    let params = TreeParams {
        max_depth: config.limit_or("max_depth", Some(3))?,
        min_samples_split: 2,
        min_samples_leaf: config.usize_or("min_samples_leaf", 1)?.max(1),
        max_features: None,
    };

    let n = train.n_samples();
    let y = train.target.as_slice().expect("contiguous").to_vec();
    let k_out = match train.task {
        TaskKind::Regression => 1,
        TaskKind::Classification if train.n_classes() == 2 => 1,
        TaskKind::Classification => train.n_classes(),
    };
    let base: Vec<f64> = match (train.task, k_out) {
        (TaskKind::Regression, _) => vec![y.iter().sum::<f64>() / n as f64],
        (TaskKind::Classification, 1) => {
            let p = (y.iter().filter(|&&c| c == 1.0).count() as f64 / n as f64).clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP);
            vec![(p / (1.0 - p)).ln()]
        }
        (TaskKind::Classification, k) => (0..k)
            .map(|c| {
                let p = y.iter().filter(|&&t| t as usize == c).count() as f64 / n as f64;
                p.max(PRIOR_CLAMP).ln()
            })
            .collect(),
    };

    let presorted = Presorted::new(&train.features);
    let weight = vec![1.0; n];
    let mut margins = Array2::from_shape_fn((n, k_out), |(_, j)| base[j]);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rounds = Vec::with_capacity(n_trees);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for _ in 0..n_trees {
        let probs = match (train.task, k_out) {
            (TaskKind::Classification, k) if k > 1 => {
                let mut p = margins.clone();
                for mut row in p.rows_mut() {
                    softmax_in_place(row.as_slice_mut().expect("contiguous"));
                }
                Some(p)
            }
            _ => None,
        };
        let mut round = Vec::with_capacity(k_out);
        for j in 0..k_out {
            for i in 0..n {
                let m = margins[[i, j]];
                (g[i], h[i]) = match (train.task, &probs) {
                    (TaskKind::Regression, _) => (m - y[i], 1.0),
                    (TaskKind::Classification, None) => {
                        let p = sigmoid(m);
                        (p - y[i], p * (1.0 - p))
                    }
                    (TaskKind::Classification, Some(p)) => {
                        let pk = p[[i, j]];
                        let t = if y[i] as usize == j { 1.0 } else { 0.0 };
                        (pk - t, pk * (1.0 - pk))
                    }
                };
            }
            let targets = Targets {
                y: &g,
                h: Some(&h),
                weight: &weight,
            };
            let t = tree::build(&presorted, &targets, Criterion::Newton { lambda }, &params, &mut rng);
            round.push(t);
        }
        let mut buf = Vec::new();
        for i in 0..n {
            buf.clear();
            buf.extend(train.features.row(i).iter().copied());
            for (j, t) in round.iter().enumerate() {
                margins[[i, j]] += learning_rate * t.leaf_value(&buf)[0];
            }
        }
        rounds.push(round);
    }
    Ok(Boosted {
        base,
        learning_rate,
        rounds,
    })
}
