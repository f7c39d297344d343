use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{self, Criterion, Presorted, Targets, Tree, TreeParams};
use super::{HyperValue, ModelConfig};
use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};

/// Bagged trees; predictions average the per-tree leaf values.
///
/// `max_features` takes an integer count, a fraction in (0, 1] of the
/// feature count, or `none` for all features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub(crate) fn raw(&self, x: ArrayView2<f64>, width: usize) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), width));
        let mut buf = Vec::with_capacity(x.ncols());
        for (i, row) in x.rows().into_iter().enumerate() {
            buf.clear();
            buf.extend(row.iter().copied());
            let mut acc = out.row_mut(i);
            for t in &self.trees {
                for (a, v) in acc.iter_mut().zip(t.leaf_value(&buf)) {
                    *a += v;
                }
            }
            acc /= self.trees.len() as f64;
        }
        out
    }
}

fn criterion(train: &Dataset) -> Criterion {
    match train.task {
        TaskKind::Classification => Criterion::Gini {
            n_classes: train.n_classes(),
        },
        TaskKind::Regression => Criterion::Variance,
    }
}

fn tree_params(config: &ModelConfig, max_features: Option<usize>) -> Result<TreeParams> {
    let min_samples_leaf = config.usize_or("min_samples_leaf", 1)?;
    if min_samples_leaf == 0 {
        return Err(Error::invalid("min_samples_leaf must be at least 1"));
    }
    Ok(TreeParams {
        max_depth: config.limit_or("max_depth", None)?,
        min_samples_split: config.usize_or("min_samples_split", 2)?,
        min_samples_leaf,
        max_features,
    })
}

/// Per-sample weight; with `balanced = 1` every class carries equal total weight.
fn class_weights(config: &ModelConfig, train: &Dataset) -> Result<Vec<f64>> {
    let n = train.n_samples();
    if config.usize_or("balanced", 0)? == 0 || train.task == TaskKind::Regression {
        return Ok(vec![1.0; n]);
    }
    let classes = train.class_indices();
    let mut counts = vec![0usize; train.n_classes()];
    classes.iter().for_each(|&c| counts[c] += 1);
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    Ok(classes
        .iter()
        .map(|&c| n as f64 / (present * counts[c] as f64))
        .collect())
}

pub(crate) fn fit_single_tree(config: &ModelConfig, train: &Dataset) -> Result<Tree> {
    let params = tree_params(config, None)?;
    let y = train.target.to_vec();
    let w = class_weights(config, train)?;
    let targets = Targets {
        y: &y,
        h: None,
        weight: &w,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(tree::build(
        &Presorted::new(&train.features),
        &targets,
        criterion(train),
        &params,
        &mut rng,
    ))
}

pub(crate) fn fit(config: &ModelConfig, train: &Dataset) -> Result<Forest> {
    let d = train.n_features();
    let n_trees = config.usize_or("n_trees", 100)?;
    if n_trees == 0 {
        return Err(Error::invalid("n_trees must be at least 1"));
    }
    let default_features = match train.task {
        TaskKind::Classification => ((d as f64).sqrt().floor() as usize).max(1),
        TaskKind::Regression => (d / 3).max(1),
    };
    let max_features = match config.params.get("max_features") {
        None => Some(default_features),
        Some(HyperValue::None) => None,
        Some(HyperValue::Real(f)) if f.fract() != 0.0 || *f == 1.0 => {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(Error::invalid(format!("max_features fraction {f} must lie in (0, 1]")));
            }
            Some(((f * d as f64).floor() as usize).max(1))
        }
        Some(_) => config.usize_or("max_features", 0).map(Some)?,
    };
    if max_features == Some(0) {
        return Err(Error::invalid("max_features must be at least 1"));
    }
    let max_features = max_features.map(|k| k.min(d));
    let bootstrap = config.usize_or("bootstrap", 1)? != 0;
    let params = tree_params(config, max_features)?;

    let presorted = Presorted::new(&train.features);
    let y = train.target.to_vec();
    let n = y.len();
    let crit = criterion(train);
    let base = class_weights(config, train)?;
    let mut seeder = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(seeder.gen());
        let mut w = vec![0.0; n];
        if bootstrap {
            for _ in 0..n {
                let i = rng.gen_range(0..n);
                w[i] += base[i];
            }
        } else {
            w.copy_from_slice(&base);
        }
        let targets = Targets {
            y: &y,
            h: None,
            weight: &w,
        };
        trees.push(tree::build(&presorted, &targets, crit, &params, &mut rng));
    }
    Ok(Forest { trees })
}
