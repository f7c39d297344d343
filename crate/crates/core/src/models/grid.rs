use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fit, Family, HyperValue, ModelConfig, Predictor, TrainedModel};
use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::metrics::{self, Metric};

/// Candidate values per hyperparameter; the search covers their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub family: Family,
    pub axes: BTreeMap<String, Vec<HyperValue>>,
}

impl ParamGrid {
    pub fn single(family: Family) -> Self {
        ParamGrid {
            family,
            axes: BTreeMap::new(),
        }
    }

    pub fn axis(mut self, name: &str, values: &[HyperValue]) -> Self {
        self.axes.insert(name.to_string(), values.to_vec());
        self
    }

    /// Grid points in a fixed order: axes sorted by name, last axis fastest.
    pub fn points(&self, seed: u64) -> Result<Vec<ModelConfig>> {
        if let Some((name, _)) = self.axes.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::invalid(format!("grid axis `{name}` has no values")));
        }
        let mut points = vec![ModelConfig::new(self.family, seed)];
        for (name, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| values.iter().map(move |v| p.clone().with(name, *v)))
                .collect();
        }
        for p in &points {
            p.validate()?;
        }
        Ok(points)
    }
}

pub fn default_grid(family: Family) -> ParamGrid {
    use HyperValue::{Int, None, Real};
    let g = ParamGrid::single(family);
    match family {
        Family::DecisionTree => g
            .axis("max_depth", &[Int(3), Int(5), Int(8), None])
            .axis("balanced", &[Int(0), Int(1)]),
        Family::RandomForest => g
            .axis("max_features", &[Real(0.1), Real(0.33), None])
            .axis("balanced", &[Int(0), Int(1)]),
        Family::GradientBoosting => g
            .axis("n_trees", &[Int(50), Int(100)])
            .axis("learning_rate", &[Real(0.1), Real(0.3)]),
        Family::NearestNeighbors => g.axis("k", &[Int(3), Int(5), Int(11)]),
        Family::Logistic => g.axis("c", &[Real(0.1), Real(1.0), Real(10.0)]),
        Family::Mlp => g
            .axis("hidden", &[Int(8), Int(32)])
            .axis("learning_rate", &[Real(0.01), Real(0.1)]),
    }
}

/// Validation index sets of a k-fold partition, stratified by class for
/// classification. Each set is sorted ascending.
pub fn kfold_indices(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = dataset.n_samples();
    if k < 2 || k > n {
        return Err(Error::invalid(format!("k_folds = {k} must lie in [2, {n}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = match dataset.task {
        TaskKind::Classification => {
            let mut by: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, c) in dataset.class_indices().into_iter().enumerate() {
                by.entry(c).or_default().push(i);
            }
            by.into_values().collect()
        }
        TaskKind::Regression => vec![(0..n).collect()],
    };
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for mut g in groups {
        g.shuffle(&mut rng);
        for i in g {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Metric value of a fitted model on `data`, oriented so larger is better.
pub(crate) fn oriented_score(model: &dyn Predictor, data: &Dataset, metric: Metric) -> Result<f64> {
    let x = data.features.view();
    let y = data.target.as_slice().expect("contiguous");
    let pred = model.predict_labels(x);
    let scores = (metric == Metric::Auc).then(|| model.output(x).to_vec());
    let v = metrics::evaluate(metric, y, pred.as_slice().expect("contiguous"), scores.as_deref())?;
    Ok(metric.oriented(v))
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: ModelConfig,
    pub model: TrainedModel,
    /// Mean cross-validated score (oriented) per grid point, in grid order.
    pub scores: Vec<(ModelConfig, f64)>,
}

/// Cross-validated grid search; the winner is refit on all of `train`.
/// Ties go to the earlier grid point.
pub fn grid_search(
    grid: &ParamGrid,
    train: &Dataset,
    k_folds: usize,
    metric: Metric,
    seed: u64,
) -> Result<GridResult> {
    metric.check_task(train.task)?;
    let points = grid.points(seed)?;
    let folds = kfold_indices(train, k_folds, seed)?;
    let n = train.n_samples();
    let splits: Vec<(Dataset, Dataset)> = folds
        .iter()
        .map(|val| {
            let mut in_val = vec![false; n];
            val.iter().for_each(|&i| in_val[i] = true);
            let tr: Vec<usize> = (0..n).filter(|&i| !in_val[i]).collect();
            (train.subset(&tr), train.subset(val))
        })
        .collect();

    let mut scores = Vec::with_capacity(points.len());
    for cfg in points {
        let mut total = 0.0;
        for (tr, val) in &splits {
            let m = fit(&cfg, tr)?;
            total += oriented_score(&m, val, metric)?;
        }
        scores.push((cfg, total / splits.len() as f64));
    }
    let mut best = 0;
    for (i, (_, s)) in scores.iter().enumerate() {
        if *s > scores[best].1 {
            best = i;
        }
    }
    let best_cfg = scores[best].0.clone();
    let model = fit(&best_cfg, train)?;
    Ok(GridResult {
        best: best_cfg,
        model,
        scores,
    })
}
