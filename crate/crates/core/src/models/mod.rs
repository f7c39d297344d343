//! Model roster with a uniform fit / predict interface.
//!
//! | family   | model                                                   |
//! |----------|---------------------------------------------------------|
//! | `DT`     | CART tree, Gini / squared error                         |
//! | `RF`     | bagged CART trees with per-node feature sampling        |
//! | `GBT`    | second-order gradient boosted trees (logistic/softmax/L2) |
//! | `KNN`    | k nearest neighbours on standardized features           |
//! | `LOGREG` | L2-regularized logistic (softmax) / ridge regression    |
//! | `MLP`    | 1-2 hidden ReLU layers trained with full-batch Adam     |
//!
//! A fitted [`TrainedModel`] is immutable and serializable; see [`persist`].

mod forest;
mod gbt;
mod grid;
mod knn;
mod linear;
mod mlp;
pub mod persist;
mod scaler;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};

pub use forest::Forest;
pub use gbt::Boosted;
pub use grid::{default_grid, grid_search, kfold_indices, GridResult, ParamGrid};
pub(crate) use grid::oriented_score;
pub use knn::Knn;
pub use linear::Linear;
pub use mlp::{Layer, Mlp};
pub use scaler::Scaler;
pub use tree::{Node, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "DT")]
    DecisionTree,
    #[serde(rename = "RF")]
    RandomForest,
    #[serde(rename = "GBT")]
    GradientBoosting,
    #[serde(rename = "KNN")]
    NearestNeighbors,
    #[serde(rename = "LOGREG")]
    Logistic,
    #[serde(rename = "MLP")]
    Mlp,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::DecisionTree,
        Family::RandomForest,
        Family::GradientBoosting,
        Family::NearestNeighbors,
        Family::Logistic,
        Family::Mlp,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Family::DecisionTree => "DT",
            Family::RandomForest => "RF",
            Family::GradientBoosting => "GBT",
            Family::NearestNeighbors => "KNN",
            Family::Logistic => "LOGREG",
            Family::Mlp => "MLP",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::DecisionTree => &["max_depth", "min_samples_leaf", "min_samples_split", "balanced"],
            Family::RandomForest => &[
                "n_trees",
                "max_depth",
                "min_samples_leaf",
                "max_features",
                "bootstrap",
                "balanced",
            ],
            Family::GradientBoosting => &["n_trees", "learning_rate", "max_depth", "lambda", "min_samples_leaf"],
            Family::NearestNeighbors => &["k"],
            Family::Logistic => &["c", "max_iter"],
            Family::Mlp => &["hidden", "layers", "learning_rate", "epochs", "l2"],
        }
    }

    pub fn is_differentiable(self) -> bool {
        matches!(self, Family::Logistic | Family::Mlp)
    }

    pub fn supports(self, _task: TaskKind) -> bool {
        true
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        match up.as_str() {
            "SVM" | "ANN" | "XGBOOST" | "RIPPER" | "RP" | "RLF" => Err(Error::invalid(format!(
                "model family `{s}` is not available; use one of DT, RF, GBT, KNN, LOGREG, MLP"
            ))),
            _ => Family::ALL
                .into_iter()
                .find(|f| f.id() == up)
                .ok_or_else(|| Error::invalid(format!("unknown model family `{s}`"))),
        }
    }
}

/// Hyperparameter value. `None` means "unbounded" (e.g. tree depth).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Int(u64),
    Real(f64),
    None,
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Int(v) => write!(f, "{v}"),
            HyperValue::Real(v) => write!(f, "{v}"),
            HyperValue::None => f.write_str("none"),
        }
    }
}

impl FromStr for HyperValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") {
            Ok(HyperValue::None)
        } else if let Ok(v) = s.parse::<u64>() {
            Ok(HyperValue::Int(v))
        } else {
            s.parse::<f64>()
                .map(HyperValue::Real)
                .map_err(|_| Error::invalid(format!("bad hyperparameter value `{s}`")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    #[serde(default)]
    pub params: BTreeMap<String, HyperValue>,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(family: Family, seed: u64) -> Self {
        ModelConfig {
            family,
            params: BTreeMap::new(),
            seed,
        }
    }

    pub fn with(mut self, name: &str, value: HyperValue) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let allowed = self.family.param_names();
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::invalid(format!(
                "`{k}` is not a {} hyperparameter (expected one of {allowed:?})",
                self.family
            ))),
            None => Ok(()),
        }
    }

    pub(crate) fn usize_or(&self, name: &str, default: usize) -> Result<usize> {
        match self.params.get(name) {
            None => Ok(default),
            Some(HyperValue::Int(v)) => Ok(*v as usize),
            Some(HyperValue::Real(v)) if v.fract() == 0.0 && *v >= 0.0 => Ok(*v as usize),
            Some(other) => Err(Error::invalid(format!("`{name}` must be an integer, got {other}"))),
        }
    }

    /// Integer limit where `None` (or absence with `default = None`) means unbounded.
    pub(crate) fn limit_or(&self, name: &str, default: Option<usize>) -> Result<Option<usize>> {
        match self.params.get(name) {
            None => Ok(default),
            Some(HyperValue::None) => Ok(None),
            Some(_) => self.usize_or(name, 0).map(Some),
        }
    }

    pub(crate) fn f64_or(&self, name: &str, default: f64) -> Result<f64> {
        match self.params.get(name) {
            None => Ok(default),
            Some(HyperValue::Int(v)) => Ok(*v as f64),
            Some(HyperValue::Real(v)) => Ok(*v),
            Some(HyperValue::None) => Err(Error::invalid(format!("`{name}` must be a number"))),
        }
    }
}

/// Family-specific fitted state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelState {
    /// Fixed output: class probabilities or a single regression value.
    Constant { output: Vec<f64> },
    Tree(Tree),
    Forest(Forest),
    Boosted(Boosted),
    Knn(Knn),
    Linear(Linear),
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub n_features: usize,
    pub task: TaskKind,
    /// Number of classes; 0 for regression.
    pub n_classes: usize,
    pub state: ModelState,
}

/// A fitted model as seen by the explanation methods.
///
/// `output` is the explained scalar: the class-1 probability for classifiers
/// and the prediction itself for regressors.
pub trait Predictor: Send + Sync {
    fn n_features(&self) -> usize;

    fn task(&self) -> TaskKind;

    fn output(&self, x: ArrayView2<f64>) -> Array1<f64>;

    fn output_row(&self, x: ArrayView1<f64>) -> f64 {
        self.output(x.insert_axis(Axis(0)))[0]
    }

    /// Hard predictions: class indices for classifiers, values for regressors.
    fn predict_labels(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let out = self.output(x);
        match self.task() {
            TaskKind::Classification => out.mapv(|p| if p > 0.5 { 1.0 } else { 0.0 }),
            TaskKind::Regression => out,
        }
    }

    /// Gradient of `output` with respect to the input, when differentiable.
    fn gradient(&self, _x: ArrayView1<f64>) -> Option<Array1<f64>> {
        None
    }
}

/// Fits one model. Deterministic in `(config, train)`.
pub fn fit(config: &ModelConfig, train: &Dataset) -> Result<TrainedModel> {
    config.validate()?;
    if train.n_samples() == 0 {
        return Err(Error::invalid("cannot fit on an empty dataset"));
    }
    if !config.family.supports(train.task) {
        return Err(Error::IncompatibleTask(format!("{} cannot do {}", config.family, train.task)));
    }
    let n_classes = train.n_classes();
    let present = distinct_classes(train);
    let state = if train.task == TaskKind::Classification && present.len() < 2 {
        let mut output = vec![0.0; n_classes.max(1)];
        output[present.first().copied().unwrap_or(0)] = 1.0;
        ModelState::Constant { output }
    } else {
        match config.family {
            Family::DecisionTree => ModelState::Tree(forest::fit_single_tree(config, train)?),
            Family::RandomForest => ModelState::Forest(forest::fit(config, train)?),
            Family::GradientBoosting => ModelState::Boosted(gbt::fit(config, train)?),
            Family::NearestNeighbors => ModelState::Knn(knn::fit(config, train)?),
            Family::Logistic => ModelState::Linear(linear::fit(config, train)?),
            Family::Mlp => ModelState::Mlp(mlp::fit(config, train)?),
        }
    };
    Ok(TrainedModel {
        config: config.clone(),
        n_features: train.n_features(),
        task: train.task,
        n_classes,
        state,
    })
}

fn distinct_classes(ds: &Dataset) -> Vec<usize> {
    let mut c: Vec<usize> = ds.class_indices();
    c.sort_unstable();
    c.dedup();
    c
}

impl TrainedModel {
    fn check_dims(&self, cols: usize) -> Result<()> {
        if cols == self.n_features {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.n_features,
                got: cols,
            })
        }
    }

    /// Raw model output: `n x n_classes` probabilities or `n x 1` values.
    fn raw(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let width = if self.task == TaskKind::Classification {
            self.n_classes.max(1)
        } else {
            1
        };
        match &self.state {
            ModelState::Constant { output } => {
                let mut out = Array2::zeros((x.nrows(), width));
                for mut row in out.rows_mut() {
                    row.assign(&ArrayView1::from(output.as_slice()));
                }
                out
            }
            ModelState::Tree(t) => {
                let mut out = Array2::zeros((x.nrows(), width));
                for (i, row) in x.rows().into_iter().enumerate() {
                    let v = t.leaf_value(row.as_slice().unwrap_or(&row.to_vec()));
                    out.row_mut(i).assign(&ArrayView1::from(v));
                }
                out
            }
            ModelState::Forest(f) => f.raw(x, width),
            ModelState::Boosted(b) => b.raw(x, self.task),
            ModelState::Knn(k) => k.raw(x, self.task, width),
            ModelState::Linear(l) => l.raw(x, self.task),
            ModelState::Mlp(m) => m.raw(x, self.task),
        }
    }

    /// Class indices (argmax, ties to the lower index) or regression values.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_dims(x.ncols())?;
        let raw = self.raw(x);
        Ok(match self.task {
            TaskKind::Classification => raw
                .rows()
                .into_iter()
                .map(|r| {
                    let mut best = 0;
                    for (k, &p) in r.iter().enumerate() {
                        if p > r[best] {
                            best = k;
                        }
                    }
                    best as f64
                })
                .collect(),
            TaskKind::Regression => raw.column(0).to_owned(),
        })
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.task != TaskKind::Classification {
            return Err(Error::IncompatibleTask("predict_proba on a regression model".into()));
        }
        self.check_dims(x.ncols())?;
        Ok(self.raw(x))
    }

    /// Gradient of the class-1 probability (or the regression output).
    pub fn gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if !self.config.family.is_differentiable() {
            return Err(Error::IncompatibleTask(format!(
                "{} is not differentiable",
                self.config.family
            )));
        }
        self.check_dims(x.len())?;
        Ok(match &self.state {
            ModelState::Linear(l) => l.gradient(x, self.task),
            ModelState::Mlp(m) => m.gradient(x, self.task),
            _ => Array1::zeros(self.n_features),
        })
    }

    pub fn id(&self) -> &'static str {
        self.config.family.id()
    }

    /// Every `(feature, threshold)` split of a tree-based model; empty otherwise.
    pub fn splits(&self) -> Vec<(usize, f64)> {
        match &self.state {
            ModelState::Tree(t) => t.splits().collect(),
            ModelState::Forest(f) => f.trees.iter().flat_map(|t| t.splits()).collect(),
            ModelState::Boosted(b) => b.rounds.iter().flatten().flat_map(|t| t.splits()).collect(),
            _ => Vec::new(),
        }
    }
}

impl Predictor for TrainedModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn task(&self) -> TaskKind {
        self.task
    }

    fn output(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let raw = self.raw(x);
        match self.task {
            TaskKind::Classification if raw.ncols() > 1 => raw.column(1).to_owned(),
            TaskKind::Classification => Array1::zeros(raw.nrows()),
            TaskKind::Regression => raw.column(0).to_owned(),
        }
    }

    fn predict_labels(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.predict(x).expect("dimension checked by caller")
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Option<Array1<f64>> {
        TrainedModel::gradient(self, x).ok()
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
