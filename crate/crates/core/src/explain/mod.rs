//! Attribution methods.
//!
//! Every method works against the [`Predictor`] trait, so fitted models and
//! plain closures ([`FnModel`]) can be explained alike. Attributions are
//! signed so that positive values push towards class 1 (or a larger
//! regression output), except where a method is inherently unsigned
//! (permutation importance, counterfactual change frequency).

mod counterfactual;
mod curves;
mod gradients;
mod lime;
mod permutation;
mod shap;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::TaskKind;
use crate::error::{Error, Result};
use crate::models::Predictor;

pub use counterfactual::{counterfactual, Counterfactuals};
pub use curves::{ale, pdp_ice, quantile, Ale, Curve, Response};
pub use gradients::{integrated_gradients, IntegratedGradients};
pub use lime::{lime_explain, render_rule, Direction, LimeConfig, LimeExplainer, LocalExplanation, Rule};
pub use permutation::permutation_importance;
pub use shap::{kernel_shap, ShapValues};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Permutation,
    Lime,
    Shap,
    #[serde(rename = "ig")]
    IntegratedGradients,
    #[serde(rename = "dice")]
    Counterfactual,
    #[serde(rename = "pdp")]
    PdpIce,
    Ale,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Permutation,
        Method::Lime,
        Method::Shap,
        Method::IntegratedGradients,
        Method::Counterfactual,
        Method::PdpIce,
        Method::Ale,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Permutation => "permutation",
            Method::Lime => "lime",
            Method::Shap => "shap",
            Method::IntegratedGradients => "ig",
            Method::Counterfactual => "dice",
            Method::PdpIce => "pdp",
            Method::Ale => "ale",
        }
    }

    /// Per-sample methods produce an [`AttributionMatrix`] that is averaged
    /// into the global vector.
    pub fn is_local(self) -> bool {
        matches!(
            self,
            Method::Lime | Method::Shap | Method::IntegratedGradients | Method::Counterfactual
        )
    }

    /// Curve methods produce per-feature plots and no attribution vector.
    pub fn is_curve(self) -> bool {
        matches!(self, Method::PdpIce | Method::Ale)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let m = match s.as_str() {
            "permutation" | "pi" => Method::Permutation,
            "lime" => Method::Lime,
            "shap" | "shapley" => Method::Shap,
            "ig" | "integrated_gradients" => Method::IntegratedGradients,
            "dice" | "counterfactual" => Method::Counterfactual,
            "pdp" | "ice" | "pdp_ice" => Method::PdpIce,
            "ale" => Method::Ale,
            _ => return Err(Error::invalid(format!("unknown method `{s}`"))),
        };
        Ok(m)
    }
}

/// Global per-feature attribution from one (model, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub model: String,
    pub method: String,
    pub features: Vec<String>,
    pub values: Vec<f64>,
    /// Standard deviation across repeats or samples; zero when single-shot.
    pub dispersion: Vec<f64>,
}

impl AttributionVector {
    pub fn new(features: Vec<String>, values: Vec<f64>, dispersion: Vec<f64>) -> Result<Self> {
        if values.len() != features.len() || dispersion.len() != features.len() {
            return Err(Error::invalid("attribution length differs from feature count"));
        }
        if dispersion.iter().any(|d| *d < 0.0 || d.is_nan()) {
            return Err(Error::invalid("negative dispersion"));
        }
        Ok(AttributionVector {
            model: String::new(),
            method: String::new(),
            features,
            values,
            dispersion,
        })
    }

    pub fn labelled(mut self, model: &str, method: &str) -> Self {
        self.model = model.to_string();
        self.method = method.to_string();
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-sample attributions: one row per explained sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix {
    pub features: Vec<String>,
    pub sample_ids: Vec<usize>,
    pub rows: Array2<f64>,
}

impl AttributionMatrix {
    pub fn new(features: Vec<String>, sample_ids: Vec<usize>, rows: Array2<f64>) -> Result<Self> {
        if rows.ncols() != features.len() || rows.nrows() != sample_ids.len() {
            return Err(Error::invalid("attribution matrix shape mismatch"));
        }
        Ok(AttributionMatrix {
            features,
            sample_ids,
            rows,
        })
    }
}

/// Mean and standard deviation of `|attribution|` over samples.
pub fn aggregate_local(matrix: &AttributionMatrix) -> Result<AttributionVector> {
    let n = matrix.rows.nrows();
    if n == 0 {
        return Err(Error::invalid("no samples to aggregate"));
    }
    let mut values = Vec::with_capacity(matrix.features.len());
    let mut dispersion = Vec::with_capacity(matrix.features.len());
    for col in matrix.rows.columns() {
        let mean = col.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v.abs() - mean).powi(2)).sum::<f64>() / n as f64;
        values.push(mean);
        dispersion.push(var.sqrt());
    }
    AttributionVector::new(matrix.features.clone(), values, dispersion)
}

type OutputFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A [`Predictor`] backed by closures. For classifiers the closure returns
/// the class-1 probability.
pub struct FnModel {
    n_features: usize,
    task: TaskKind,
    f: OutputFn,
    grad: Option<GradientFn>,
}

impl FnModel {
    pub fn regression(n_features: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnModel {
            n_features,
            task: TaskKind::Regression,
            f: Box::new(f),
            grad: None,
        }
    }

    pub fn classifier(n_features: usize, p1: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnModel {
            n_features,
            task: TaskKind::Classification,
            f: Box::new(p1),
            grad: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Box::new(g));
        self
    }
}

impl Predictor for FnModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn task(&self) -> TaskKind {
        self.task
    }

    fn output(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut buf = Vec::with_capacity(x.ncols());
        x.rows()
            .into_iter()
            .map(|r| {
                buf.clear();
                buf.extend(r.iter().copied());
                (self.f)(&buf)
            })
            .collect()
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Option<Array1<f64>> {
        self.grad.as_ref().map(|g| Array1::from(g(&x.to_vec())))
    }
}

pub(crate) fn check_width(model: &dyn Predictor, cols: usize) -> Result<()> {
    if model.n_features() == cols {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected: model.n_features(),
            got: cols,
        })
    }
}
