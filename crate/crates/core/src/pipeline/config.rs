use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{RuleSpec, TaskKind};
use crate::error::{Error, Result};
use crate::explain::Method;
use crate::models::{default_grid, Family, HyperValue, ParamGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        target: String,
        task: TaskKind,
        /// Categorical columns to one-hot encode after loading.
        #[serde(default)]
        encode: Vec<String>,
    },
    /// Rule-labelled uniform data; `rules` is a rule file path or one of the
    /// built-in names `two_feature_box` and `six_feature_noise`.
    Synthetic { rules: String, n_samples: usize },
}

impl DataSource {
    pub fn task(&self) -> TaskKind {
        match self {
            DataSource::Csv { task, .. } => *task,
            DataSource::Synthetic { .. } => TaskKind::Classification,
        }
    }
}

pub fn resolve_rules(rules: &str) -> Result<RuleSpec> {
    match rules {
        "two_feature_box" => Ok(RuleSpec::two_feature_box()),
        "six_feature_noise" => Ok(RuleSpec::six_feature_noise()),
        path => RuleSpec::from_file(path),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub family: Family,
    /// Hyperparameter axes; `None` uses the family's default grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<BTreeMap<String, Vec<HyperValue>>>,
}

impl ModelRequest {
    pub fn new(family: Family) -> Self {
        ModelRequest { family, grid: None }
    }

    pub fn param_grid(&self) -> ParamGrid {
        match &self.grid {
            None => default_grid(self.family),
            Some(axes) => ParamGrid {
                family: self.family,
                axes: axes.clone(),
            },
        }
    }
}

/// Which held-out samples the per-sample methods and curves explain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSelector {
    All,
    /// The first `n` held-out samples in dataset order.
    First(usize),
    /// Dataset row indices (0-based); each must be in the held-out set.
    Ids(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainSettings {
    pub permutation_repeats: usize,
    pub shap_budget: usize,
    pub shap_background: usize,
    pub lime_perturbations: usize,
    pub lime_rules: usize,
    pub ig_steps: usize,
    pub cf_count: usize,
    pub cf_budget: usize,
    pub pdp_grid: usize,
    pub ale_bins: usize,
    /// Features with PDP/ICE/ALE curves; `None` means all.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve_features: Option<Vec<String>>,
    /// Rule panels drawn per model, for the first explained samples.
    pub rule_panels: usize,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        ExplainSettings {
            permutation_repeats: 5,
            shap_budget: 2048,
            shap_background: 50,
            lime_perturbations: 5000,
            lime_rules: 10,
            ig_steps: 64,
            cf_count: 4,
            cf_budget: 2000,
            pdp_grid: 20,
            ale_bins: 10,
            curve_features: None,
            rule_panels: 3,
        }
    }
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_k_folds() -> usize {
    5
}

fn default_cutoff() -> f64 {
    crate::consensus::DEFAULT_CUTOFF
}

fn default_workers() -> usize {
    1
}

fn default_samples() -> SampleSelector {
    SampleSelector::All
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    pub models: Vec<ModelRequest>,
    pub methods: Vec<Method>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default = "default_samples")]
    pub samples: SampleSelector,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default)]
    pub explain: ExplainSettings,
    /// Execution-only: never affects output bytes.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Execution-only: never affects output bytes.
    #[serde(default)]
    pub output: PathBuf,
}

impl RunConfig {
    pub fn new(data: DataSource, families: &[Family], methods: &[Method], output: impl Into<PathBuf>) -> Self {
        RunConfig {
            data,
            models: families.iter().map(|f| ModelRequest::new(*f)).collect(),
            methods: methods.to_vec(),
            test_fraction: default_test_fraction(),
            k_folds: default_k_folds(),
            samples: SampleSelector::All,
            seed: 0,
            cutoff: default_cutoff(),
            explain: ExplainSettings::default(),
            workers: 1,
            output: output.into(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Checks everything that can be checked without touching the data.
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::invalid("at least one model family is required"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.cutoff) {
            return Err(Error::invalid(format!("cutoff {} must lie in [0, 1]", self.cutoff)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid(format!("test_fraction {} must lie in (0, 1)", self.test_fraction)));
        }
        if self.k_folds < 2 {
            return Err(Error::invalid("k_folds must be at least 2"));
        }
        let mut seen = BTreeSet::new();
        for m in &self.models {
            if !seen.insert(m.family) {
                return Err(Error::invalid(format!("model family {} listed twice", m.family)));
            }
            m.param_grid().points(0)?;
        }
        let mut seen = BTreeSet::new();
        for m in &self.methods {
            if !seen.insert(*m) {
                return Err(Error::invalid(format!("method {m} listed twice")));
            }
        }
        let e = &self.explain;
        if e.permutation_repeats == 0 || e.lime_rules == 0 || e.cf_count == 0 || e.ale_bins == 0 || e.shap_background == 0 {
            return Err(Error::invalid("explain settings must be positive"));
        }
        if e.ig_steps < 2 || e.pdp_grid < 2 || e.lime_perturbations < 2 {
            return Err(Error::invalid("ig_steps, pdp_grid and lime_perturbations must be at least 2"));
        }
        if let SampleSelector::First(0) = self.samples {
            return Err(Error::invalid("sample selector `first` needs n >= 1"));
        }
        if let DataSource::Synthetic { rules, n_samples } = &self.data {
            if *n_samples < 2 {
                return Err(Error::invalid("synthetic data needs at least 2 samples"));
            }
            resolve_rules(rules)?;
        }
        Ok(())
    }

    /// The config without execution-only fields, as echoed in the manifest.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("workers");
            o.remove("output");
        }
        v
    }
}
