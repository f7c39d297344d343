//! Evaluation metrics for classification and regression.
//!
//! Ratios that come out as 0/0 are reported as `0` and their name is added to
//! [`MetricsReport::undefined`], so tabular outputs never contain NaN.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::TaskKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    Specificity,
    F1,
    Auc,
    Pearson,
    R2,
    Mae,
    Mse,
    /// Mean absolute percentage error over samples with a non-zero target.
    Mape,
}

impl Metric {
    pub const ALL: [Metric; 11] = [
        Metric::Accuracy,
        Metric::Precision,
        Metric::Recall,
        Metric::Specificity,
        Metric::F1,
        Metric::Auc,
        Metric::Pearson,
        Metric::R2,
        Metric::Mae,
        Metric::Mse,
        Metric::Mape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::Specificity => "specificity",
            Metric::F1 => "f1",
            Metric::Auc => "auc",
            Metric::Pearson => "pearson",
            Metric::R2 => "r2",
            Metric::Mae => "mae",
            Metric::Mse => "mse",
            Metric::Mape => "mape",
        }
    }

    pub fn task(self) -> TaskKind {
        match self {
            Metric::Accuracy
            | Metric::Precision
            | Metric::Recall
            | Metric::Specificity
            | Metric::F1
            | Metric::Auc => TaskKind::Classification,
            _ => TaskKind::Regression,
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Mae | Metric::Mse | Metric::Mape)
    }

    /// Maps a raw value onto a higher-is-better scale.
    pub fn oriented(self, value: f64) -> f64 {
        if self.higher_is_better() {
            value
        } else {
            -value
        }
    }

    pub fn check_task(self, task: TaskKind) -> Result<()> {
        if self.task() == task {
            Ok(())
        } else {
            Err(Error::IncompatibleTask(format!("metric `{self}` does not apply to {task}")))
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric `{s}`")))
    }
}

/// Rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_labels(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Self {
        let mut counts = vec![vec![0u64; n_classes]; n_classes];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            counts[t][p] += 1;
        }
        ConfusionMatrix { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: TaskKind,
    pub values: BTreeMap<String, f64>,
    pub undefined: BTreeSet<String>,
    pub confusion: Option<ConfusionMatrix>,
}

impl MetricsReport {
    fn new(task: TaskKind) -> Self {
        MetricsReport {
            task,
            values: BTreeMap::new(),
            undefined: BTreeSet::new(),
            confusion: None,
        }
    }

    fn put(&mut self, metric: Metric, value: Option<f64>) {
        match value {
            Some(v) => {
                self.values.insert(metric.name().into(), v);
            }
            None => {
                self.values.insert(metric.name().into(), 0.0);
                self.undefined.insert(metric.name().into());
            }
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.values.get(metric.name()).copied()
    }

    pub fn is_undefined(&self, metric: Metric) -> bool {
        self.undefined.contains(metric.name())
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

/// Area under the ROC curve as the Mann-Whitney statistic: the probability
/// that a random positive scores above a random negative, ties counting 1/2.
/// `None` when either class is absent.
pub fn auc(y_true: &[usize], scores: &[f64]) -> Option<f64> {
    let n = y_true.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // average 1-based rank of the tied block i..=j
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if y_true[k] == 1 {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let n_pos = y_true.iter().filter(|&&y| y == 1).count() as f64;
    let n_neg = n as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return None;
    }
    Some((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Classification metrics. Binary metrics treat class index 1 as positive;
/// `scores` are class-1 probabilities and enable AUC.
pub fn classification_report(
    y_true: &[usize],
    y_pred: &[usize],
    scores: Option<&[f64]>,
) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() || scores.is_some_and(|s| s.len() != y_true.len()) {
        return Err(Error::invalid("label and score vectors differ in length"));
    }
    let n_classes = y_true
        .iter()
        .chain(y_pred)
        .copied()
        .max()
        .map_or(2, |m| (m + 1).max(2));
    let cm = ConfusionMatrix::from_labels(y_true, y_pred, n_classes);
    let mut rep = MetricsReport::new(TaskKind::Classification);
    rep.put(Metric::Accuracy, ratio(cm.trace() as f64, cm.total() as f64));
    if n_classes == 2 {
        let tn = cm.counts[0][0] as f64;
        let fp = cm.counts[0][1] as f64;
        let fn_ = cm.counts[1][0] as f64;
        let tp = cm.counts[1][1] as f64;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        rep.put(Metric::Precision, precision);
        rep.put(Metric::Recall, recall);
        rep.put(Metric::Specificity, ratio(tn, tn + fp));
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) => ratio(2.0 * p * r, p + r),
            _ => None,
        };
        rep.put(Metric::F1, f1);
        if let Some(s) = scores {
            rep.put(Metric::Auc, auc(y_true, s));
        }
    }
    rep.confusion = Some(cm);
    Ok(rep)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    ratio(sab, (saa * sbb).sqrt())
}

pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Option<f64> {
    let m = mean(y_true);
    let ss_tot: f64 = y_true.iter().map(|y| (y - m) * (y - m)).sum();
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum();
    ratio(ss_res, ss_tot).map(|q| 1.0 - q)
}

pub fn regression_report(y_true: &[f64], y_pred: &[f64]) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid("target and prediction vectors differ in length"));
    }
    if y_true.len() < 2 {
        return Err(Error::invalid("regression metrics need at least two samples"));
    }
    let n = y_true.len() as f64;
    let mut rep = MetricsReport::new(TaskKind::Regression);
    rep.put(Metric::Pearson, pearson(y_true, y_pred));
    rep.put(Metric::R2, r2(y_true, y_pred));
    let mae = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).abs()).sum::<f64>() / n;
    let mse = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / n;
    rep.put(Metric::Mae, Some(mae));
    rep.put(Metric::Mse, Some(mse));
    let pct: Vec<f64> = y_true
        .iter()
        .zip(y_pred)
        .filter(|(y, _)| **y != 0.0)
        .map(|(y, p)| ((y - p) / y).abs())
        .collect();
    rep.put(Metric::Mape, (!pct.is_empty()).then(|| mean(&pct)));
    Ok(rep)
}

/// Raw value of one metric; undefined ratios evaluate to 0.
///
/// `y_true`/`y_pred` hold class indices for classification. `scores` are
/// class-1 probabilities and are required for AUC.
pub fn evaluate(metric: Metric, y_true: &[f64], y_pred: &[f64], scores: Option<&[f64]>) -> Result<f64> {
    match metric.task() {
        TaskKind::Classification => {
            let t: Vec<usize> = y_true.iter().map(|&v| v as usize).collect();
            if metric == Metric::Auc {
                let s = scores.ok_or_else(|| Error::invalid("AUC needs class-1 scores"))?;
                return Ok(auc(&t, s).unwrap_or(0.0));
            }
            let p: Vec<usize> = y_pred.iter().map(|&v| v as usize).collect();
            let rep = classification_report(&t, &p, None)?;
            Ok(rep.get(metric).unwrap_or(0.0))
        }
        TaskKind::Regression => Ok(regression_report(y_true, y_pred)?.get(metric).unwrap_or(0.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_binary_predictions() {
        let y = [0, 0, 1, 1];
        let rep = classification_report(&y, &y, None).unwrap();
        for m in [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1, Metric::Specificity] {
            assert_eq!(rep.get(m), Some(1.0), "{m}");
        }
        assert_eq!(rep.confusion.unwrap().counts, vec![vec![2, 0], vec![0, 2]]);
    }

    #[test]
    fn auc_examples() {
        let y = [0, 0, 1, 1];
        assert_eq!(auc(&y, &[0.1, 0.2, 0.8, 0.9]), Some(1.0));
        assert_eq!(auc(&y, &[0.9, 0.8, 0.2, 0.1]), Some(0.0));
        assert_eq!(auc(&y, &[0.5; 4]), Some(0.5));
        assert_eq!(auc(&[1, 1], &[0.1, 0.2]), None);
    }

    #[test]
    fn undefined_ratio_is_zero_and_flagged() {
        // no predicted positives: precision = 0/0
        let rep = classification_report(&[0, 1], &[0, 0], None).unwrap();
        assert_eq!(rep.get(Metric::Precision), Some(0.0));
        assert!(rep.is_undefined(Metric::Precision));
        assert!(rep.is_undefined(Metric::F1));
        assert!(!rep.is_undefined(Metric::Recall));
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(classification_report(&[0, 1], &[0], None).is_err());
        assert!(regression_report(&[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn regression_identity_and_mean_predictor() {
        let y = [1.0, 2.0, 4.0, 8.0];
        let rep = regression_report(&y, &y).unwrap();
        assert_eq!(rep.get(Metric::R2), Some(1.0));
        assert!((rep.get(Metric::Pearson).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(rep.get(Metric::Mae), Some(0.0));
        assert_eq!(rep.get(Metric::Mse), Some(0.0));
        let m = [3.75; 4];
        let rep = regression_report(&y, &m).unwrap();
        assert_eq!(rep.get(Metric::R2), Some(0.0));
        assert!(rep.is_undefined(Metric::Pearson));
    }

    #[test]
    fn constant_target_flags_r2() {
        let rep = regression_report(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(rep.is_undefined(Metric::R2));
        assert!(rep.is_undefined(Metric::Pearson));
    }

    #[test]
    fn mape_skips_zero_targets() {
        let rep = regression_report(&[0.0, 2.0, 4.0], &[5.0, 1.0, 5.0]).unwrap();
        assert!((rep.get(Metric::Mape).unwrap() - (0.5 + 0.25) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("map".parse::<Metric>().is_err());
    }
}
