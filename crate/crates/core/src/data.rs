//! Tabular datasets: CSV ingestion, one-hot encoding, train/test splitting and
//! rule-labelled synthetic benchmarks.
//!
//! Categorical feature columns are stored as category codes (`0.0`, `1.0`, ...)
//! in first-appearance order; [`one_hot_encode`] expands them into indicator
//! columns. Classification targets are stored as class indices into
//! [`Dataset::class_labels`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Classification => f.write_str("classification"),
            TaskKind::Regression => f.write_str("regression"),
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "classification" | "c" => Ok(TaskKind::Classification),
            "regression" | "r" => Ok(TaskKind::Regression),
            other => Err(Error::invalid(format!("unknown task kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    /// Category labels, indexed by code. Empty for numeric columns.
    pub categories: Vec<String>,
}

impl ColumnMeta {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnMeta {
            name: name.into(),
            kind: ColumnKind::Numeric,
            categories: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Array2<f64>,
    /// Class index for classification, raw value for regression.
    pub target: Array1<f64>,
    pub columns: Vec<ColumnMeta>,
    pub task: TaskKind,
    /// Original label text per class index (classification only).
    pub class_labels: Vec<String>,
    pub target_name: String,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        target: Array1<f64>,
        columns: Vec<ColumnMeta>,
        task: TaskKind,
        class_labels: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        if features.nrows() != target.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} targets",
                features.nrows(),
                target.len()
            )));
        }
        if features.ncols() != columns.len() {
            return Err(Error::Dimension {
                expected: columns.len(),
                got: features.ncols(),
            });
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::invalid(format!("duplicate column name `{}`", c.name)));
            }
            if c.kind == ColumnKind::Categorical && c.categories.is_empty() {
                return Err(Error::invalid(format!("categorical column `{}` has no categories", c.name)));
            }
        }
        if features.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite value in dataset"));
        }
        if task == TaskKind::Classification {
            let k = class_labels.len() as f64;
            if let Some(bad) = target.iter().find(|&&t| t < 0.0 || t >= k || t.fract() != 0.0) {
                return Err(Error::invalid(format!("class index {bad} outside label set")));
            }
        }
        Ok(Dataset {
            features,
            target,
            columns,
            task,
            class_labels,
            target_name: target_name.into(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Number of classes; 0 for regression.
    pub fn n_classes(&self) -> usize {
        match self.task {
            TaskKind::Classification => self.class_labels.len(),
            TaskKind::Regression => 0,
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Class indices as `usize` (classification only).
    pub fn class_indices(&self) -> Vec<usize> {
        self.target.iter().map(|&t| t as usize).collect()
    }

    /// Rows selected by `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            target: self.target.select(Axis(0), indices),
            columns: self.columns.clone(),
            task: self.task,
            class_labels: self.class_labels.clone(),
            target_name: self.target_name.clone(),
        }
    }

    /// Per-feature `(min, max)` over all rows.
    pub fn feature_ranges(&self) -> Vec<(f64, f64)> {
        self.features
            .columns()
            .into_iter()
            .map(|c| {
                c.iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
            })
            .collect()
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "N/A" | "NaN" | "nan" | "null" | "?")
}

fn format_number(v: f64) -> String {
    format!("{v}")
}

/// Loads a comma-separated file with a mandatory header row.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str, task: TaskKind) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let target_pos = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::UnknownColumn(target_column.to_string()))?;

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::BadRow {
            row,
            message: e.to_string(),
        })?;
        for (j, cell) in record.iter().enumerate() {
            if is_missing(cell) {
                return Err(Error::BadRow {
                    row,
                    message: format!("missing value in column `{}`", headers[j]),
                });
            }
            cells[j].push(cell.to_string());
        }
    }
    let n = cells[target_pos].len();
    if n == 0 {
        return Err(Error::invalid(format!("{}: no data rows", path.display())));
    }

    let mut columns = Vec::new();
    let mut feature_cols: Vec<Vec<f64>> = Vec::new();
    for (j, name) in headers.iter().enumerate() {
        if j == target_pos {
            continue;
        }
        let (meta, values) = parse_feature_column(name, &cells[j]);
        columns.push(meta);
        feature_cols.push(values);
    }
    let mut features = Array2::zeros((n, columns.len()));
    for (j, col) in feature_cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            features[[i, j]] = v;
        }
    }

    let (target, class_labels) = parse_target(&cells[target_pos], task)?;
    Dataset::new(features, target, columns, task, class_labels, target_column)
}

fn parse_feature_column(name: &str, cells: &[String]) -> (ColumnMeta, Vec<f64>) {
    let parsed: Option<Vec<f64>> = cells
        .iter()
        .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect();
    match parsed {
        Some(values) => (ColumnMeta::numeric(name), values),
        None => {
            let mut categories: Vec<String> = Vec::new();
            let mut codes = Vec::with_capacity(cells.len());
            for c in cells {
                let code = match categories.iter().position(|k| k == c) {
                    Some(p) => p,
                    None => {
                        categories.push(c.clone());
                        categories.len() - 1
                    }
                };
                codes.push(code as f64);
            }
            (
                ColumnMeta {
                    name: name.to_string(),
                    kind: ColumnKind::Categorical,
                    categories,
                },
                codes,
            )
        }
    }
}

/// Numeric class labels are ordered by value so that `0`/`1` targets keep
/// their meaning; any other labels are ordered by first appearance.
fn parse_target(cells: &[String], task: TaskKind) -> Result<(Array1<f64>, Vec<String>)> {
    let numeric: Option<Vec<f64>> = cells.iter().map(|c| c.parse::<f64>().ok()).collect();
    match task {
        TaskKind::Regression => {
            let values = numeric.ok_or_else(|| {
                let row = cells.iter().position(|c| c.parse::<f64>().is_err()).unwrap_or(0) + 2;
                Error::BadRow {
                    row,
                    message: "regression target is not numeric".into(),
                }
            })?;
            Ok((Array1::from(values), Vec::new()))
        }
        TaskKind::Classification => {
            let mut labels: Vec<String> = Vec::new();
            let mut label_values: Vec<f64> = Vec::new();
            for (i, c) in cells.iter().enumerate() {
                if !labels.contains(c) {
                    if let Some(vals) = &numeric {
                        // "1" and "1.0" denote the same class
                        if label_values.contains(&vals[i]) {
                            continue;
                        }
                        label_values.push(vals[i]);
                    }
                    labels.push(c.clone());
                }
            }
            if numeric.is_some() {
                let mut order: Vec<usize> = (0..labels.len()).collect();
                order.sort_by(|&a, &b| label_values[a].total_cmp(&label_values[b]));
                labels = order.iter().map(|&i| labels[i].clone()).collect();
                label_values = order.iter().map(|&i| label_values[i]).collect();
            }
            let target = cells
                .iter()
                .enumerate()
                .map(|(i, c)| match &numeric {
                    Some(vals) => label_values.iter().position(|&v| v == vals[i]).unwrap() as f64,
                    None => labels.iter().position(|l| l == c).unwrap() as f64,
                })
                .collect();
            Ok((target, labels))
        }
    }
}

/// Writes the dataset back out with the target as the last column.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut header = dataset.feature_names();
    header.push(dataset.target_name.clone());
    w.write_record(&header).map_err(wrap)?;
    for (row, &t) in dataset.features.rows().into_iter().zip(dataset.target.iter()) {
        let mut rec: Vec<String> = row
            .iter()
            .zip(&dataset.columns)
            .map(|(&v, c)| match c.kind {
                ColumnKind::Numeric => format_number(v),
                ColumnKind::Categorical => c.categories[v as usize].clone(),
            })
            .collect();
        rec.push(match dataset.task {
            TaskKind::Classification => dataset.class_labels[t as usize].clone(),
            TaskKind::Regression => format_number(t),
        });
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Replaces each named categorical column by one indicator column per
/// category, named `<column>=<category>`, at the same position.
pub fn one_hot_encode(dataset: &Dataset, columns: &[&str]) -> Result<Dataset> {
    let mut targets = HashSet::new();
    for &name in columns {
        let idx = dataset
            .column_index(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        if dataset.columns[idx].kind != ColumnKind::Categorical {
            return Err(Error::invalid(format!("column `{name}` is not categorical")));
        }
        targets.insert(idx);
    }
    if targets.is_empty() {
        return Ok(dataset.clone());
    }

    let n = dataset.n_samples();
    let mut metas = Vec::new();
    let mut out_cols: Vec<Array1<f64>> = Vec::new();
    for (j, meta) in dataset.columns.iter().enumerate() {
        let col = dataset.features.column(j);
        if targets.contains(&j) {
            for (code, cat) in meta.categories.iter().enumerate() {
                metas.push(ColumnMeta::numeric(format!("{}={}", meta.name, cat)));
                out_cols.push(col.mapv(|v| if v as usize == code { 1.0 } else { 0.0 }));
            }
        } else {
            metas.push(meta.clone());
            out_cols.push(col.to_owned());
        }
    }
    let mut features = Array2::zeros((n, metas.len()));
    for (j, col) in out_cols.iter().enumerate() {
        features.column_mut(j).assign(col);
    }
    Dataset::new(
        features,
        dataset.target.clone(),
        metas,
        dataset.task,
        dataset.class_labels.clone(),
        dataset.target_name.clone(),
    )
}

/// Index partition `(train, test)`, each sorted ascending.
pub fn split_indices(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
    stratify: bool,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let n = dataset.n_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = if stratify && dataset.task == TaskKind::Classification {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &t) in dataset.target.iter().enumerate() {
            by_class.entry(t as usize).or_default().push(i);
        }
        by_class.into_values().collect()
    } else {
        vec![(0..n).collect()]
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut g in groups {
        g.shuffle(&mut rng);
        let n_test = (g.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&g[..n_test]);
        train.extend_from_slice(&g[n_test..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} on {n} samples leaves an empty partition"
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64, stratify: bool) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(dataset, test_fraction, seed, stratify)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Closed interval condition on one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RulePredicate {
    /// 0-based feature index (`F1` is index 0).
    pub feature_index: usize,
    pub lower: f64,
    pub upper: f64,
}

impl RulePredicate {
    pub fn new(feature_index: usize, lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::invalid(format!("empty interval [{lower}, {upper}]")));
        }
        Ok(RulePredicate {
            feature_index,
            lower,
            upper,
        })
    }

    pub fn holds(&self, row: &[f64]) -> bool {
        let v = row[self.feature_index];
        self.lower <= v && v <= self.upper
    }
}

/// A conjunction of interval predicates over features drawn from `[0, 1]`.
///
/// Text form, one item per line, `#` starts a comment:
///
/// ```text
/// n_features: 17
/// F3, 0.7, 0.9
/// F6, 0.2, 0.35
/// ```
///
/// Features are named `F1..Fn`. Open bounds are written `-inf` / `inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub predicates: Vec<RulePredicate>,
    pub n_features: usize,
}

impl RuleSpec {
    pub fn new(predicates: Vec<RulePredicate>, n_features: usize) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::invalid("n_features must be positive"));
        }
        if let Some(p) = predicates.iter().find(|p| p.feature_index >= n_features) {
            return Err(Error::invalid(format!(
                "predicate on F{} but only {n_features} features",
                p.feature_index + 1
            )));
        }
        Ok(RuleSpec {
            predicates,
            n_features,
        })
    }

    /// Label of one row: 1 iff every predicate holds.
    pub fn label(&self, row: &[f64]) -> u8 {
        u8::from(self.predicates.iter().all(|p| p.holds(row)))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut n_features = None;
        let mut predicates = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| Error::RuleSpec {
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("n_features") {
                let v = rest.trim_start_matches([' ', ':', '=']).trim();
                n_features = Some(v.parse::<usize>().map_err(|_| err(format!("bad n_features `{v}`")))?);
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(err("expected `feature, lower, upper`".into()));
            }
            let idx = parts[0]
                .strip_prefix('F')
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .ok_or_else(|| err(format!("bad feature name `{}`", parts[0])))?;
            let bound = |s: &str| -> Result<f64> {
                match s {
                    "-inf" => Ok(f64::NEG_INFINITY),
                    "inf" | "+inf" => Ok(f64::INFINITY),
                    _ => s.parse::<f64>().map_err(|_| err(format!("bad bound `{s}`"))),
                }
            };
            let p = RulePredicate::new(idx - 1, bound(parts[1])?, bound(parts[2])?)
                .map_err(|e| err(e.to_string()))?;
            predicates.push(p);
        }
        let n_features = n_features.ok_or(Error::RuleSpec {
            line: 0,
            message: "missing n_features".into(),
        })?;
        RuleSpec::new(predicates, n_features)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let fmt_bound = |v: f64| {
            if v == f64::INFINITY {
                "inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{v}")
            }
        };
        let mut s = format!("n_features: {}\n", self.n_features);
        for p in &self.predicates {
            s.push_str(&format!(
                "F{}, {}, {}\n",
                p.feature_index + 1,
                fmt_bound(p.lower),
                fmt_bound(p.upper)
            ));
        }
        s
    }

    /// Two-predicate rule over 17 features: `0.7 <= F3 <= 0.9 AND 0.2 <= F6 <= 0.35`.
    pub fn two_feature_box() -> Self {
        RuleSpec {
            predicates: vec![
                RulePredicate {
                    feature_index: 2,
                    lower: 0.7,
                    upper: 0.9,
                },
                RulePredicate {
                    feature_index: 5,
                    lower: 0.2,
                    upper: 0.35,
                },
            ],
            n_features: 17,
        }
    }

    /// Six-predicate rule hidden among 100 features (94 pure-noise columns).
    pub fn six_feature_noise() -> Self {
        let p = |f: usize, lower: f64, upper: f64| RulePredicate {
            feature_index: f - 1,
            lower,
            upper,
        };
        RuleSpec {
            predicates: vec![
                p(4, 0.1, 0.5),
                p(10, 0.6, f64::INFINITY),
                p(20, f64::NEG_INFINITY, 0.8),
                p(31, f64::NEG_INFINITY, 0.25),
                p(57, 0.4, 0.7),
                p(85, 0.4, f64::INFINITY),
            ],
            n_features: 100,
        }
    }
}

/// Draws features i.i.d. uniform on `[0, 1)` and labels rows with `spec`.
pub fn generate_synthetic(spec: &RuleSpec, n_samples: usize, seed: u64) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let d = spec.n_features;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((n_samples, d));
    let mut target = Array1::zeros(n_samples);
    for i in 0..n_samples {
        let mut row = features.row_mut(i);
        for v in row.iter_mut() {
            *v = rng.gen::<f64>();
        }
        target[i] = f64::from(spec.label(row.as_slice().expect("row-major")));
    }
    let columns = (1..=d).map(|k| ColumnMeta::numeric(format!("F{k}"))).collect();
    Dataset::new(
        features,
        target,
        columns,
        TaskKind::Classification,
        vec!["0".into(), "1".into()],
        "class",
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_csv_parses() {
        let f = write_tmp("a,b,y\n0.5,1,0\n0.25,2,1\n");
        let ds = load_csv(f.path(), "y", TaskKind::Classification).unwrap();
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.class_labels, vec!["0", "1"]);
        assert_eq!(ds.target.to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn numeric_labels_are_sorted_by_value() {
        let f = write_tmp("a,y\n1,1\n2,0\n3,1\n");
        let ds = load_csv(f.path(), "y", TaskKind::Classification).unwrap();
        assert_eq!(ds.class_labels, vec!["0", "1"]);
        assert_eq!(ds.target.to_vec(), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn text_labels_follow_first_appearance() {
        let f = write_tmp("a,y\n1,yes\n2,no\n3,yes\n");
        let ds = load_csv(f.path(), "y", TaskKind::Classification).unwrap();
        assert_eq!(ds.class_labels, vec!["yes", "no"]);
        assert_eq!(ds.target.to_vec(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn blank_cell_names_the_row() {
        let f = write_tmp("a,b,y\n1,2,0\n3,,1\n");
        let err = load_csv(f.path(), "y", TaskKind::Classification).unwrap_err();
        match err {
            Error::BadRow { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_target_column_and_file() {
        let f = write_tmp("a,b\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), "y", TaskKind::Classification),
            Err(Error::UnknownColumn(_))
        ));
        assert!(matches!(
            load_csv("/nonexistent/file.csv", "y", TaskKind::Classification),
            Err(Error::Csv { .. })
        ));
    }

    #[test]
    fn text_column_becomes_categorical() {
        let f = write_tmp("sex,age,y\nM,40,1\nF,50,0\nM,60,1\n");
        let ds = load_csv(f.path(), "y", TaskKind::Classification).unwrap();
        assert_eq!(ds.columns[0].kind, ColumnKind::Categorical);
        assert_eq!(ds.columns[0].categories, vec!["M", "F"]);
        assert_eq!(ds.features.column(0).to_vec(), vec![0.0, 1.0, 0.0]);
        assert_eq!(ds.columns[1].kind, ColumnKind::Numeric);
    }

    fn categorical_dataset() -> Dataset {
        let f = write_tmp("c3,x,c2,y\na,1,u,0\nb,2,v,1\nc,3,u,0\nb,4,v,1\n");
        load_csv(f.path(), "y", TaskKind::Classification).unwrap()
    }

    #[test]
    fn one_hot_expands_columns_in_place() {
        let ds = categorical_dataset();
        let enc = one_hot_encode(&ds, &["c3", "c2"]).unwrap();
        assert_eq!(enc.n_features(), ds.n_features() + 3);
        assert_eq!(
            enc.feature_names(),
            vec!["c3=a", "c3=b", "c3=c", "x", "c2=u", "c2=v"]
        );
        // second row had c3 = b
        assert_eq!(enc.features.row(1).to_vec()[..3], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn one_hot_identity_and_errors() {
        let ds = categorical_dataset();
        assert_eq!(one_hot_encode(&ds, &[]).unwrap(), ds);
        assert!(matches!(one_hot_encode(&ds, &["nope"]), Err(Error::UnknownColumn(_))));
        assert!(one_hot_encode(&ds, &["x"]).is_err());
    }

    fn balanced(n: usize) -> Dataset {
        let features = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let target = Array1::from_shape_fn(n, |i| (i % 2) as f64);
        Dataset::new(
            features,
            target,
            vec![ColumnMeta::numeric("x")],
            TaskKind::Classification,
            vec!["0".into(), "1".into()],
            "y",
        )
        .unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = balanced(100);
        let (tr, te) = split_indices(&ds, 0.2, 7, false).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        assert_eq!(split_indices(&ds, 0.2, 7, false).unwrap(), (tr, te));
    }

    #[test]
    fn stratified_split_is_exact_on_balanced_classes() {
        let ds = balanced(100);
        let (_, te) = split(&ds, 0.2, 3, true).unwrap();
        let ones = te.target.iter().filter(|&&t| t == 1.0).count();
        assert_eq!((te.n_samples(), ones), (20, 10));
    }

    #[test]
    fn split_rejects_empty_partition() {
        let ds = balanced(2);
        assert!(split(&ds, 0.999, 1, false).is_err());
    }

    #[test]
    fn rule_examples() {
        let box2 = RuleSpec::two_feature_box();
        let mut row = vec![0.0; 17];
        row[2] = 0.8;
        row[5] = 0.3;
        assert_eq!(box2.label(&row), 1);
        let six = RuleSpec::six_feature_noise();
        assert_eq!(six.label(&[0.2; 100]), 0);
        // closed intervals
        row[2] = 0.7;
        row[5] = 0.35;
        assert_eq!(box2.label(&row), 1);
    }

    #[test]
    fn rule_text_round_trip() {
        for spec in [RuleSpec::two_feature_box(), RuleSpec::six_feature_noise()] {
            assert_eq!(RuleSpec::parse(&spec.to_text()).unwrap(), spec);
        }
        assert!(RuleSpec::parse("n_features: 3\nF4, 0, 1\n").is_err());
        assert!(RuleSpec::parse("n_features: 3\nF1, 0.9, 0.1\n").is_err());
        assert!(RuleSpec::parse("F1, 0, 1\n").is_err());
    }

    #[test]
    fn synthetic_shape() {
        let ds = generate_synthetic(&RuleSpec::six_feature_noise(), 2000, 1).unwrap();
        assert_eq!((ds.n_samples(), ds.n_features()), (2000, 100));
        assert_eq!(ds.columns[99].name, "F100");
        assert!(generate_synthetic(&RuleSpec::two_feature_box(), 0, 1).is_err());
    }
}
