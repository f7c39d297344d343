use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::consensus::ConsensusReport;
use crate::error::{Error, Result};
use crate::explain::{AttributionMatrix, AttributionVector, Counterfactuals, Curve, LocalExplanation, Response};
use crate::metrics::MetricsReport;

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Writes a header and rows of already-formatted cells.
fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(&r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Indices ordered by descending value, ties to the lower index.
pub fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Long format: `sample_id,feature,attribution`.
pub fn write_local(path: &Path, m: &AttributionMatrix) -> Result<()> {
    let rows = m.sample_ids.iter().enumerate().flat_map(|(i, id)| {
        m.features
            .iter()
            .enumerate()
            .map(move |(j, f)| vec![id.to_string(), f.clone(), num(m.rows[[i, j]])])
    });
    write_rows(path, &["sample_id", "feature", "attribution"], rows)
}

/// `feature,<value_header>,std`, strongest first.
pub fn write_global(path: &Path, v: &AttributionVector, value_header: &str) -> Result<()> {
    let rows = descending_order(&v.values)
        .into_iter()
        .map(|j| vec![v.features[j].clone(), num(v.values[j]), num(v.dispersion[j])]);
    write_rows(path, &["feature", value_header, "std"], rows)
}

/// `metric,value`; an undefined metric is written as 0 plus `<metric>_undefined,1`.
pub fn write_metrics(path: &Path, r: &MetricsReport) -> Result<()> {
    let mut rows = Vec::new();
    for (name, v) in &r.values {
        rows.push(vec![name.clone(), num(*v)]);
        if r.undefined.contains(name) {
            rows.push(vec![format!("{name}_undefined"), "1".into()]);
        }
    }
    write_rows(path, &["metric", "value"], rows)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    kind: String,
    subject: &'a str,
    cutoff: Option<f64>,
    normalization: &'a Option<String>,
    included: &'a [String],
    excluded: &'a [crate::consensus::Exclusion],
}

/// `rank,feature,score,dispersion` plus a JSON sidecar with contributors and cutoff.
pub fn write_consensus(csv_path: &Path, json_path: &Path, r: &ConsensusReport) -> Result<()> {
    let rows = r
        .ranking
        .iter()
        .map(|f| vec![f.rank.to_string(), f.feature.clone(), num(f.score), num(f.dispersion)]);
    write_rows(csv_path, &["rank", "feature", "score", "dispersion"], rows)?;
    let side = Sidecar {
        kind: r.kind.id().to_string(),
        subject: &r.subject,
        cutoff: r.cutoff,
        normalization: &r.normalization,
        included: &r.included,
        excluded: &r.excluded,
    };
    let text = serde_json::to_string_pretty(&side)? + "\n";
    fs::write(json_path, text).map_err(|e| Error::io(json_path, e))
}

/// `grid_value,response` for mean curves, `grid_value,response,sample_id` for ICE.
pub fn write_curve(path: &Path, curve: &Curve, sample_ids: &[usize]) -> Result<()> {
    match &curve.response {
        Response::Mean(r) => write_rows(
            path,
            &["grid_value", "response"],
            curve.grid.iter().zip(r).map(|(g, v)| vec![num(*g), num(*v)]),
        ),
        Response::PerSample(rows) => {
            if rows.len() != sample_ids.len() {
                return Err(Error::invalid("ICE rows differ from sample ids"));
            }
            let out = rows.iter().zip(sample_ids).flat_map(|(r, id)| {
                curve
                    .grid
                    .iter()
                    .zip(r)
                    .map(move |(g, v)| vec![num(*g), num(*v), id.to_string()])
            });
            write_rows(path, &["grid_value", "response", "sample_id"], out)
        }
    }
}

/// `sample_id,rank,rule,weight,direction`.
pub fn write_rules(path: &Path, explanations: &[LocalExplanation]) -> Result<()> {
    let rows = explanations.iter().flat_map(|e| {
        e.rules.iter().enumerate().map(move |(k, r)| {
            vec![
                e.sample_id.to_string(),
                (k + 1).to_string(),
                r.text.clone(),
                num(r.weight),
                match r.direction {
                    crate::explain::Direction::Positive => "positive".into(),
                    crate::explain::Direction::Negative => "negative".into(),
                },
            ]
        })
    });
    write_rows(path, &["sample_id", "rank", "rule", "weight", "direction"], rows)
}

/// `sample_id,cf,found,<features...>`; a sample without counterfactuals gets one row with `found = 0`.
pub fn write_counterfactuals(path: &Path, features: &[String], items: &[(usize, Counterfactuals)]) -> Result<()> {
    let mut header = vec!["sample_id", "cf", "found"];
    header.extend(features.iter().map(String::as_str));
    let mut rows = Vec::new();
    for (id, c) in items {
        if c.points.nrows() == 0 {
            let mut r = vec![id.to_string(), "0".into(), "0".into()];
            r.extend(std::iter::repeat_n(String::new(), features.len()));
            rows.push(r);
        }
        for (k, p) in c.points.rows().into_iter().enumerate() {
            let mut r = vec![id.to_string(), (k + 1).to_string(), "1".into()];
            r.extend(p.iter().map(|v| num(*v)));
            rows.push(r);
        }
    }
    write_rows(path, &header, rows)
}

/// `sample_id,y_true,y_pred,score`.
pub fn write_predictions(path: &Path, ids: &[usize], y_true: &[f64], y_pred: &[f64], score: &[f64]) -> Result<()> {
    let rows = (0..ids.len()).map(|i| vec![ids[i].to_string(), num(y_true[i]), num(y_pred[i]), num(score[i])]);
    write_rows(path, &["sample_id", "y_true", "y_pred", "score"], rows)
}

/// Placeholder for a task that produced no result.
pub fn write_failed(path: &Path, reason: &str) -> Result<()> {
    write_rows(path, &["status=failed"], [vec![reason.to_string()]])
}

/// `model,score`.
pub fn write_scores(path: &Path, scores: &[crate::consensus::ModelScore]) -> Result<()> {
    write_rows(path, &["model", "score"], scores.iter().map(|s| vec![s.model.clone(), num(s.score)]))
}

/// Reads a `model,score` file.
pub fn read_scores(path: &Path) -> Result<Vec<crate::consensus::ModelScore>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = |m: &str| Error::BadRow {
            row: i + 2,
            message: m.to_string(),
        };
        let model = rec.get(0).ok_or_else(|| bad("missing model"))?;
        let score = rec
            .get(1)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| bad("missing or unparseable score"))?;
        out.push(crate::consensus::ModelScore::new(model, score));
    }
    Ok(out)
}

/// Reads a global attribution file (`feature,value,std`). Rows come back in
/// natural feature-name order, which fixes the index used for tie-breaking.
pub fn read_global(path: &Path) -> Result<AttributionVector> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let (mut names, mut values, mut disp) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let cell = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::BadRow {
                    row: i + 2,
                    message: format!("column {} is not a number", k + 1),
                })
        };
        names.push(rec.get(0).unwrap_or_default().to_string());
        values.push(cell(1)?);
        disp.push(if rec.len() > 2 { cell(2)?.abs() } else { 0.0 });
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| natural_cmp(&names[a], &names[b]));
    AttributionVector::new(
        order.iter().map(|&i| names[i].clone()).collect(),
        order.iter().map(|&i| values[i]).collect(),
        order.iter().map(|&i| disp[i]).collect(),
    )
}

/// Orders `F2` before `F10`: digit runs compare numerically.
pub fn natural_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for (x, y) in ca.iter().zip(&cb) {
        let ord = match (x.0, y.0) {
            (true, true) => {
                let (tx, ty) = (x.1.trim_start_matches('0'), y.1.trim_start_matches('0'));
                tx.len().cmp(&ty.len()).then(tx.cmp(ty))
            }
            _ => x.1.cmp(y.1),
        };
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len()).then(a.cmp(b))
}
