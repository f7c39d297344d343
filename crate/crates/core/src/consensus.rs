//! Consensus rankings across models and methods.
//!
//! Three procedures merge [`AttributionVector`]s into one ranking:
//!
//! * attribution by method: one method, many models. Each model's vector is
//!   normalized to unit L1 of absolute values, then averaged.
//! * rank by method: one method, many models. Features are ranked per model
//!   by descending `|attribution|` and the ranks averaged.
//! * rank by model: one model, many methods, with the same rank averaging.
//!
//! The two by-method procedures first drop models whose score is below the
//! cutoff (inclusive: a score equal to the cutoff is kept). Ties are always
//! broken towards the lower feature index. Contributors are keyed by id in
//! a `BTreeMap`, so input order never affects the result.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::AttributionVector;

pub const DEFAULT_CUTOFF: f64 = 0.75;

/// Held-out score of one model: AUC for classifiers, R² for regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    pub score: f64,
}

impl ModelScore {
    pub fn new(model: &str, score: f64) -> Self {
        ModelScore {
            model: model.to_string(),
            score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusKind {
    AttributionByMethod,
    RankByMethod,
    RankByModel,
}

impl ConsensusKind {
    pub const ALL: [ConsensusKind; 3] = [
        ConsensusKind::AttributionByMethod,
        ConsensusKind::RankByMethod,
        ConsensusKind::RankByModel,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ConsensusKind::AttributionByMethod => "attribution_by_method",
            ConsensusKind::RankByMethod => "rank_by_method",
            ConsensusKind::RankByModel => "rank_by_model",
        }
    }
}

impl fmt::Display for ConsensusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ConsensusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConsensusKind::ALL
            .into_iter()
            .find(|k| k.id() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown consensus kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    /// 1-based position in the consensus.
    pub rank: usize,
    pub feature: String,
    pub index: usize,
    /// Mean normalized attribution, or mean rank for rank consensus.
    pub score: f64,
    pub dispersion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub kind: ConsensusKind,
    /// Method id for the by-method kinds, model id for rank by model.
    pub subject: String,
    pub cutoff: Option<f64>,
    pub normalization: Option<String>,
    pub included: Vec<String>,
    pub excluded: Vec<Exclusion>,
    pub ranking: Vec<RankedFeature>,
}

impl ConsensusReport {
    /// Feature names in consensus order.
    pub fn order(&self) -> Vec<&str> {
        self.ranking.iter().map(|r| r.feature.as_str()).collect()
    }
}

/// Splits scores into `(kept, dropped)`; a score equal to the cutoff is kept.
pub fn filter_models(scores: &[ModelScore], cutoff: f64) -> Result<(Vec<ModelScore>, Vec<ModelScore>)> {
    if !(0.0..=1.0).contains(&cutoff) {
        return Err(Error::invalid(format!("cutoff {cutoff} must lie in [0, 1]")));
    }
    Ok(scores.iter().cloned().partition(|s| s.score >= cutoff))
}

/// `|v| / sum|v|`. An all-zero vector is returned unchanged with `false`.
pub fn normalize_attribution(v: &AttributionVector) -> (AttributionVector, bool) {
    let total: f64 = v.values.iter().map(|x| x.abs()).sum();
    if total == 0.0 || !total.is_finite() {
        return (v.clone(), false);
    }
    let mut out = v.clone();
    out.values = v.values.iter().map(|x| x.abs() / total).collect();
    out.dispersion = v.dispersion.iter().map(|d| d / total).collect();
    (out, true)
}

/// 1-based ranks by descending `|value|`, ties to the lower index.
pub fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    let mut r = vec![0; values.len()];
    for (pos, &j) in order.iter().enumerate() {
        r[j] = pos + 1;
    }
    r
}

fn common_features<'a>(vectors: impl Iterator<Item = &'a AttributionVector>) -> Result<Vec<String>> {
    let mut names: Option<&Vec<String>> = None;
    for v in vectors {
        match names {
            None => names = Some(&v.features),
            Some(n) if *n != v.features => {
                return Err(Error::invalid("contributions disagree on feature names"));
            }
            Some(_) => {}
        }
    }
    names
        .cloned()
        .ok_or_else(|| Error::invalid("no contributions to merge"))
}

fn mean_std(rows: &[Vec<f64>], j: usize) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Rows become per-feature (mean, std); `descending` orders by larger score first.
fn rank_features(names: &[String], rows: &[Vec<f64>], descending: bool) -> Vec<RankedFeature> {
    let stats: Vec<(f64, f64)> = (0..names.len()).map(|j| mean_std(rows, j)).collect();
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| {
        let c = stats[a].0.total_cmp(&stats[b].0);
        (if descending { c.reverse() } else { c }).then(a.cmp(&b))
    });
    order
        .into_iter()
        .enumerate()
        .map(|(pos, j)| RankedFeature {
            rank: pos + 1,
            feature: names[j].clone(),
            index: j,
            score: stats[j].0,
            dispersion: stats[j].1,
        })
        .collect()
}

/// Keeps contributors whose model scores at or above the cutoff.
fn select(
    contributions: &BTreeMap<String, AttributionVector>,
    scores: &[ModelScore],
    cutoff: f64,
) -> Result<(Vec<String>, Vec<Exclusion>)> {
    let (kept, dropped) = filter_models(scores, cutoff)?;
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    for id in contributions.keys() {
        if kept.iter().any(|s| &s.model == id) {
            included.push(id.clone());
        } else if let Some(s) = dropped.iter().find(|s| &s.model == id) {
            excluded.push(Exclusion {
                id: id.clone(),
                reason: format!("score {} below cutoff {cutoff}", s.score),
            });
        } else {
            excluded.push(Exclusion {
                id: id.clone(),
                reason: "no score".to_string(),
            });
        }
    }
    if included.is_empty() {
        return Err(Error::NoModelsAboveCutoff { cutoff });
    }
    Ok((included, excluded))
}

/// Mean of unit-L1 absolute attributions over the models that pass the cutoff.
pub fn consensus_attribution_by_method(
    method: &str,
    contributions: &BTreeMap<String, AttributionVector>,
    scores: &[ModelScore],
    cutoff: f64,
) -> Result<ConsensusReport> {
    let names = common_features(contributions.values())?;
    let (included, excluded) = select(contributions, scores, cutoff)?;
    let rows: Vec<Vec<f64>> = included
        .iter()
        .map(|id| normalize_attribution(&contributions[id]).0.values)
        .collect();
    Ok(ConsensusReport {
        kind: ConsensusKind::AttributionByMethod,
        subject: method.to_string(),
        cutoff: Some(cutoff),
        normalization: Some("unit_l1_abs".to_string()),
        included,
        excluded,
        ranking: rank_features(&names, &rows, true),
    })
}

/// Mean rank over the models that pass the cutoff.
pub fn consensus_rank_by_method(
    method: &str,
    contributions: &BTreeMap<String, AttributionVector>,
    scores: &[ModelScore],
    cutoff: f64,
) -> Result<ConsensusReport> {
    let names = common_features(contributions.values())?;
    let (included, excluded) = select(contributions, scores, cutoff)?;
    let rows: Vec<Vec<f64>> = included
        .iter()
        .map(|id| ranks(&contributions[id].values).into_iter().map(|r| r as f64).collect())
        .collect();
    Ok(ConsensusReport {
        kind: ConsensusKind::RankByMethod,
        subject: method.to_string(),
        cutoff: Some(cutoff),
        normalization: None,
        included,
        excluded,
        ranking: rank_features(&names, &rows, false),
    })
}

/// Mean rank over every method applied to one model; no cutoff.
pub fn consensus_rank_by_model(model: &str, contributions: &BTreeMap<String, AttributionVector>) -> Result<ConsensusReport> {
    let names = common_features(contributions.values())?;
    let rows: Vec<Vec<f64>> = contributions
        .values()
        .map(|v| ranks(&v.values).into_iter().map(|r| r as f64).collect())
        .collect();
    Ok(ConsensusReport {
        kind: ConsensusKind::RankByModel,
        subject: model.to_string(),
        cutoff: None,
        normalization: None,
        included: contributions.keys().cloned().collect(),
        excluded: Vec::new(),
        ranking: rank_features(&names, &rows, false),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(values: &[f64]) -> AttributionVector {
        let names = (1..=values.len()).map(|i| format!("F{i}")).collect();
        AttributionVector::new(names, values.to_vec(), vec![0.0; values.len()]).unwrap()
    }

    fn contributions(items: &[(&str, &[f64])]) -> BTreeMap<String, AttributionVector> {
        items.iter().map(|(id, v)| (id.to_string(), vector(v))).collect()
    }

    #[test]
    fn filter_examples() {
        let s = [ModelScore::new("a", 1.0), ModelScore::new("b", 0.976), ModelScore::new("c", 0.6)];
        let (kept, dropped) = filter_models(&s, DEFAULT_CUTOFF).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(dropped[0].model, "c");
        assert_eq!(filter_models(&s, 0.0).unwrap().0.len(), 3);
        let edge = [ModelScore::new("e", 0.75)];
        assert_eq!(filter_models(&edge, 0.75).unwrap().0.len(), 1);
        assert!(filter_models(&s, 1.5).is_err());
    }

    #[test]
    fn normalize_examples() {
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
        assert!(close(&normalize_attribution(&vector(&[0.2, 0.8])).0.values, &[0.2, 0.8]));
        assert!(close(&normalize_attribution(&vector(&[2.0, 8.0])).0.values, &[0.2, 0.8]));
        assert!(close(&normalize_attribution(&vector(&[-1.0, 1.0])).0.values, &[0.5, 0.5]));
        let (z, ok) = normalize_attribution(&vector(&[0.0, 0.0]));
        assert!(!ok);
        assert_eq!(z.values, vec![0.0, 0.0]);
    }

    #[test]
    fn attribution_mean() {
        let c = contributions(&[("m1", &[0.2, 0.8]), ("m2", &[0.4, 0.6])]);
        let s = [ModelScore::new("m1", 0.9), ModelScore::new("m2", 0.9)];
        let r = consensus_attribution_by_method("lime", &c, &s, 0.75).unwrap();
        assert_eq!(r.order(), vec!["F2", "F1"]);
        assert!((r.ranking[0].score - 0.7).abs() < 1e-15);
        assert!((r.ranking[1].score - 0.3).abs() < 1e-15);
    }

    #[test]
    fn single_model_has_zero_dispersion() {
        let c = contributions(&[("m1", &[1.0, 3.0]), ("m2", &[5.0, 1.0])]);
        let s = [ModelScore::new("m1", 0.9), ModelScore::new("m2", 0.5)];
        let r = consensus_attribution_by_method("shap", &c, &s, 0.75).unwrap();
        assert_eq!(r.included, vec!["m1"]);
        assert_eq!(r.excluded[0].id, "m2");
        assert_eq!(r.ranking[0].score, 0.75);
        assert!(r.ranking.iter().all(|f| f.dispersion == 0.0));
    }

    #[test]
    fn no_survivor_names_the_cutoff() {
        let c = contributions(&[("m1", &[1.0])]);
        let err = consensus_rank_by_method("lime", &c, &[ModelScore::new("m1", 0.5)], 0.75).unwrap_err();
        assert!(err.to_string().contains("0.75"), "{err}");
    }

    #[test]
    fn rank_ties_break_to_lower_index() {
        let c = contributions(&[("a", &[3.0, 2.0, 1.0]), ("b", &[2.0, 3.0, 1.0])]);
        let s = [ModelScore::new("a", 1.0), ModelScore::new("b", 1.0)];
        let r = consensus_rank_by_method("lime", &c, &s, 0.75).unwrap();
        assert_eq!(r.order(), vec!["F1", "F2", "F3"]);
        let scores: Vec<f64> = r.ranking.iter().map(|f| f.score).collect();
        assert_eq!(scores, vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn rank_by_model_single_method() {
        let c = contributions(&[("lime", &[0.1, -0.9, 0.5])]);
        let r = consensus_rank_by_model("MLP", &c).unwrap();
        assert_eq!(r.order(), vec!["F2", "F3", "F1"]);
        assert!(consensus_rank_by_model("MLP", &BTreeMap::new()).is_err());
    }
}
