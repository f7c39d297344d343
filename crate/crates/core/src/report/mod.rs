//! CSV tables, JSON sidecars and SVG plots for a finished run.

pub mod svg;
pub mod tables;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::explain::{AttributionVector, Curve, LocalExplanation, Response};
use crate::models::persist;
use crate::pipeline::{Context, FeatureCurves, LocalExtra, MethodOutput, RunOutputs, TaskOutcome};

pub use svg::{render, render_to_string, PlotKind, PlotSpec, Series};

/// Bars shown in global and consensus plots.
pub const TOP_BARS: usize = 10;

/// Artifact name to path relative to the run directory.
pub type ArtifactMap = BTreeMap<String, String>;

/// Maps any name to `[A-Za-z0-9._-]+`.
pub fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    if s.is_empty() { "_".into() } else { s }
}

struct Out<'a> {
    dir: &'a Path,
    artifacts: &'a mut ArtifactMap,
}

impl Out<'_> {
    /// Creates `sub/` and returns the full path of `sub/name`, registering it.
    fn file(&mut self, sub: &str, name: &str) -> Result<std::path::PathBuf> {
        let d = self.dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        let rel = if sub.is_empty() { name.to_string() } else { format!("{sub}/{name}") };
        let key = rel.rsplit_once('.').map_or(rel.as_str(), |(k, _)| k).to_string();
        self.artifacts.insert(key, rel);
        Ok(d.join(name))
    }
}

/// Top bars of a vector in descending order.
fn bar_spec(title: &str, x_label: &str, v: &AttributionVector) -> PlotSpec {
    bars_in_order(title, x_label, v, tables::descending_order(&v.values))
}

fn bars_in_order(title: &str, x_label: &str, v: &AttributionVector, order: Vec<usize>) -> PlotSpec {
    let top: Vec<usize> = order.into_iter().take(TOP_BARS).collect();
    PlotSpec::bar(
        title,
        x_label,
        top.iter().map(|&j| v.features[j].clone()).collect(),
        top.iter().map(|&j| v.values[j]).collect(),
        Some(top.iter().map(|&j| v.dispersion[j]).collect()),
    )
}

fn curve_series(curve: &Curve) -> Vec<Series> {
    match &curve.response {
        Response::Mean(r) => vec![Series {
            name: "mean".into(),
            x: curve.grid.clone(),
            y: r.clone(),
        }],
        Response::PerSample(rows) => rows
            .iter()
            .enumerate()
            .map(|(i, r)| Series {
                name: format!("ice_{i}"),
                x: curve.grid.clone(),
                y: r.clone(),
            })
            .collect(),
    }
}

fn ale_spec(title: &str, feature: &str, ale: &crate::explain::Ale) -> PlotSpec {
    let mut s = PlotSpec::new(PlotKind::Curve, title, feature, "accumulated local effect");
    s.series = curve_series(&ale.curve);
    s
}

fn rule_panel(title: &str, e: &LocalExplanation, features: &[String], x: &[f64]) -> PlotSpec {
    let mut s = PlotSpec::new(PlotKind::RulePanel, title, "weight", "");
    s.series.push(Series {
        name: "weight".into(),
        x: (0..e.rules.len()).map(|i| i as f64).collect(),
        y: e.rules.iter().map(|r| r.weight).collect(),
    });
    s.labels = e.rules.iter().map(|r| r.text.clone()).collect();
    s.annotations = e
        .rules
        .iter()
        .map(|r| format!("{} = {}", features[r.feature], x[r.feature]))
        .collect();
    s
}

fn write_curves(out: &mut Out, ctx: &Context, model: &str, curves: &[FeatureCurves]) -> Result<()> {
    let names = ctx.train.feature_names();
    let ids = ctx.explained_ids();
    for fc in curves {
        let feat = sanitize(&names[fc.feature]);
        match &fc.pdp {
            Some(Ok((pdp, ice))) => {
                tables::write_curve(&out.file("curves", &format!("{model}_pdp_{feat}.csv"))?, pdp, &ids)?;
                tables::write_curve(&out.file("curves", &format!("{model}_ice_{feat}.csv"))?, ice, &ids)?;
                let mut s = PlotSpec::new(
                    PlotKind::CurveFamily,
                    &format!("{model} partial dependence of {}", names[fc.feature]),
                    &names[fc.feature],
                    "model output",
                );
                s.series = curve_series(ice);
                s.series.extend(curve_series(pdp));
                render(&s, out.file("plots", &format!("{model}_pdp_{feat}.svg"))?)?;
            }
            Some(Err(reason)) => {
                tables::write_failed(&out.file("curves", &format!("{model}_pdp_{feat}.csv"))?, reason)?;
            }
            None => {}
        }
        match &fc.ale {
            Some(Ok(a)) => {
                tables::write_curve(&out.file("curves", &format!("{model}_ale_{feat}.csv"))?, &a.curve, &ids)?;
                let s = ale_spec(&format!("{model} ALE of {}", names[fc.feature]), &names[fc.feature], a);
                render(&s, out.file("plots", &format!("{model}_ale_{feat}.svg"))?)?;
            }
            Some(Err(reason)) => {
                tables::write_failed(&out.file("curves", &format!("{model}_ale_{feat}.csv"))?, reason)?;
            }
            None => {}
        }
    }
    Ok(())
}

fn write_outcome(out: &mut Out, ctx: &Context, t: &TaskOutcome) -> Result<()> {
    let model = sanitize(&t.task.model);
    let method = t.task.method.id();
    let result = match &t.result {
        Ok(r) => r,
        Err(reason) => {
            let sub = if t.task.method.is_curve() { "curves" } else { "attributions" };
            return tables::write_failed(&out.file(sub, &format!("{model}_{method}_failed.csv"))?, reason);
        }
    };
    match result {
        MethodOutput::Global(v) => {
            tables::write_global(&out.file("attributions", &format!("{model}_{method}_global.csv"))?, v, "importance")?;
            let s = bar_spec(&format!("{model} {method} importance"), "importance", v);
            render(&s, out.file("plots", &format!("{model}_{method}_global.svg"))?)?;
        }
        MethodOutput::Local { matrix, global, extra } => {
            tables::write_local(&out.file("attributions", &format!("{model}_{method}_local.csv"))?, matrix)?;
            tables::write_global(
                &out.file("attributions", &format!("{model}_{method}_global.csv"))?,
                global,
                "mean_abs_attribution",
            )?;
            let s = bar_spec(&format!("{model} {method} mean |attribution|"), "mean |attribution|", global);
            render(&s, out.file("plots", &format!("{model}_{method}_global.svg"))?)?;
            match extra {
                LocalExtra::None | LocalExtra::Gaps(_) => {}
                LocalExtra::Lime(explanations) => {
                    tables::write_rules(&out.file("rules", &format!("{model}_lime_rules.csv"))?, explanations)?;
                    let names = ctx.train.feature_names();
                    for (e, &pos) in explanations.iter().zip(&ctx.explained).take(ctx.settings.rule_panels) {
                        if e.rules.is_empty() {
                            continue;
                        }
                        let x = ctx.test.features.row(pos).to_vec();
                        let s = rule_panel(&format!("{model} rules for sample {}", e.sample_id), e, &names, &x);
                        render(&s, out.file("plots", &format!("{model}_lime_rules_{}.svg", e.sample_id))?)?;
                    }
                }
                LocalExtra::Counterfactuals(items) => {
                    tables::write_counterfactuals(
                        &out.file("counterfactuals", &format!("{model}_dice.csv"))?,
                        &ctx.train.feature_names(),
                        items,
                    )?;
                }
            }
        }
        MethodOutput::Curves(curves) => write_curves(out, ctx, &model, curves)?,
    }
    Ok(())
}

/// Writes the tables and plots of one explain task.
pub fn write_task(dir: &Path, artifacts: &mut ArtifactMap, ctx: &Context, outcome: &TaskOutcome) -> Result<()> {
    write_outcome(&mut Out { dir, artifacts }, ctx, outcome)
}

/// Writes every table and plot of a run; returns the artifact map.
pub fn write_tables(run: &RunOutputs, dir: &Path) -> Result<ArtifactMap> {
    let mut artifacts = ArtifactMap::new();
    let mut out = Out {
        dir,
        artifacts: &mut artifacts,
    };
    let ctx = &run.prepared.ctx;
    let y_true = ctx.test.target.to_vec();
    for e in &run.models {
        let id = sanitize(&e.id);
        persist::save(&e.model, out.file("models", &format!("{id}.json"))?)?;
        tables::write_metrics(&out.file("metrics", &format!("{id}_metrics.csv"))?, &e.metrics)?;
        tables::write_predictions(
            &out.file("predictions", &format!("{id}_predictions.csv"))?,
            &ctx.test_ids,
            &y_true,
            &e.y_pred,
            &e.output,
        )?;
        if e.model.task == crate::data::TaskKind::Regression {
            let mut s = PlotSpec::new(PlotKind::Scatter, &format!("{id} predicted vs observed"), "observed", "predicted");
            s.series.push(Series {
                name: "test".into(),
                x: y_true.clone(),
                y: e.y_pred.clone(),
            });
            render(&s, out.file("plots", &format!("{id}_scatter.svg"))?)?;
        }
    }
    tables::write_scores(&out.file("", "model_scores.csv")?, &run.scores)?;

    for t in &run.tasks {
        write_outcome(&mut out, ctx, t)?;
    }
    for r in &run.consensus {
        let stem = format!("consensus_{}_{}", r.kind.id(), sanitize(&r.subject));
        let csv = out.file("consensus", &format!("{stem}.csv"))?;
        let json = out.file("consensus", &format!("{stem}.json"))?;
        tables::write_consensus(&csv, &json, r)?;
        let v = AttributionVector::new(
            r.ranking.iter().map(|f| f.feature.clone()).collect(),
            r.ranking.iter().map(|f| f.score).collect(),
            r.ranking.iter().map(|f| f.dispersion).collect(),
        )?;
        let label = if r.kind == crate::consensus::ConsensusKind::AttributionByMethod {
            "consensus attribution"
        } else {
            "consensus score"
        };
        let s = bars_in_order(&format!("{} {}", r.kind.id(), r.subject), label, &v, (0..v.len()).collect());
        render(&s, out.file("plots", &format!("{stem}.svg"))?)?;
    }
    Ok(artifacts)
}
