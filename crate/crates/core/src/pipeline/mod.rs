//! End-to-end runs: load, split, train, score, explain, merge, write.
//!
//! Everything written under the output directory is a pure function of the
//! configuration, except `run_info.json` and `timings.csv`, which record the
//! worker count and wall-clock timings. Seeds are derived from
//! `(seed, model id, method id)` so scheduling order never leaks into results.

mod config;
mod schedule;
mod task;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Axis;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::{self, ConsensusReport, ModelScore};
use crate::data::{self, Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::explain::Method;
use crate::metrics::{self, Metric, MetricsReport};
use crate::models::{self, grid_search, persist, HyperValue, Predictor, TrainedModel};
use crate::report;

pub use config::{resolve_rules, DataSource, ExplainSettings, ModelRequest, RunConfig, SampleSelector};
pub use schedule::{schedule, Completed};
pub use task::{
    derived_seed, execute, not_applicable, permutation_metric, Context, ExplainTask, FeatureCurves, LocalExtra,
    MethodOutput,
};

pub const MANIFEST: &str = "manifest.json";
pub const RUN_CONFIG: &str = "run_config.json";
pub const RUN_INFO: &str = "run_info.json";
pub const TIMINGS: &str = "timings.csv";

/// A dataset split into the parts every stage needs.
pub struct Prepared {
    pub dataset: Dataset,
    pub ctx: Context,
}

fn load(config: &RunConfig) -> Result<Dataset> {
    match &config.data {
        DataSource::Csv { path, target, task, encode } => {
            let ds = data::load_csv(path, target, *task)?;
            let cols: Vec<&str> = encode.iter().map(String::as_str).collect();
            data::one_hot_encode(&ds, &cols)
        }
        DataSource::Synthetic { rules, n_samples } => {
            data::generate_synthetic(&resolve_rules(rules)?, *n_samples, config.seed)
        }
    }
}

/// Loads and splits the data and fixes the explained samples and background.
pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let dataset = load(config).map_err(Error::at("load"))?;
    let stratify = dataset.task == TaskKind::Classification;
    let (train_idx, test_idx) =
        data::split_indices(&dataset, config.test_fraction, config.seed, stratify).map_err(Error::at("split"))?;
    let train = dataset.subset(&train_idx);
    let test = dataset.subset(&test_idx);

    let explained: Vec<usize> = match &config.samples {
        SampleSelector::All => (0..test.n_samples()).collect(),
        SampleSelector::First(n) => (0..test.n_samples().min(*n)).collect(),
        SampleSelector::Ids(ids) => ids
            .iter()
            .map(|id| {
                test_idx
                    .iter()
                    .position(|t| t == id)
                    .ok_or_else(|| Error::invalid(format!("sample {id} is not in the held-out set")))
            })
            .collect::<Result<_>>()
            .map_err(Error::at("split"))?,
    };

    let b = config.explain.shap_background.min(train.n_samples());
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(config.seed, "background", ""));
    let mut rows = index::sample(&mut rng, train.n_samples(), b).into_vec();
    rows.sort_unstable();
    let background = train.features.select(Axis(0), &rows);

    let curve_features = match &config.explain.curve_features {
        None => (0..dataset.n_features()).collect(),
        Some(names) => names
            .iter()
            .map(|n| dataset.column_index(n).ok_or_else(|| Error::UnknownColumn(n.clone())))
            .collect::<Result<_>>()
            .map_err(Error::at("load"))?,
    };

    Ok(Prepared {
        ctx: Context {
            train,
            test,
            test_ids: test_idx,
            explained,
            background,
            settings: config.explain.clone(),
            curve_features,
        },
        dataset,
    })
}

/// Metric optimized by the grid search.
pub fn selection_metric(train: &Dataset) -> Metric {
    match train.task {
        TaskKind::Regression => Metric::R2,
        TaskKind::Classification if train.n_classes() == 2 => Metric::Auc,
        TaskKind::Classification => Metric::Accuracy,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub params: BTreeMap<String, HyperValue>,
    pub cv_score: f64,
    /// Held-out score compared against the cutoff.
    pub score: f64,
    pub score_metric: String,
    pub passed_cutoff: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub model: String,
    pub method: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Success,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub features: Vec<String>,
    pub class_labels: Vec<String>,
    pub explained_samples: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub status: RunStatus,
    pub config: serde_json::Value,
    pub data: DataSummary,
    pub models: BTreeMap<String, ModelSummary>,
    /// Artifact name to path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub failed: Vec<Failure>,
    pub skipped: Vec<Skip>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub stage: String,
    pub model: String,
    pub method: String,
    pub worker: usize,
    pub start_s: f64,
    pub end_s: f64,
}

pub struct TrainedEntry {
    pub id: String,
    pub model: TrainedModel,
    pub cv_score: f64,
    pub metrics: MetricsReport,
    pub score: f64,
    pub y_pred: Vec<f64>,
    pub output: Vec<f64>,
}

pub struct TaskOutcome {
    pub task: ExplainTask,
    pub result: std::result::Result<MethodOutput, String>,
}

/// Everything a run produced, before it is written out.
pub struct RunOutputs {
    pub prepared: Prepared,
    pub models: Vec<TrainedEntry>,
    pub tasks: Vec<TaskOutcome>,
    pub consensus: Vec<ConsensusReport>,
    pub scores: Vec<ModelScore>,
}

pub struct RunArtifacts {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub timings: Vec<Timing>,
}

impl RunArtifacts {
    pub fn status(&self) -> RunStatus {
        self.manifest.status
    }

    pub fn path(&self, artifact: &str) -> Option<PathBuf> {
        self.manifest.artifacts.get(artifact).map(|p| self.dir.join(p))
    }
}

fn secs(d: std::time::Duration) -> f64 {
    d.as_secs_f64()
}

/// Held-out metrics and the cutoff score of one model.
fn evaluate(model: &TrainedModel, test: &Dataset) -> Result<(MetricsReport, f64, Vec<f64>, Vec<f64>)> {
    let x = test.features.view();
    let y_pred = model.predict_labels(x).to_vec();
    let output = model.output(x).to_vec();
    let y = test.target.as_slice().expect("contiguous");
    let (report, score) = match test.task {
        TaskKind::Classification => {
            let yt: Vec<usize> = test.class_indices();
            let yp: Vec<usize> = y_pred.iter().map(|&v| v as usize).collect();
            let binary = model.n_classes == 2;
            let r = metrics::classification_report(&yt, &yp, binary.then_some(output.as_slice()))?;
            let (m, undefined) = if binary {
                (Metric::Auc, r.is_undefined(Metric::Auc))
            } else {
                (Metric::Accuracy, r.is_undefined(Metric::Accuracy))
            };
            let s = if undefined { f64::NAN } else { r.get(m).unwrap_or(f64::NAN) };
            (r, s)
        }
        TaskKind::Regression => {
            let r = metrics::regression_report(y, &y_pred)?;
            let s = if r.is_undefined(Metric::R2) { f64::NAN } else { r.get(Metric::R2).unwrap_or(f64::NAN) };
            (r, s)
        }
    };
    Ok((report, score, y_pred, output))
}

fn score_metric_name(task: TaskKind, n_classes: usize) -> &'static str {
    match task {
        TaskKind::Regression => "r2",
        TaskKind::Classification if n_classes == 2 => "auc",
        TaskKind::Classification => "accuracy",
    }
}

/// Trains and scores every requested family on the pool.
fn train_all(
    config: &RunConfig,
    prepared: &Prepared,
    timings: &mut Vec<Timing>,
    failed: &mut Vec<Failure>,
    offset: f64,
) -> Result<Vec<TrainedEntry>> {
    let mut requests = config.models.clone();
    requests.sort_by_key(|m| m.family.id());
    let train = &prepared.ctx.train;
    let metric = selection_metric(train);
    let done = schedule(&requests, config.workers, |req| {
        let id = req.family.id();
        let r = grid_search(
            &req.param_grid(),
            train,
            config.k_folds,
            metric,
            derived_seed(config.seed, id, "fit"),
        )?;
        let best_cv = r
            .scores
            .iter()
            .map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        let (metrics, score, y_pred, output) = evaluate(&r.model, &prepared.ctx.test)?;
        Ok(TrainedEntry {
            id: id.to_string(),
            model: r.model,
            cv_score: best_cv,
            metrics,
            score,
            y_pred,
            output,
        })
    })?;
    let mut out = Vec::new();
    for (req, c) in requests.iter().zip(done) {
        timings.push(Timing {
            stage: "train".into(),
            model: req.family.id().into(),
            method: String::new(),
            worker: c.worker,
            start_s: offset + secs(c.start),
            end_s: offset + secs(c.end),
        });
        match c.result {
            Ok(e) => out.push(e),
            Err(reason) => failed.push(Failure {
                model: req.family.id().into(),
                method: None,
                stage: "train".into(),
                reason,
            }),
        }
    }
    Ok(out)
}

fn consensus_all(
    config: &RunConfig,
    tasks: &[TaskOutcome],
    scores: &[ModelScore],
    notes: &mut Vec<String>,
) -> Vec<ConsensusReport> {
    let mut by_method: BTreeMap<Method, BTreeMap<String, crate::explain::AttributionVector>> = BTreeMap::new();
    let mut by_model: BTreeMap<String, BTreeMap<String, crate::explain::AttributionVector>> = BTreeMap::new();
    for t in tasks {
        if let Ok(out) = &t.result {
            if let Some(v) = out.attribution() {
                by_method.entry(t.task.method).or_default().insert(t.task.model.clone(), v.clone());
                by_model
                    .entry(t.task.model.clone())
                    .or_default()
                    .insert(t.task.method.id().to_string(), v.clone());
            }
        }
    }
    let mut reports = Vec::new();
    for (method, contributions) in &by_method {
        let id = method.id();
        let merged = consensus::consensus_attribution_by_method(id, contributions, scores, config.cutoff).and_then(|a| {
            Ok([a, consensus::consensus_rank_by_method(id, contributions, scores, config.cutoff)?])
        });
        match merged {
            Ok(r) => reports.extend(r),
            Err(e) => notes.push(format!("consensus for method {id} skipped: {e}")),
        }
    }
    for (model, contributions) in &by_model {
        match consensus::consensus_rank_by_model(model, contributions) {
            Ok(r) => reports.push(r),
            Err(e) => notes.push(format!("consensus for model {model} skipped: {e}")),
        }
    }
    reports
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn write_timings(path: &Path, timings: &[Timing]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    for t in timings {
        w.serialize(t).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn data_summary(p: &Prepared) -> DataSummary {
    DataSummary {
        n_samples: p.dataset.n_samples(),
        n_features: p.dataset.n_features(),
        n_train: p.ctx.train.n_samples(),
        n_test: p.ctx.test.n_samples(),
        features: p.dataset.feature_names(),
        class_labels: p.dataset.class_labels.clone(),
        explained_samples: p.ctx.explained_ids(),
    }
}

fn model_summaries(config: &RunConfig, models: &[TrainedEntry]) -> BTreeMap<String, ModelSummary> {
    models
        .iter()
        .map(|e| {
            (
                e.id.clone(),
                ModelSummary {
                    params: e.model.config.params.clone(),
                    cv_score: e.cv_score,
                    score: e.score,
                    score_metric: score_metric_name(e.model.task, e.model.n_classes).into(),
                    passed_cutoff: e.score >= config.cutoff,
                },
            )
        })
        .collect()
}

/// Runs every stage and writes all artifacts under `config.output`.
pub fn run(config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let origin = Instant::now();
    let prepared = prepare(config)?;
    let mut timings = vec![Timing {
        stage: "prepare".into(),
        model: String::new(),
        method: String::new(),
        worker: 0,
        start_s: 0.0,
        end_s: secs(origin.elapsed()),
    }];
    let mut failed = Vec::new();
    let mut skipped = Vec::new();
    let mut notes = Vec::new();

    let t0 = secs(origin.elapsed());
    let models = train_all(config, &prepared, &mut timings, &mut failed, t0).map_err(Error::at("train"))?;
    if models.is_empty() {
        return Err(Error::Stage {
            stage: "train",
            source: Box::new(Error::invalid("no model could be trained")),
        });
    }
    let scores: Vec<ModelScore> = models.iter().map(|e| ModelScore::new(&e.id, e.score)).collect();

    let mut methods = config.methods.clone();
    methods.sort();
    let mut tasks = Vec::new();
    for e in &models {
        for &m in &methods {
            match not_applicable(&e.model, m) {
                Some(reason) => skipped.push(Skip {
                    model: e.id.clone(),
                    method: m.id().into(),
                    reason,
                }),
                None => tasks.push(ExplainTask::new(config.seed, &e.id, m)),
            }
        }
    }
    let by_id: BTreeMap<&str, &TrainedModel> = models.iter().map(|e| (e.id.as_str(), &e.model)).collect();
    let t1 = secs(origin.elapsed());
    let done = schedule(&tasks, config.workers, |t| execute(by_id[t.model.as_str()], t, &prepared.ctx))
        .map_err(Error::at("explain"))?;
    let mut outcomes = Vec::with_capacity(tasks.len());
    for (t, c) in tasks.into_iter().zip(done) {
        timings.push(Timing {
            stage: "explain".into(),
            model: t.model.clone(),
            method: t.method.id().into(),
            worker: c.worker,
            start_s: t1 + secs(c.start),
            end_s: t1 + secs(c.end),
        });
        if let Err(reason) = &c.result {
            failed.push(Failure {
                model: t.model.clone(),
                method: Some(t.method.id().into()),
                stage: "explain".into(),
                reason: reason.clone(),
            });
        }
        outcomes.push(TaskOutcome { task: t, result: c.result });
    }

    let t2 = secs(origin.elapsed());
    let reports = consensus_all(config, &outcomes, &scores, &mut notes);
    let outputs = RunOutputs {
        prepared,
        models,
        tasks: outcomes,
        consensus: reports,
        scores,
    };

    let dir = config.output.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::at("write")(Error::io(&dir, e)))?;
    let mut artifacts = report::write_tables(&outputs, &dir).map_err(Error::at("write"))?;
    write_json(&dir.join(RUN_CONFIG), &config.echo()).map_err(Error::at("write"))?;
    artifacts.insert("run_config".into(), RUN_CONFIG.into());
    timings.push(Timing {
        stage: "consensus_and_write".into(),
        model: String::new(),
        method: String::new(),
        worker: 0,
        start_s: t2,
        end_s: secs(origin.elapsed()),
    });

    let manifest = Manifest {
        format: "xaipipe-run".into(),
        version: 1,
        status: if failed.is_empty() { RunStatus::Success } else { RunStatus::Partial },
        config: config.echo(),
        data: data_summary(&outputs.prepared),
        models: model_summaries(config, &outputs.models),
        artifacts,
        failed,
        skipped,
        notes,
    };
    write_json(&dir.join(MANIFEST), &manifest).map_err(Error::at("write"))?;
    write_timings(&dir.join(TIMINGS), &timings).map_err(Error::at("write"))?;
    write_json(
        &dir.join(RUN_INFO),
        &serde_json::json!({
            "workers": config.workers,
            "output": config.output,
            "total_seconds": secs(origin.elapsed()),
        }),
    )
    .map_err(Error::at("write"))?;
    Ok(RunArtifacts { dir, manifest, timings })
}

/// Trains and saves models, then writes one self-contained `task` command per
/// explain task to `tasks_file` instead of running them.
pub fn emit_tasks(config: &RunConfig, tasks_file: &Path, program: &str) -> Result<Vec<ExplainTask>> {
    config.validate()?;
    let prepared = prepare(config)?;
    let mut timings = Vec::new();
    let mut failed = Vec::new();
    let models = train_all(config, &prepared, &mut timings, &mut failed, 0.0).map_err(Error::at("train"))?;
    let dir = &config.output;
    fs::create_dir_all(dir.join("models")).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(RUN_CONFIG), &config.echo())?;
    let mut lines = String::new();
    let mut tasks = Vec::new();
    let mut methods = config.methods.clone();
    methods.sort();
    for e in &models {
        persist::save(&e.model, dir.join("models").join(format!("{}.json", e.id)))?;
        for &m in &methods {
            if not_applicable(&e.model, m).is_none() {
                lines.push_str(&format!(
                    "{program} task --run-dir {} --model {} --method {}\n",
                    dir.display(),
                    e.id,
                    m.id()
                ));
                tasks.push(ExplainTask::new(config.seed, &e.id, m));
            }
        }
    }
    let scores: Vec<ModelScore> = models.iter().map(|e| ModelScore::new(&e.id, e.score)).collect();
    report::tables::write_scores(&dir.join("model_scores.csv"), &scores)?;
    for f in &failed {
        eprintln!("model {} failed: {}", f.model, f.reason);
    }
    write_text(tasks_file, &lines)?;
    Ok(tasks)
}

/// Runs one task of a run directory prepared by [`emit_tasks`] and writes its tables.
pub fn run_task(run_dir: &Path, model_id: &str, method: Method) -> Result<BTreeMap<String, String>> {
    let path = run_dir.join(RUN_CONFIG);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut config = RunConfig::from_json(&text)?;
    config.output = run_dir.to_path_buf();
    let prepared = prepare(&config)?;
    let model = persist::load(run_dir.join("models").join(format!("{model_id}.json")))?;
    let task = ExplainTask::new(config.seed, model_id, method);
    let result = execute(&model, &task, &prepared.ctx).map_err(|e| e.to_string());
    let mut artifacts = BTreeMap::new();
    report::write_task(run_dir, &mut artifacts, &prepared.ctx, &TaskOutcome { task, result: result.clone() })?;
    match result {
        Ok(_) => Ok(artifacts),
        Err(reason) => Err(Error::Stage {
            stage: "explain",
            source: Box::new(Error::invalid(reason)),
        }),
    }
}

/// Re-exported so callers can rebuild models the way the run does.
pub fn fit_family(req: &ModelRequest, train: &Dataset, k_folds: usize, seed: u64) -> Result<models::GridResult> {
    grid_search(&req.param_grid(), train, k_folds, selection_metric(train), derived_seed(seed, req.family.id(), "fit"))
}

/// Splits a `<model>_<method>_global.csv` file name into `(model, method)`.
pub fn parse_global_name(path: &Path) -> Result<(String, String)> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::invalid(format!("{}: not a file name", path.display())))?;
    match stem.strip_suffix("_global").and_then(|s| s.split_once('_')) {
        Some((model, method)) if !model.is_empty() && !method.is_empty() => Ok((model.into(), method.into())),
        _ => Err(Error::invalid(format!(
            "{}: expected a name of the form <model>_<method>_global.csv",
            path.display()
        ))),
    }
}

/// Consensus over global attribution files, one report per method (by-method
/// kinds) or per model (rank by model). Without `scores` every model counts
/// as passing the cutoff.
pub fn consensus_from_files(
    kind: consensus::ConsensusKind,
    files: &[PathBuf],
    scores: Option<&[ModelScore]>,
    cutoff: f64,
    out_dir: &Path,
) -> Result<Vec<ConsensusReport>> {
    use consensus::ConsensusKind as K;
    if files.is_empty() {
        return Err(Error::invalid("no attribution files given"));
    }
    let mut groups: BTreeMap<String, BTreeMap<String, crate::explain::AttributionVector>> = BTreeMap::new();
    for f in files {
        let (model, method) = parse_global_name(f)?;
        let v = report::tables::read_global(f)?;
        let (group, member) = if kind == K::RankByModel { (model, method) } else { (method, model) };
        if groups.entry(group.clone()).or_default().insert(member.clone(), v).is_some() {
            return Err(Error::invalid(format!("{group}/{member} given twice")));
        }
    }
    let owned: Vec<ModelScore>;
    let scores = match scores {
        Some(s) => s,
        None => {
            let mut ids: Vec<&String> = groups.values().flat_map(|g| g.keys()).collect();
            ids.sort();
            ids.dedup();
            owned = ids.into_iter().map(|m| ModelScore::new(m, 1.0)).collect();
            &owned
        }
    };
    let reports = groups
        .iter()
        .map(|(subject, members)| match kind {
            K::AttributionByMethod => consensus::consensus_attribution_by_method(subject, members, scores, cutoff),
            K::RankByMethod => consensus::consensus_rank_by_method(subject, members, scores, cutoff),
            K::RankByModel => consensus::consensus_rank_by_model(subject, members),
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for r in &reports {
        let stem = format!("consensus_{}_{}", r.kind.id(), report::sanitize(&r.subject));
        report::tables::write_consensus(
            &out_dir.join(format!("{stem}.csv")),
            &out_dir.join(format!("{stem}.json")),
            r,
        )?;
    }
    Ok(reports)
}
