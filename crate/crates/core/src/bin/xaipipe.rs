use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xaipipe::consensus::{ConsensusKind, DEFAULT_CUTOFF};
use xaipipe::data::{self, TaskKind};
use xaipipe::explain::Method;
use xaipipe::models::Family;
use xaipipe::pipeline::{self, DataSource, RunConfig, RunStatus, SampleSelector};
use xaipipe::report::tables;
use xaipipe::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_STAGE: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "xaipipe", version, about = "Train tabular models, explain them and rank features by consensus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, score and explain models, then write tables, plots and a manifest.
    Run(RunArgs),
    /// Generate a rule-labelled synthetic dataset.
    Synth {
        /// Rule file, or `two_feature_box` / `six_feature_noise`.
        #[arg(short, long)]
        rules: String,
        #[arg(short = 'n', long)]
        samples: usize,
        #[arg(short, long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Merge global attribution files named `<model>_<method>_global.csv`.
    Consensus {
        /// attribution_by_method, rank_by_method or rank_by_model.
        kind: ConsensusKind,
        #[arg(short, long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(short, long, default_value_t = DEFAULT_CUTOFF)]
        cutoff: f64,
        /// `model,score` file; without it every model passes the cutoff.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// One-hot encode categorical columns of a CSV file.
    Encode {
        #[arg(short, long)]
        data: PathBuf,
        /// Comma-separated column names.
        #[arg(short, long, value_delimiter = ',', required = true)]
        columns: Vec<String>,
        /// Target column, passed through unchanged; defaults to the last column.
        #[arg(short, long)]
        target: Option<String>,
        /// Defaults to `<input stem>_encoded.csv` next to the input.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run one explain task of a run directory written with `run --emit-tasks`.
    Task {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        method: Method,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; other flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long, conflicts_with = "rules")]
    data: Option<PathBuf>,
    #[arg(short, long)]
    target: Option<String>,
    #[arg(short = 'k', long)]
    task: Option<TaskKind>,
    /// Synthetic data from a rule file or built-in rule set instead of a CSV.
    #[arg(long)]
    rules: Option<String>,
    /// Number of synthetic samples.
    #[arg(short = 'n', long, default_value_t = 2000)]
    n_samples: usize,
    /// Categorical columns to one-hot encode, comma-separated.
    #[arg(long, value_delimiter = ',')]
    encode: Vec<String>,
    /// Model families, comma-separated.
    #[arg(short, long, value_delimiter = ',')]
    models: Vec<Family>,
    /// Methods, comma-separated.
    #[arg(short = 'x', long, value_delimiter = ',')]
    methods: Vec<Method>,
    /// Worker threads.
    #[arg(short = 'q', long)]
    workers: Option<usize>,
    #[arg(short, long)]
    seed: Option<u64>,
    #[arg(short, long)]
    cutoff: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// `all`, `first:<n>` or comma-separated dataset row ids.
    #[arg(long)]
    samples: Option<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Train only and write one `task` command per explain task to this file.
    #[arg(long)]
    emit_tasks: Option<PathBuf>,
}

fn parse_samples(s: &str) -> Result<SampleSelector, Error> {
    let s = s.trim();
    if s == "all" {
        return Ok(SampleSelector::All);
    }
    if let Some(n) = s.strip_prefix("first:") {
        return n
            .trim()
            .parse()
            .map(SampleSelector::First)
            .map_err(|_| Error::InvalidArgument(format!("bad sample count `{n}`")));
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad sample id `{t}`"))))
        .collect::<Result<Vec<_>, _>>()
        .map(SampleSelector::Ids)
}

fn build_config(a: &RunArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::InvalidArgument(format!("{}: {e}", p.display())))?;
            RunConfig::from_json(&text)?
        }
        None => {
            let data = match (&a.data, &a.rules) {
                (Some(path), None) => DataSource::Csv {
                    path: path.clone(),
                    target: a
                        .target
                        .clone()
                        .ok_or_else(|| Error::InvalidArgument("--target is required with --data".into()))?,
                    task: a
                        .task
                        .ok_or_else(|| Error::InvalidArgument("--task is required with --data".into()))?,
                    encode: a.encode.clone(),
                },
                (None, Some(rules)) => DataSource::Synthetic {
                    rules: rules.clone(),
                    n_samples: a.n_samples,
                },
                _ => return Err(Error::InvalidArgument("give --data, --rules or --config".into())),
            };
            let output = a
                .output
                .clone()
                .ok_or_else(|| Error::InvalidArgument("--output is required".into()))?;
            RunConfig::new(data, &a.models, &a.methods, output)
        }
    };
    if a.config.is_some() {
        if !a.models.is_empty() {
            cfg.models = a.models.iter().map(|f| pipeline::ModelRequest::new(*f)).collect();
        }
        if !a.methods.is_empty() {
            cfg.methods = a.methods.clone();
        }
        if let Some(o) = &a.output {
            cfg.output = o.clone();
        }
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.cutoff {
        cfg.cutoff = c;
    }
    if let Some(t) = a.test_fraction {
        cfg.test_fraction = t;
    }
    if let Some(s) = &a.samples {
        cfg.samples = parse_samples(s)?;
    }
    if cfg.output.as_os_str().is_empty() {
        return Err(Error::InvalidArgument("--output is required".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Stage { .. } => EXIT_STAGE,
        _ => EXIT_VALIDATION,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_for(&e))
}

fn run(a: RunArgs) -> ExitCode {
    let cfg = match build_config(&a) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Some(tasks_file) = &a.emit_tasks {
        let program = std::env::args().next().unwrap_or_else(|| "xaipipe".into());
        return match pipeline::emit_tasks(&cfg, tasks_file, &program) {
            Ok(t) => {
                println!("{} tasks written to {}", t.len(), tasks_file.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        };
    }
    match pipeline::run(&cfg) {
        Ok(art) => {
            for m in &art.manifest.failed {
                eprintln!(
                    "failed: {} {} ({}): {}",
                    m.model,
                    m.method.as_deref().unwrap_or("-"),
                    m.stage,
                    m.reason
                );
            }
            for n in &art.manifest.notes {
                eprintln!("note: {n}");
            }
            println!("{}", art.dir.join(pipeline::MANIFEST).display());
            match art.status() {
                RunStatus::Success => ExitCode::SUCCESS,
                RunStatus::Partial => ExitCode::from(EXIT_PARTIAL),
            }
        }
        Err(e) => fail(e),
    }
}

fn last_column(path: &Path) -> Result<String, Error> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    let h = r.headers().map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    h.iter()
        .last()
        .map(|s| s.trim().to_string())
        .ok_or_else(|| Error::InvalidArgument(format!("{}: empty header", path.display())))
}

fn encode(data_path: &Path, columns: &[String], target: Option<String>, output: Option<PathBuf>) -> Result<PathBuf, Error> {
    let target = match target {
        Some(t) => t,
        None => last_column(data_path)?,
    };
    let ds = data::load_csv(data_path, &target, TaskKind::Classification)?;
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let enc = data::one_hot_encode(&ds, &cols)?;
    let out = output.unwrap_or_else(|| {
        let stem = data_path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
        data_path.with_file_name(format!("{stem}_encoded.csv"))
    });
    data::write_csv(&enc, &out)?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(a) => run(a),
        Command::Synth {
            rules,
            samples,
            seed,
            output,
        } => {
            let r = pipeline::resolve_rules(&rules)
                .and_then(|spec| data::generate_synthetic(&spec, samples, seed))
                .and_then(|ds| data::write_csv(&ds, &output));
            match r {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Consensus {
            kind,
            input,
            output,
            cutoff,
            scores,
        } => {
            let r = scores
                .as_deref()
                .map(tables::read_scores)
                .transpose()
                .and_then(|s| pipeline::consensus_from_files(kind, &input, s.as_deref(), cutoff, &output));
            match r {
                Ok(reports) => {
                    for rep in reports {
                        println!("{} {}: {}", rep.kind.id(), rep.subject, rep.order().join(","));
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Encode {
            data,
            columns,
            target,
            output,
        } => match encode(&data, &columns, target, output) {
            Ok(p) => {
                println!("{}", p.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Task { run_dir, model, method } => match pipeline::run_task(&run_dir, &model, method) {
            Ok(_) => ExitCode::SUCCESS,
            Err(e) => fail(e),
        },
    }
}
