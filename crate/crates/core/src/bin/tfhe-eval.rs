use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use tfhe_eval::corpus::load_corpus;
use tfhe_eval::gateway::{provider_for, ModelConfig};
use tfhe_eval::orchestrator::config::{Experiment, ExperimentConfig};
use tfhe_eval::orchestrator::{emit_report, run_matrix, JsonlSink, MethodName, ReportFormat, RunContext, RunKey};
use tfhe_eval::retrieval::{read_documents, RetrievalIndex};
use tfhe_eval::toolchain::{RunOutcome, Toolchain, WorkspaceKey};

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "tfhe-eval", version, about = "Compiler-in-the-loop evaluation of LLM-generated TFHE code")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk and embed documentation into an index file.
    IndexDocs {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Embedder and chunking settings come from this config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the experiment matrix and append records to a JSONL file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        methods: Vec<MethodName>,
        #[arg(long)]
        repeats: Option<u32>,
        #[arg(long)]
        max_iters: Option<u32>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a record file into a report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "md")]
        format: ReportFormat,
        /// Write SVG bar charts here.
        #[arg(long)]
        plots: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check every task manifest and run each ground truth through the
    /// toolchain and its driver.
    ValidateCorpus {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the corpus root from the config.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

/// An error plus the exit status it maps to.
struct Failure(u8, anyhow::Error);

fn config_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure(EXIT_CONFIG, e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::IndexDocs { paths, out, config } => index_docs(&paths, &out, config.as_deref()),
        Command::Run { config, tasks, models, methods, repeats, max_iters, parallelism, out } => {
            run(&config, &tasks, &models, &methods, repeats, max_iters, parallelism, &out)
        }
        Command::Report { input, format, plots, out } => report(&input, format, plots.as_deref(), out.as_deref()),
        Command::ValidateCorpus { config, corpus } => validate_corpus(config.as_deref(), corpus),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => ExperimentConfig::load(p).map_err(config_error),
        None => ExperimentConfig::parse("").map_err(config_error),
    }
}

fn index_docs(paths: &[PathBuf], out: &Path, config: Option<&Path>) -> Result<u8, Failure> {
    let cfg = load_config(config)?;
    let docs = read_documents(paths).map_err(config_error)?;
    let embedder = cfg.retrieval.embedder.build();
    let index =
        RetrievalIndex::build(&docs, embedder.as_ref(), cfg.retrieval.max_chunk_chars, cfg.retrieval.overlap_chars)
            .map_err(|e| Failure(EXIT_PARTIAL, e.into()))?;
    index.save(out).map_err(|e| Failure(EXIT_PARTIAL, e.into()))?;
    println!("indexed {} chunks from {} documents into {}", index.len(), docs.len(), out.display());
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: &Path,
    tasks: &[String],
    models: &[String],
    methods: &[MethodName],
    repeats: Option<u32>,
    max_iters: Option<u32>,
    parallelism: Option<usize>,
    out: &Path,
) -> Result<u8, Failure> {
    let mut cfg = ExperimentConfig::load(config).map_err(config_error)?;
    if let Some(n) = max_iters {
        cfg.loop_.max_iterations = n;
    }
    if let Some(n) = repeats {
        cfg.run.repeats = n;
    }
    if let Some(n) = parallelism {
        cfg.run.parallelism = n;
    }
    if !methods.is_empty() {
        cfg.run.methods = methods.to_vec();
    }
    cfg.validate().map_err(config_error)?;

    let selected_models: Vec<_> = if models.is_empty() {
        cfg.models.clone()
    } else {
        let mut out = Vec::new();
        for id in models {
            match cfg.models.iter().find(|m| &m.model_id == id) {
                Some(m) => out.push(m.clone()),
                None => return Err(config_error(anyhow!("model `{id}` is not in the config"))),
            }
        }
        out
    };
    if selected_models.is_empty() {
        return Err(config_error(anyhow!("no models configured")));
    }

    let method_names = cfg.run.methods.clone();
    let method_configs = cfg.method_configs(&method_names);
    let (repeats, parallelism) = (cfg.run.repeats, cfg.run.parallelism);
    let experiment = Experiment::prepare(cfg, &method_names).map_err(config_error)?;
    let selected_tasks: Vec<_> = if tasks.is_empty() {
        experiment.tasks.clone()
    } else {
        let mut out = Vec::new();
        for id in tasks {
            match experiment.tasks.iter().find(|t| &t.task_id == id) {
                Some(t) => out.push(t.clone()),
                None => return Err(config_error(anyhow!("task `{id}` is not in the corpus"))),
            }
        }
        out
    };

    let ctx = RunContext {
        toolchain: &experiment.toolchain,
        retriever: experiment.retriever.as_ref(),
        trivial: &experiment.trivial,
        loop_config: &experiment.loop_config,
        snapshot_extra: experiment.snapshot_extra(),
    };
    let mut sink = JsonlSink::open(out).map_err(config_error)?;
    let factory = |_: &RunKey, m: &ModelConfig| provider_for(m);
    let summary = run_matrix(
        &selected_tasks,
        &selected_models,
        &method_configs,
        repeats,
        parallelism,
        &ctx,
        &factory,
        &mut |r| {
            log::info!("{} r{}: {:?}", r.cell_label(), r.repeat_index, r.terminal_status);
            sink.write(&r)
        },
    )
    .map_err(|e| Failure(EXIT_PARTIAL, e.into()))?;
    println!("{} runs written to {} ({} errored)", summary.runs, out.display(), summary.errored);
    Ok(if summary.errored > 0 { EXIT_PARTIAL } else { 0 })
}

fn report(input: &Path, format: ReportFormat, plots: Option<&Path>, out: Option<&Path>) -> Result<u8, Failure> {
    let text = emit_report(input, format, plots).map_err(config_error)?;
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(config_error)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn validate_corpus(config: Option<&Path>, corpus: Option<PathBuf>) -> Result<u8, Failure> {
    let mut cfg = load_config(config)?;
    if let Some(root) = corpus {
        cfg.corpus.root = root;
    }
    let tasks = load_corpus(&cfg.corpus.root).map_err(config_error)?;
    let experiment = Experiment::prepare(cfg, &[]).map_err(config_error)?;
    let mut failures = 0;
    for task in &tasks {
        let code = task.ground_truth_code().map_err(config_error)?;
        let key = WorkspaceKey {
            task: task.task_id.clone(),
            model: "_validate".into(),
            method: "ground_truth".into(),
            repeat: 0,
            iteration: 0,
        };
        let outcome = experiment.toolchain.compile(&code, task, &key).map_err(config_error)?;
        let verdict = match &outcome.compiled {
            None => format!("compile failed:\n{}", outcome.report.raw_output),
            Some(c) => match experiment.toolchain.link_and_run(c, task).map_err(config_error)? {
                RunOutcome::Ran(f) if f.is_pass() => {
                    format!("ok {}/{}", f.passed_cases, f.total_cases)
                }
                RunOutcome::Ran(f) => format!("driver {}/{}", f.passed_cases, f.total_cases),
                RunOutcome::LinkFailed(l) => format!("link failed:\n{}", l.raw_output),
            },
        };
        if !verdict.starts_with("ok") {
            failures += 1;
        }
        println!("{:<10} {verdict}", task.task_id);
    }
    if failures > 0 {
        return Err(config_error(anyhow!("{failures} task(s) failed validation")));
    }
    Ok(0)
}
