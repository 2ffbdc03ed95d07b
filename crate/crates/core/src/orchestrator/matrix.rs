use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Mutex};

use serde_json::Value;

use super::{run_one, MethodConfig, OrchestratorError, RunContext, RunIdentity, RunRecord, SCHEMA_VERSION};
use crate::corpus::TaskManifest;
use crate::gateway::{ChatProvider, Completion, Conversation, GatewayError, ModelConfig};
use crate::orchestrator::MethodName;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RunKey {
    pub task_id: String,
    pub model_id: String,
    pub method: MethodName,
    pub repeat_index: u32,
}

/// One cell of the matrix expanded to a single repeat.
#[derive(Debug, Clone)]
pub struct RunSpec<'a> {
    pub task: &'a TaskManifest,
    pub model: &'a ModelConfig,
    pub method: &'a MethodConfig,
    pub repeat_index: u32,
    pub repeat_total: u32,
}

impl RunSpec<'_> {
    pub fn key(&self) -> RunKey {
        RunKey {
            task_id: self.task.task_id.clone(),
            model_id: self.model.model_id.clone(),
            method: self.method.name,
            repeat_index: self.repeat_index,
        }
    }
}

/// Builds a fresh provider for each run.
pub type ProviderFactory<'a> = dyn Fn(&RunKey, &ModelConfig) -> Result<Box<dyn ChatProvider>, GatewayError> + Sync + 'a;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatrixSummary {
    pub runs: usize,
    pub errored: usize,
}

/// Stands in for a provider that could not be constructed, so the failure
/// is recorded like any other gateway error.
struct Unavailable(String);

impl ChatProvider for Unavailable {
    fn name(&self) -> &str {
        "unavailable"
    }

    fn complete_once(&self, _: &ModelConfig, _: &Conversation) -> Result<Completion, GatewayError> {
        Err(GatewayError::Config(self.0.clone()))
    }
}

/// Run every (task, model, method, repeat) combination on up to
/// `parallelism` worker threads. Records reach `sink` in completion order.
#[allow(clippy::too_many_arguments)]
pub fn run_matrix(
    tasks: &[TaskManifest],
    models: &[ModelConfig],
    methods: &[MethodConfig],
    repeats: u32,
    parallelism: usize,
    ctx: &RunContext<'_>,
    providers: &ProviderFactory<'_>,
    sink: &mut dyn FnMut(RunRecord) -> Result<(), OrchestratorError>,
) -> Result<MatrixSummary, OrchestratorError> {
    for m in methods {
        m.validate()?;
    }
    let mut specs = Vec::new();
    for task in tasks {
        for model in models {
            for method in methods {
                for repeat_index in 0..repeats {
                    specs.push(RunSpec { task, model, method, repeat_index, repeat_total: repeats });
                }
            }
        }
    }
    let workers = parallelism.clamp(1, specs.len().max(1));
    let queue = Mutex::new(specs.into_iter());
    let (tx, rx) = mpsc::channel::<RunRecord>();
    let mut summary = MatrixSummary::default();
    let mut sink_error = None;

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let queue = &queue;
            scope.spawn(move || loop {
                let Some(spec) = queue.lock().unwrap().next() else { break };
                let key = spec.key();
                let provider = providers(&key, spec.model).unwrap_or_else(|e| Box::new(Unavailable(e.to_string())));
                let id = RunIdentity { repeat_index: spec.repeat_index, repeat_total: spec.repeat_total };
                let record = run_one(spec.task, spec.model, spec.method, id, provider.as_ref(), ctx);
                if tx.send(record).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for record in rx {
            summary.runs += 1;
            summary.errored += record.is_errored() as usize;
            if sink_error.is_none() {
                if let Err(e) = sink(record) {
                    sink_error = Some(e);
                }
            }
        }
    });
    match sink_error {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

/// Append-only JSON-lines record file, flushed after every record.
pub struct JsonlSink {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl JsonlSink {
    pub fn open(path: &Path) -> Result<Self, OrchestratorError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| OrchestratorError::Io { path: path.to_owned(), source })?;
        Ok(JsonlSink { path: path.to_owned(), writer: BufWriter::new(file) })
    }

    pub fn write(&mut self, record: &RunRecord) -> Result<(), OrchestratorError> {
        let io = |source| OrchestratorError::Io { path: self.path.clone(), source };
        let line = serde_json::to_string(record).expect("run records serialize");
        writeln!(self.writer, "{line}").map_err(io)?;
        self.writer.flush().map_err(io)
    }
}

/// Read a record file, rejecting lines from another schema version.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, OrchestratorError> {
    let file = File::open(path).map_err(|source| OrchestratorError::Io { path: path.to_owned(), source })?;
    let bad = |line: usize, message: String| OrchestratorError::Records { path: path.to_owned(), line, message };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| OrchestratorError::Io { path: path.to_owned(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).map_err(|e| bad(i + 1, e.to_string()))?;
        match v.get("schema_version").and_then(Value::as_u64) {
            Some(n) if n == SCHEMA_VERSION as u64 => {}
            Some(n) => return Err(bad(i + 1, format!("schema version {n}, expected {SCHEMA_VERSION}"))),
            None => return Err(bad(i + 1, "missing schema_version".into())),
        }
        out.push(serde_json::from_value(v).map_err(|e| bad(i + 1, e.to_string()))?);
    }
    Ok(out)
}
