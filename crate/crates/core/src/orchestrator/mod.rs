//! The compiler-in-the-loop evaluator: first-prompt assembly, the
//! generate/extract/compile loop, the experiment matrix and reporting.

pub mod config;
mod matrix;
mod record;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::{CorpusError, TaskManifest};
use crate::extraction::{detect_repetition, extract_code, Fingerprint};
use crate::gateway::{complete, ChatProvider, Conversation, GatewayError, ModelConfig, Role, Usage};
use crate::metrics::{crystal_bleu, lex, MetricsError, TrivialNgramSet, SMOOTHING_EPSILON};
use crate::retrieval::{augment_prompt, RetrievalError, Retriever};
use crate::toolchain::{
    build_revision_prompt, CompiledCandidate, RevisionConfig, RevisionContext, RunOutcome, Toolchain, ToolchainError,
    WorkspaceKey, FORMAT_REQUIREMENT,
};

pub use matrix::{read_records, run_matrix, JsonlSink, MatrixSummary, ProviderFactory, RunKey, RunSpec};
pub use record::{IterationRecord, MethodName, RunRecord, TerminalStatus, SCHEMA_VERSION};
pub use report::{emit_report, render_report, render_svg_panels, ReportFormat, PANELS};

pub const DEFAULT_MAX_ITERATIONS: u32 = 10;
pub const DEFAULT_REPEATS: u32 = 5;

pub const SYSTEM_PROMPT: &str = "You are an expert C programmer who writes code for the TFHE fully \
homomorphic encryption library (gate bootstrapping API). Translate plaintext C functions into \
equivalent TFHE code that operates on encrypted bits. Include <tfhe/tfhe.h> and call only \
functions that the library provides.";

pub const EXEMPLAR_INTRO: &str = "Here is a correct implementation of an OR gate using TFHE's \
bootsOR function:";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("cannot read few-shot exemplar {path}: {source}")]
    Exemplar { path: PathBuf, source: std::io::Error },
    #[error("method `{0}` needs a retrieval index but none was loaded")]
    MissingIndex(MethodName),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Toolchain(#[from] ToolchainError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Records { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagParams {
    pub top_k: usize,
    /// Character budget for the excerpts section.
    pub budget_chars: usize,
}

impl Default for RagParams {
    fn default() -> Self {
        RagParams {
            top_k: crate::retrieval::DEFAULT_TOP_K,
            budget_chars: crate::retrieval::DEFAULT_PROMPT_BUDGET_CHARS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub name: MethodName,
    pub rag_params: Option<RagParams>,
    pub fewshot_example_ref: Option<PathBuf>,
}

impl MethodConfig {
    /// Fill in exactly the parameters `name` uses.
    pub fn new(name: MethodName, rag: RagParams, exemplar: &Path) -> Self {
        MethodConfig {
            name,
            rag_params: name.uses_rag().then_some(rag),
            fewshot_example_ref: name.uses_fewshot().then(|| exemplar.to_owned()),
        }
    }

    pub fn baseline() -> Self {
        MethodConfig { name: MethodName::Baseline, rag_params: None, fewshot_example_ref: None }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.rag_params.is_some() != self.name.uses_rag() {
            return Err(OrchestratorError::Config(format!(
                "method {}: rag_params must be set iff the method uses retrieval",
                self.name
            )));
        }
        if self.fewshot_example_ref.is_some() != self.name.uses_fewshot() {
            return Err(OrchestratorError::Config(format!(
                "method {}: fewshot_example_ref must be set iff the method is few-shot",
                self.name
            )));
        }
        Ok(())
    }
}

/// How much conversation history is resent each iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryPolicy {
    #[default]
    KeepAll,
    /// System prompt, first user message and the last N exchanges.
    KeepLast(usize),
}

impl HistoryPolicy {
    pub fn apply(&self, conv: &Conversation) -> Conversation {
        let HistoryPolicy::KeepLast(n) = *self else {
            return conv.clone();
        };
        let head = conv.messages.iter().take_while(|m| m.role == Role::System).count() + 1;
        if conv.messages.len() <= head {
            return conv.clone();
        }
        // After the head the log alternates assistant, user.
        let tail = &conv.messages[head..];
        let start = tail.len() - (2 * n).min(tail.len());
        let start = start + start % 2;
        Conversation { messages: conv.messages[..head].iter().chain(&tail[start..]).cloned().collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub max_iterations: u32,
    pub history: HistoryPolicy,
    pub revision: RevisionConfig,
    /// Leave the few-shot exemplar out of prompts for this task id.
    pub exclude_exemplar_for: Option<String>,
    pub bleu_max_order: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            history: HistoryPolicy::KeepAll,
            revision: RevisionConfig::default(),
            exclude_exemplar_for: None,
            bleu_max_order: crate::metrics::DEFAULT_MAX_ORDER,
        }
    }
}

/// Shared, read-only dependencies of every run.
pub struct RunContext<'a> {
    pub toolchain: &'a dyn Toolchain,
    pub retriever: Option<&'a Retriever>,
    pub trivial: &'a TrivialNgramSet,
    pub loop_config: &'a LoopConfig,
    /// Merged into each record's config snapshot.
    pub snapshot_extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstPrompt {
    pub conversation: Conversation,
    pub retrieved: Vec<(u64, f64)>,
}

/// System message: role, format requirement and any retrieved excerpts.
/// User message: task statement and plaintext reference, plus the OR-gate
/// exemplar for few-shot methods.
pub fn build_first_prompt(
    task: &TaskManifest,
    method: &MethodConfig,
    retriever: Option<&Retriever>,
    exclude_exemplar_for: Option<&str>,
) -> Result<FirstPrompt, OrchestratorError> {
    method.validate()?;
    let mut system = format!("{SYSTEM_PROMPT}\n\n{FORMAT_REQUIREMENT}");
    let mut retrieved = Vec::new();
    if let Some(rag) = method.rag_params {
        let retriever = retriever.ok_or(OrchestratorError::MissingIndex(method.name))?;
        let hits = retriever.retrieve(&task.description, rag.top_k)?;
        retrieved = hits.iter().map(|h| (h.chunk.chunk_id, h.score)).collect();
        system = augment_prompt(&system, &hits, rag.budget_chars);
    }

    let reference = task.reference_code()?;
    let mut user = format!(
        "Task: {}\n\n{}\n\nReference plaintext implementation:\n```c\n{}\n```",
        task.title,
        task.description.trim_end(),
        reference.trim_end()
    );
    if let Some(path) = &method.fewshot_example_ref {
        if exclude_exemplar_for != Some(task.task_id.as_str()) {
            let exemplar = fs::read_to_string(path)
                .map_err(|source| OrchestratorError::Exemplar { path: path.clone(), source })?;
            user.push_str(&format!("\n\n{EXEMPLAR_INTRO}\n```c\n{}\n```", exemplar.trim_end()));
        }
    }
    Ok(FirstPrompt { conversation: Conversation::new().with(Role::System, system).with(Role::User, user), retrieved })
}

/// Identifies one run within the matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunIdentity {
    pub repeat_index: u32,
    pub repeat_total: u32,
}

/// Execute one evaluation run. Infrastructure failures produce an
/// `Errored` record carrying the iterations completed so far.
pub fn run_one(
    task: &TaskManifest,
    model: &ModelConfig,
    method: &MethodConfig,
    id: RunIdentity,
    provider: &dyn ChatProvider,
    ctx: &RunContext<'_>,
) -> RunRecord {
    let started_at = Utc::now();
    let clock = Instant::now();
    let mut record = RunRecord {
        schema_version: SCHEMA_VERSION,
        task_id: task.task_id.clone(),
        model_id: model.model_id.clone(),
        method: method.name,
        repeat_index: id.repeat_index,
        repeat_total: id.repeat_total,
        iterations: Vec::new(),
        terminal_status: TerminalStatus::IterationBudgetExhausted,
        func_report: None,
        link_report: None,
        final_code: None,
        crystal_bleu: 0.0,
        totals: Usage::default(),
        retrieved: Vec::new(),
        error: None,
        started_at,
        wall_time_ms: 0,
        config_snapshot: config_snapshot(model, method, ctx),
    };
    if let Err(e) = drive_loop(task, model, method, provider, ctx, &mut record) {
        log::warn!("run {} r{} errored: {e}", record.cell_label(), record.repeat_index);
        record.terminal_status = TerminalStatus::Errored;
        record.error = Some(e.to_string());
    }
    record.totals = record.iterations.iter().map(|i| i.usage).sum();
    record.wall_time_ms = clock.elapsed().as_millis() as u64;
    record
}

fn drive_loop(
    task: &TaskManifest,
    model: &ModelConfig,
    method: &MethodConfig,
    provider: &dyn ChatProvider,
    ctx: &RunContext<'_>,
    record: &mut RunRecord,
) -> Result<(), OrchestratorError> {
    let cfg = ctx.loop_config;
    let first = build_first_prompt(task, method, ctx.retriever, cfg.exclude_exemplar_for.as_deref())?;
    record.retrieved = first.retrieved;
    let mut conv = first.conversation;
    let mut failed: Vec<Fingerprint> = Vec::new();
    let mut compiled: Option<CompiledCandidate> = None;

    for index in 1..=cfg.max_iterations {
        let prompt_message = conv.last_user_text().unwrap_or_default().to_owned();
        let completion = complete(provider, model, &cfg.history.apply(&conv))?;
        let extraction = extract_code(&completion.text);
        conv.push(Role::Assistant, completion.text.clone());

        let mut it = IterationRecord {
            index,
            prompt_message,
            response: completion.text,
            usage: completion.usage,
            extraction,
            repetition_flag: false,
            compile_report: None,
        };
        let revision = match it.extraction.code().map(str::to_owned) {
            None => build_revision_prompt(RevisionContext::WrongFormat, &cfg.revision),
            Some(code) => {
                it.repetition_flag = detect_repetition(&failed, &code);
                record.final_code = Some(code.clone());
                let key = WorkspaceKey {
                    task: task.task_id.clone(),
                    model: model.model_id.clone(),
                    method: method.name.to_string(),
                    repeat: record.repeat_index,
                    iteration: index,
                };
                let outcome = ctx.toolchain.compile(&code, task, &key)?;
                let prompt = build_revision_prompt(RevisionContext::CompileFailure(&outcome.report), &cfg.revision);
                it.compile_report = Some(outcome.report);
                if outcome.compiled.is_some() {
                    compiled = outcome.compiled;
                } else {
                    failed.push(Fingerprint::of(&code));
                }
                prompt
            }
        };
        record.iterations.push(it);
        if compiled.is_some() {
            break;
        }
        if index < cfg.max_iterations {
            conv.push(Role::User, revision);
        }
    }

    if let Some(c) = &compiled {
        record.terminal_status = TerminalStatus::CompileSuccess;
        match ctx.toolchain.link_and_run(c, task)? {
            RunOutcome::Ran(f) => record.func_report = Some(f),
            RunOutcome::LinkFailed(l) => record.link_report = Some(l),
        }
    }
    if let Some(code) = &record.final_code {
        let reference = lex(&task.ground_truth_code()?);
        record.crystal_bleu = crystal_bleu(&lex(code), &reference, ctx.trivial, cfg.bleu_max_order);
    }
    Ok(())
}

fn config_snapshot(model: &ModelConfig, method: &MethodConfig, ctx: &RunContext<'_>) -> serde_json::Value {
    let mut snapshot = json!({
        "model": {
            "model_id": model.model_id,
            "provider_kind": model.provider_kind,
            "endpoint": model.endpoint,
            "temperature": model.temperature,
            "top_p": model.top_p,
            "max_output_tokens": model.max_output_tokens,
            "max_retries": model.max_retries,
        },
        "method": method,
        "loop": ctx.loop_config,
        "retrieval": ctx.retriever.map(|r| json!({
            "embedder_id": r.index.embedder_id(),
            "entries": r.index.len(),
            "query": "task description",
            "refresh_on_revision": false,
        })),
        "metrics": {
            "max_order": ctx.loop_config.bleu_max_order,
            "trivial_k": ctx.trivial.k,
            "trivial_corpus": ctx.trivial.corpus_id,
            "smoothing": format!("add-epsilon {SMOOTHING_EPSILON:e}"),
            "bleu_target": "last extracted code",
        },
    });
    if let (Some(obj), Some(extra)) = (snapshot.as_object_mut(), ctx.snapshot_extra.as_object()) {
        for (k, v) in extra {
            obj.insert(k.clone(), v.clone());
        }
    }
    snapshot
}
