//! TOML experiment configuration and its resolution into ready-to-run
//! components. Relative paths are resolved against the config file's
//! directory. Credentials never appear here; model entries name the
//! environment variable that holds them.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{HistoryPolicy, LoopConfig, MethodConfig, MethodName, OrchestratorError, RagParams};
use crate::corpus::{load_corpus, StubApiSurface, TaskManifest};
use crate::extraction::fenced_blocks;
use crate::gateway::ModelConfig;
use crate::metrics::{lex, trivial_ngrams, TokenSequence, TrivialNgramSet};
use crate::retrieval::{self, Embedder, HttpEmbedder, HttpEmbedderConfig, MockEmbedder, RetrievalIndex, Retriever};
use crate::toolchain::{
    build_stub_library, CcToolchain, LibraryMode, LibraryPaths, RevisionConfig, ToolchainConfig,
    DEFAULT_COMPILE_TEMPLATE, DEFAULT_LINK_TEMPLATE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub toolchain: ToolchainSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub fewshot: FewshotSection,
    #[serde(default, rename = "loop")]
    pub loop_: LoopSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub root: PathBuf,
    /// Header scanned for the API surface; defaults to the stub header.
    pub api_header: Option<PathBuf>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection { root: "corpus".into(), api_header: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolchainSection {
    pub library_mode: LibraryMode,
    pub compile_command_template: String,
    pub link_command_template: String,
    pub workspace_root: PathBuf,
    pub compile_timeout_ms: u64,
    pub run_timeout_ms: u64,
    pub stub: StubSection,
    pub real: LibraryPaths,
}

impl Default for ToolchainSection {
    fn default() -> Self {
        ToolchainSection {
            library_mode: LibraryMode::Stub,
            compile_command_template: DEFAULT_COMPILE_TEMPLATE.into(),
            link_command_template: DEFAULT_LINK_TEMPLATE.into(),
            workspace_root: "work".into(),
            compile_timeout_ms: 30_000,
            run_timeout_ms: 10_000,
            stub: StubSection::default(),
            real: LibraryPaths { libs: vec!["tfhe-spqlios-fma".into()], ..LibraryPaths::default() },
        }
    }
}

/// Stub library sources; defaults live under `<corpus>/stub`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubSection {
    pub sources: Option<Vec<PathBuf>>,
    pub include_dirs: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderSection {
    Mock {
        #[serde(default = "default_mock_dimension")]
        dimension: usize,
    },
    Http(HttpEmbedderConfig),
}

fn default_mock_dimension() -> usize {
    retrieval::DEFAULT_MOCK_DIMENSION
}

impl Default for EmbedderSection {
    fn default() -> Self {
        EmbedderSection::Mock { dimension: retrieval::DEFAULT_MOCK_DIMENSION }
    }
}

impl EmbedderSection {
    pub fn build(&self) -> Box<dyn Embedder> {
        match self {
            EmbedderSection::Mock { dimension } => Box::new(MockEmbedder { dimension: *dimension }),
            EmbedderSection::Http(c) => Box::new(HttpEmbedder::new(c.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    /// Prebuilt index file; built in memory from `docs` when absent.
    pub index: Option<PathBuf>,
    /// Documentation files; defaults to `<corpus>/docs/*`.
    pub docs: Option<Vec<PathBuf>>,
    pub embedder: EmbedderSection,
    pub top_k: usize,
    pub budget_chars: usize,
    pub max_chunk_chars: usize,
    pub overlap_chars: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection {
            index: None,
            docs: None,
            embedder: EmbedderSection::default(),
            top_k: retrieval::DEFAULT_TOP_K,
            budget_chars: retrieval::DEFAULT_PROMPT_BUDGET_CHARS,
            max_chunk_chars: retrieval::DEFAULT_MAX_CHUNK_CHARS,
            overlap_chars: retrieval::DEFAULT_OVERLAP_CHARS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FewshotSection {
    /// Defaults to the OR-gate ground truth in the corpus.
    pub exemplar: Option<PathBuf>,
    pub exclude_for_or_gate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopSection {
    pub max_iterations: u32,
    pub history: HistoryPolicy,
    pub revision_byte_budget: usize,
    pub revision_max_error_lines: usize,
}

impl Default for LoopSection {
    fn default() -> Self {
        let r = RevisionConfig::default();
        LoopSection {
            max_iterations: super::DEFAULT_MAX_ITERATIONS,
            history: HistoryPolicy::KeepAll,
            revision_byte_budget: r.byte_budget,
            revision_max_error_lines: r.max_error_lines,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub max_order: usize,
    pub trivial_k: usize,
    /// Add code blocks from the documentation to the background corpus.
    pub include_doc_code: bool,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            max_order: crate::metrics::DEFAULT_MAX_ORDER,
            trivial_k: crate::metrics::DEFAULT_TRIVIAL_K,
            include_doc_code: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub repeats: u32,
    pub parallelism: usize,
    pub methods: Vec<MethodName>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { repeats: super::DEFAULT_REPEATS, parallelism: 1, methods: MethodName::ALL.to_vec() }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, OrchestratorError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse `path` and make every relative path absolute against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text =
            fs::read_to_string(path).map_err(|source| OrchestratorError::Io { path: path.to_owned(), source })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let err = |m: String| Err(OrchestratorError::Config(m));
        let mut ids = BTreeSet::new();
        for m in &self.models {
            m.validate()?;
            if !ids.insert(&m.model_id) {
                return err(format!("duplicate model id `{}`", m.model_id));
            }
        }
        if self.run.repeats == 0 || self.run.parallelism == 0 {
            return err("run.repeats and run.parallelism must be at least 1".into());
        }
        if self.loop_.max_iterations == 0 {
            return err("loop.max_iterations must be at least 1".into());
        }
        if self.metrics.max_order == 0 {
            return err("metrics.max_order must be at least 1".into());
        }
        if self.retrieval.overlap_chars >= self.retrieval.max_chunk_chars {
            return err("retrieval.overlap_chars must be below retrieval.max_chunk_chars".into());
        }
        self.toolchain_config(LibraryPaths::default()).validate()?;
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.root);
        self.corpus.api_header.iter_mut().for_each(fix);
        fix(&mut self.toolchain.workspace_root);
        for list in [&mut self.toolchain.stub.sources, &mut self.toolchain.stub.include_dirs, &mut self.retrieval.docs]
        {
            list.iter_mut().flatten().for_each(fix);
        }
        self.toolchain.real.include_dirs.iter_mut().for_each(fix);
        self.toolchain.real.lib_dirs.iter_mut().for_each(fix);
        self.retrieval.index.iter_mut().for_each(fix);
        self.fewshot.exemplar.iter_mut().for_each(fix);
    }

    pub fn stub_dir(&self) -> PathBuf {
        self.corpus.root.join("stub")
    }

    pub fn api_header_path(&self) -> PathBuf {
        self.corpus.api_header.clone().unwrap_or_else(|| self.stub_dir().join("include/tfhe/tfhe.h"))
    }

    pub fn exemplar_path(&self) -> PathBuf {
        self.fewshot.exemplar.clone().unwrap_or_else(|| self.corpus.root.join("or_gate/ground_truth.c"))
    }

    pub fn doc_paths(&self) -> Result<Vec<PathBuf>, OrchestratorError> {
        if let Some(d) = &self.retrieval.docs {
            return Ok(d.clone());
        }
        let dir = self.corpus.root.join("docs");
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|source| OrchestratorError::Io { path: dir.clone(), source })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        Ok(paths)
    }

    pub fn rag_params(&self) -> RagParams {
        RagParams { top_k: self.retrieval.top_k, budget_chars: self.retrieval.budget_chars }
    }

    pub fn method_configs(&self, names: &[MethodName]) -> Vec<MethodConfig> {
        let exemplar = self.exemplar_path();
        names.iter().map(|&n| MethodConfig::new(n, self.rag_params(), &exemplar)).collect()
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            max_iterations: self.loop_.max_iterations,
            history: self.loop_.history,
            revision: RevisionConfig {
                byte_budget: self.loop_.revision_byte_budget,
                max_error_lines: self.loop_.revision_max_error_lines,
                ..RevisionConfig::default()
            },
            exclude_exemplar_for: self.fewshot.exclude_for_or_gate.then(|| "or_gate".to_string()),
            bleu_max_order: self.metrics.max_order,
        }
    }

    pub fn toolchain_config(&self, library: LibraryPaths) -> ToolchainConfig {
        let t = &self.toolchain;
        ToolchainConfig {
            compile_command_template: t.compile_command_template.clone(),
            link_command_template: t.link_command_template.clone(),
            library_mode: t.library_mode,
            library,
            workspace_root: t.workspace_root.clone(),
            compile_timeout: Duration::from_millis(t.compile_timeout_ms),
            run_timeout: Duration::from_millis(t.run_timeout_ms),
        }
    }

    /// Library paths for the configured mode, building the stub archive
    /// under the workspace root when in stub mode.
    pub fn library_paths(&self) -> Result<LibraryPaths, OrchestratorError> {
        match self.toolchain.library_mode {
            LibraryMode::Real => Ok(self.toolchain.real.clone()),
            LibraryMode::Stub => {
                let stub = self.stub_dir();
                let sources = self.toolchain.stub.sources.clone().unwrap_or_else(|| vec![stub.join("tfhe_stub.c")]);
                let includes = self.toolchain.stub.include_dirs.clone().unwrap_or_else(|| vec![stub.join("include")]);
                Ok(build_stub_library(&sources, &includes, &self.toolchain.workspace_root.join("_stub"))?)
            }
        }
    }

    pub fn api_surface(&self) -> Result<StubApiSurface, OrchestratorError> {
        let header = self.api_header_path();
        if header.is_file() {
            Ok(StubApiSurface::from_header_file(&header, "tfhe/tfhe.h")?)
        } else {
            log::warn!("API header {} not found; using the built-in stub surface", header.display());
            Ok(StubApiSurface::stub_default())
        }
    }
}

/// Everything a matrix run needs, resolved from an `ExperimentConfig`.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub tasks: Vec<TaskManifest>,
    pub toolchain: CcToolchain,
    pub retriever: Option<Retriever>,
    pub trivial: TrivialNgramSet,
    pub loop_config: LoopConfig,
}

impl Experiment {
    /// Load the corpus, set up the toolchain, and build or load the
    /// retrieval index when `methods` include a retrieval method.
    pub fn prepare(config: ExperimentConfig, methods: &[MethodName]) -> Result<Self, OrchestratorError> {
        let tasks = load_corpus(&config.corpus.root)?;
        let api = config.api_surface()?;
        let toolchain = CcToolchain::new(config.toolchain_config(config.library_paths()?), api)?;
        let docs = retrieval::read_documents(&config.doc_paths()?)?;

        let retriever = if methods.iter().any(|m| m.uses_rag()) {
            let embedder = config.retrieval.embedder.build();
            let index = match &config.retrieval.index {
                Some(p) => RetrievalIndex::load(p, Some(&embedder.id()))?,
                None => RetrievalIndex::build(
                    &docs,
                    embedder.as_ref(),
                    config.retrieval.max_chunk_chars,
                    config.retrieval.overlap_chars,
                )?,
            };
            Some(Retriever::new(index, embedder)?)
        } else {
            None
        };

        let background = background_corpus(&tasks, &docs, config.metrics.include_doc_code)?;
        let corpus_id =
            format!("ground_truth:{}{}", tasks.len(), if config.metrics.include_doc_code { "+doc_code" } else { "" });
        let trivial = trivial_ngrams(&background, config.metrics.trivial_k, config.metrics.max_order, corpus_id);
        let loop_config = config.loop_config();
        Ok(Experiment { config, tasks, toolchain, retriever, trivial, loop_config })
    }

    pub fn snapshot_extra(&self) -> serde_json::Value {
        let t = &self.config.toolchain;
        json!({
            "toolchain": {
                "library_mode": t.library_mode,
                "compile_command_template": t.compile_command_template,
                "link_command_template": t.link_command_template,
                "compile_timeout_ms": t.compile_timeout_ms,
                "run_timeout_ms": t.run_timeout_ms,
            },
            "retrieval_params": {
                "top_k": self.config.retrieval.top_k,
                "budget_chars": self.config.retrieval.budget_chars,
                "max_chunk_chars": self.config.retrieval.max_chunk_chars,
                "overlap_chars": self.config.retrieval.overlap_chars,
            },
        })
    }
}

/// Ground-truth implementations plus, optionally, fenced code blocks found
/// in the documentation.
pub fn background_corpus(
    tasks: &[TaskManifest],
    docs: &[(String, String)],
    include_doc_code: bool,
) -> Result<Vec<TokenSequence>, OrchestratorError> {
    let mut corpus = Vec::new();
    for t in tasks {
        corpus.push(lex(&t.ground_truth_code()?));
    }
    if include_doc_code {
        for (_, text) in docs {
            corpus.extend(fenced_blocks(text).iter().map(|b| lex(b)));
        }
    }
    Ok(corpus)
}
