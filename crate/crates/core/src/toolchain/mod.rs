//! Compiling candidates, running functional drivers, and turning the
//! results into structured reports and revision prompts.

pub mod diagnostics;
pub mod driver;
mod mock;
pub mod process;
mod revision;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{StubApiSurface, TaskManifest};

pub use diagnostics::{
    classify_hallucination, is_tfhe_patterned, missing_include, parse_diagnostics, undeclared_identifier, Diagnostic,
    ParsedOutput, Severity,
};
pub use mock::MockToolchain;
pub use revision::{build_revision_prompt, RevisionConfig, RevisionContext, FORMAT_REQUIREMENT};

pub const SOURCE_FILE: &str = "candidate.c";
pub const OBJECT_FILE: &str = "candidate.o";
pub const BINARY_FILE: &str = "candidate_test";

pub const DEFAULT_COMPILE_TEMPLATE: &str =
    "cc -std=gnu11 -Wall -Werror=implicit-function-declaration -c {src} -o {out} {include_dirs} {lib_dirs} {libs}";
pub const DEFAULT_LINK_TEMPLATE: &str = "cc -std=gnu11 {obj} {driver} -o {out} {include_dirs} {lib_dirs} {libs}";

#[derive(Debug, Error)]
pub enum ToolchainError {
    #[error("invalid toolchain config: {0}")]
    Config(String),
    #[error("toolchain binary `{0}` not found")]
    BinaryMissing(String),
    #[error("building the stub library failed: {0}")]
    StubBuild(String),
    #[error("workspace I/O on {path}: {source}")]
    Workspace { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LibraryMode {
    Stub,
    Real,
}

/// Header/library locations for one library mode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryPaths {
    #[serde(default)]
    pub include_dirs: Vec<PathBuf>,
    #[serde(default)]
    pub lib_dirs: Vec<PathBuf>,
    #[serde(default)]
    pub libs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolchainConfig {
    pub compile_command_template: String,
    pub link_command_template: String,
    pub library_mode: LibraryMode,
    pub library: LibraryPaths,
    pub workspace_root: PathBuf,
    pub compile_timeout: Duration,
    pub run_timeout: Duration,
}

impl ToolchainConfig {
    pub fn new(workspace_root: impl Into<PathBuf>, library: LibraryPaths) -> Self {
        ToolchainConfig {
            compile_command_template: DEFAULT_COMPILE_TEMPLATE.into(),
            link_command_template: DEFAULT_LINK_TEMPLATE.into(),
            library_mode: LibraryMode::Stub,
            library,
            workspace_root: workspace_root.into(),
            compile_timeout: Duration::from_secs(30),
            run_timeout: Duration::from_secs(10),
        }
    }

    pub fn validate(&self) -> Result<(), ToolchainError> {
        check_template(&self.compile_command_template, COMPILE_PLACEHOLDERS)?;
        check_template(&self.link_command_template, LINK_PLACEHOLDERS)?;
        if self.compile_timeout.is_zero() || self.run_timeout.is_zero() {
            return Err(ToolchainError::Config("timeouts must be positive".into()));
        }
        Ok(())
    }
}

const COMPILE_PLACEHOLDERS: &[&str] = &["{src}", "{out}", "{include_dirs}", "{lib_dirs}", "{libs}"];
const LINK_PLACEHOLDERS: &[&str] = &["{obj}", "{driver}", "{out}", "{include_dirs}", "{lib_dirs}", "{libs}"];
const LIST_PLACEHOLDERS: &[&str] = &["{include_dirs}", "{lib_dirs}", "{libs}"];

fn check_template(template: &str, required: &[&str]) -> Result<(), ToolchainError> {
    for p in required {
        let n = template.matches(p).count();
        if n != 1 {
            return Err(ToolchainError::Config(format!(
                "template `{template}` must contain {p} exactly once (found {n})"
            )));
        }
    }
    let tokens =
        shlex::split(template).ok_or_else(|| ToolchainError::Config(format!("unbalanced quoting in `{template}`")))?;
    for p in LIST_PLACEHOLDERS {
        if required.contains(p) && !tokens.iter().any(|t| t == p) {
            return Err(ToolchainError::Config(format!("{p} must be a separate word in `{template}`")));
        }
    }
    Ok(())
}

/// Expand a command template into argv. List placeholders expand to zero or
/// more words; path placeholders are substituted inside words.
pub fn expand_template(
    template: &str,
    paths: &[(&str, &Path)],
    library: &LibraryPaths,
) -> Result<Vec<String>, ToolchainError> {
    let words =
        shlex::split(template).ok_or_else(|| ToolchainError::Config(format!("unbalanced quoting in `{template}`")))?;
    let mut argv = Vec::new();
    for word in words {
        match word.as_str() {
            "{include_dirs}" => argv.extend(library.include_dirs.iter().map(|d| format!("-I{}", d.display()))),
            "{lib_dirs}" => argv.extend(library.lib_dirs.iter().map(|d| format!("-L{}", d.display()))),
            "{libs}" => argv.extend(library.libs.iter().map(|l| format!("-l{l}"))),
            _ => {
                let mut w = word.clone();
                for (name, path) in paths {
                    w = w.replace(name, &path.display().to_string());
                }
                argv.push(w);
            }
        }
    }
    if argv.is_empty() {
        return Err(ToolchainError::Config("empty command template".into()));
    }
    Ok(argv)
}

/// Identifies one compile attempt; its workspace directory embeds every
/// component so concurrent runs never share files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorkspaceKey {
    pub task: String,
    pub model: String,
    pub method: String,
    pub repeat: u32,
    pub iteration: u32,
}

impl WorkspaceKey {
    pub fn relative_dir(&self) -> PathBuf {
        PathBuf::from(sanitize(&self.task))
            .join(sanitize(&self.model))
            .join(sanitize(&self.method))
            .join(format!("r{}", self.repeat))
            .join(format!("i{}", self.iteration))
    }
}

impl fmt::Display for WorkspaceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.relative_dir().display())
    }
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileReport {
    pub success: bool,
    pub exit_code: Option<i32>,
    pub diagnostics: Vec<Diagnostic>,
    /// Output lines that did not parse as diagnostics.
    pub unparsed: Vec<String>,
    pub raw_output: String,
    pub hallucinated_api_candidates: Vec<String>,
    /// Undeclared names the API does export (forgotten `#include`).
    pub missing_include_candidates: Vec<String>,
    pub timed_out: bool,
    pub duration_ms: u64,
}

impl CompileReport {
    /// Assemble a report from toolchain output. `success` requires both a
    /// zero exit status and no error-severity diagnostics.
    pub fn from_output(
        raw_output: String,
        exit_code: Option<i32>,
        timed_out: bool,
        duration: Duration,
        api: &StubApiSurface,
    ) -> Self {
        let ParsedOutput { diagnostics, unparsed } = parse_diagnostics(&raw_output);
        let mut hallucinated = Vec::new();
        let mut missing = Vec::new();
        for d in &diagnostics {
            if let Some(id) = classify_hallucination(d, api) {
                if !hallucinated.contains(&id) {
                    hallucinated.push(id);
                }
            } else if let Some(id) = missing_include(d, api) {
                if !missing.contains(&id) {
                    missing.push(id);
                }
            }
        }
        let has_errors = diagnostics.iter().any(|d| d.severity == Severity::Error);
        CompileReport {
            success: exit_code == Some(0) && !timed_out && !has_errors,
            exit_code,
            diagnostics,
            unparsed,
            raw_output,
            hallucinated_api_candidates: hallucinated,
            missing_include_candidates: missing,
            timed_out,
            duration_ms: duration.as_millis() as u64,
        }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuncReport {
    pub total_cases: u32,
    pub passed_cases: u32,
    pub per_case: Vec<(u32, bool)>,
    pub timed_out: bool,
    pub exit_code: Option<i32>,
    /// The driver's own `TOTAL p/t` line, if it got that far.
    pub reported_total: Option<(u32, u32)>,
    pub stdout: String,
}

impl FuncReport {
    pub fn from_run(stdout: String, exit_code: Option<i32>, timed_out: bool, expected_cases: u32) -> Self {
        let parsed = driver::parse_output(&stdout);
        let passed = parsed.cases.iter().filter(|&&(_, ok)| ok).count() as u32;
        FuncReport {
            total_cases: expected_cases,
            passed_cases: passed.min(expected_cases),
            per_case: parsed.cases,
            timed_out,
            exit_code,
            reported_total: parsed.total,
            stdout,
        }
    }

    /// Every expected case passed, the driver exited 0 and did not time out.
    pub fn is_pass(&self) -> bool {
        !self.timed_out
            && self.exit_code == Some(0)
            && self.total_cases > 0
            && self.passed_cases == self.total_cases
            && self.per_case.len() as u32 == self.total_cases
    }

    pub fn failed_cases(&self) -> Vec<u32> {
        self.per_case.iter().filter(|c| !c.1).map(|c| c.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkReport {
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub raw_output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunOutcome {
    Ran(FuncReport),
    LinkFailed(LinkReport),
}

impl RunOutcome {
    pub fn func_report(&self) -> Option<&FuncReport> {
        match self {
            RunOutcome::Ran(r) => Some(r),
            RunOutcome::LinkFailed(_) => None,
        }
    }
}

/// A successfully compiled candidate, ready for linking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledCandidate {
    pub workspace: PathBuf,
    pub object: PathBuf,
    pub source: String,
}

pub struct CompileOutcome {
    pub report: CompileReport,
    /// Present iff `report.success`.
    pub compiled: Option<CompiledCandidate>,
}

pub trait Toolchain: Send + Sync {
    fn api(&self) -> &StubApiSurface;

    fn compile(&self, code: &str, task: &TaskManifest, key: &WorkspaceKey) -> Result<CompileOutcome, ToolchainError>;

    fn link_and_run(&self, compiled: &CompiledCandidate, task: &TaskManifest) -> Result<RunOutcome, ToolchainError>;
}

/// Drives a C compiler through the configured command templates.
pub struct CcToolchain {
    config: ToolchainConfig,
    api: StubApiSurface,
}

impl CcToolchain {
    /// Library and workspace paths are made absolute here because commands
    /// run with the per-attempt workspace as working directory.
    pub fn new(mut config: ToolchainConfig, api: StubApiSurface) -> Result<Self, ToolchainError> {
        config.validate()?;
        let abs = |p: &Path| {
            std::path::absolute(p).map_err(|source| ToolchainError::Workspace { path: p.to_owned(), source })
        };
        config.workspace_root = abs(&config.workspace_root)?;
        for d in config.library.include_dirs.iter_mut().chain(config.library.lib_dirs.iter_mut()) {
            *d = abs(d)?;
        }
        Ok(CcToolchain { config, api })
    }

    pub fn config(&self) -> &ToolchainConfig {
        &self.config
    }

    fn fresh_workspace(&self, key: &WorkspaceKey) -> Result<PathBuf, ToolchainError> {
        let dir = self.config.workspace_root.join(key.relative_dir());
        let io = |source| ToolchainError::Workspace { path: dir.clone(), source };
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io)?;
        }
        fs::create_dir_all(&dir).map_err(io)?;
        Ok(dir)
    }

    fn spawn(&self, argv: &[String], cwd: &Path, timeout: Duration) -> Result<process::ProcessOutput, ToolchainError> {
        process::run(argv, cwd, timeout).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ToolchainError::BinaryMissing(argv[0].clone())
            } else {
                ToolchainError::Workspace { path: cwd.to_owned(), source: e }
            }
        })
    }
}

impl Toolchain for CcToolchain {
    fn api(&self) -> &StubApiSurface {
        &self.api
    }

    fn compile(&self, code: &str, _task: &TaskManifest, key: &WorkspaceKey) -> Result<CompileOutcome, ToolchainError> {
        let ws = self.fresh_workspace(key)?;
        let src = ws.join(SOURCE_FILE);
        fs::write(&src, code).map_err(|source| ToolchainError::Workspace { path: src.clone(), source })?;
        let argv = expand_template(
            &self.config.compile_command_template,
            &[("{src}", Path::new(SOURCE_FILE)), ("{out}", Path::new(OBJECT_FILE))],
            &self.config.library,
        )?;
        log::debug!("[{key}] compile: {}", argv.join(" "));
        let out = self.spawn(&argv, &ws, self.config.compile_timeout)?;
        let mut raw = out.combined();
        if out.timed_out {
            if !raw.is_empty() && !raw.ends_with('\n') {
                raw.push('\n');
            }
            raw.push_str(&format!(
                "{SOURCE_FILE}:1: error: compilation timed out after {} ms\n",
                self.config.compile_timeout.as_millis()
            ));
        }
        let report = CompileReport::from_output(raw, out.exit_code, out.timed_out, out.elapsed, &self.api);
        let compiled = report.success.then(|| CompiledCandidate {
            object: ws.join(OBJECT_FILE),
            workspace: ws,
            source: code.to_owned(),
        });
        Ok(CompileOutcome { report, compiled })
    }

    fn link_and_run(&self, compiled: &CompiledCandidate, task: &TaskManifest) -> Result<RunOutcome, ToolchainError> {
        let ws = &compiled.workspace;
        let driver = std::path::absolute(&task.driver)
            .map_err(|source| ToolchainError::Workspace { path: task.driver.clone(), source })?;
        let argv = expand_template(
            &self.config.link_command_template,
            &[("{obj}", compiled.object.as_path()), ("{driver}", driver.as_path()), ("{out}", Path::new(BINARY_FILE))],
            &self.config.library,
        )?;
        log::debug!("link: {}", argv.join(" "));
        let link = self.spawn(&argv, ws, self.config.compile_timeout)?;
        if !link.success() {
            let raw_output = link.combined();
            return Ok(RunOutcome::LinkFailed(LinkReport {
                exit_code: link.exit_code,
                timed_out: link.timed_out,
                diagnostics: parse_diagnostics(&raw_output).diagnostics,
                raw_output,
            }));
        }
        let binary = ws.join(BINARY_FILE);
        let run = self.spawn(&[binary.display().to_string()], ws, self.config.run_timeout)?;
        Ok(RunOutcome::Ran(FuncReport::from_run(run.stdout, run.exit_code, run.timed_out, task.expected_cases)))
    }
}

pub const STUB_LIBRARY_NAME: &str = "tfhe_stub";

/// Compile the plaintext stub sources into `out_dir/libtfhe_stub.a` and
/// return the paths that link against it.
pub fn build_stub_library(
    sources: &[PathBuf],
    include_dirs: &[PathBuf],
    out_dir: &Path,
) -> Result<LibraryPaths, ToolchainError> {
    let io = |source| ToolchainError::Workspace { path: out_dir.to_owned(), source };
    fs::create_dir_all(out_dir).map_err(io)?;
    let out_dir = std::path::absolute(out_dir).map_err(io)?;
    let include_dirs: Vec<PathBuf> =
        include_dirs.iter().map(std::path::absolute).collect::<Result<_, _>>().map_err(io)?;
    let timeout = Duration::from_secs(60);
    let mut objects = Vec::new();
    for (i, src) in sources.iter().enumerate() {
        let src = std::path::absolute(src).map_err(io)?;
        let obj = out_dir.join(format!("stub{i}.o"));
        let mut argv = vec!["cc".to_string(), "-std=gnu11".into(), "-O1".into(), "-c".into()];
        argv.push(src.display().to_string());
        argv.extend(["-o".to_string(), obj.display().to_string()]);
        argv.extend(include_dirs.iter().map(|d| format!("-I{}", d.display())));
        run_checked(&argv, &out_dir, timeout)?;
        objects.push(obj.display().to_string());
    }
    let mut argv = vec!["ar".to_string(), "rcs".into(), format!("lib{STUB_LIBRARY_NAME}.a")];
    argv.extend(objects);
    run_checked(&argv, &out_dir, timeout)?;
    Ok(LibraryPaths { include_dirs, lib_dirs: vec![out_dir], libs: vec![STUB_LIBRARY_NAME.into()] })
}

fn run_checked(argv: &[String], cwd: &Path, timeout: Duration) -> Result<(), ToolchainError> {
    let out = process::run(argv, cwd, timeout).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ToolchainError::BinaryMissing(argv[0].clone())
        } else {
            ToolchainError::Workspace { path: cwd.to_owned(), source: e }
        }
    })?;
    if !out.success() {
        return Err(ToolchainError::StubBuild(format!("`{}`: {}", argv.join(" "), out.combined().trim())));
    }
    Ok(())
}
