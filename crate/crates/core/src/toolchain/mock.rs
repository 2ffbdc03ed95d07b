use std::sync::Mutex;
use std::time::Duration;

use super::{
    CompileOutcome, CompileReport, CompiledCandidate, FuncReport, RunOutcome, Toolchain, ToolchainError, WorkspaceKey,
};
use crate::corpus::{StubApiSurface, TaskManifest};

type CompileFn = dyn Fn(&str, &TaskManifest) -> (i32, String) + Send + Sync;
type RunFn = dyn Fn(&str, &TaskManifest) -> (Option<i32>, String, bool) + Send + Sync;

/// In-process toolchain double driven by two rules.
///
/// The compile rule maps source to `(exit code, compiler output)`; the
/// output goes through the real diagnostic parser. The run rule maps source
/// to `(exit code, driver stdout, timed out)`. Rules are pure functions of
/// the code so runs stay independent of scheduling order.
pub struct MockToolchain {
    api: StubApiSurface,
    compile_rule: Box<CompileFn>,
    run_rule: Box<RunFn>,
    compiled: Mutex<Vec<WorkspaceKey>>,
}

impl MockToolchain {
    pub fn new(
        api: StubApiSurface,
        compile_rule: impl Fn(&str, &TaskManifest) -> (i32, String) + Send + Sync + 'static,
        run_rule: impl Fn(&str, &TaskManifest) -> (Option<i32>, String, bool) + Send + Sync + 'static,
    ) -> Self {
        MockToolchain {
            api,
            compile_rule: Box::new(compile_rule),
            run_rule: Box::new(run_rule),
            compiled: Mutex::new(Vec::new()),
        }
    }

    /// Workspace keys of every compile call so far, in call order.
    pub fn compile_calls(&self) -> Vec<WorkspaceKey> {
        self.compiled.lock().unwrap().clone()
    }
}

impl Toolchain for MockToolchain {
    fn api(&self) -> &StubApiSurface {
        &self.api
    }

    fn compile(&self, code: &str, task: &TaskManifest, key: &WorkspaceKey) -> Result<CompileOutcome, ToolchainError> {
        self.compiled.lock().unwrap().push(key.clone());
        let (exit, output) = (self.compile_rule)(code, task);
        let report = CompileReport::from_output(output, Some(exit), false, Duration::ZERO, &self.api);
        let compiled = report.success.then(|| CompiledCandidate {
            workspace: key.relative_dir(),
            object: key.relative_dir().join(super::OBJECT_FILE),
            source: code.to_owned(),
        });
        Ok(CompileOutcome { report, compiled })
    }

    fn link_and_run(&self, compiled: &CompiledCandidate, task: &TaskManifest) -> Result<RunOutcome, ToolchainError> {
        let (exit, stdout, timed_out) = (self.run_rule)(&compiled.source, task);
        Ok(RunOutcome::Ran(FuncReport::from_run(stdout, exit, timed_out, task.expected_cases)))
    }
}
