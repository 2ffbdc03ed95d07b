#![allow(dead_code)]

pub mod oracles;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use tfhe_eval::corpus::{load_corpus, StubApiSurface, TaskManifest};
use tfhe_eval::metrics::{trivial_ngrams, TrivialNgramSet, DEFAULT_MAX_ORDER, DEFAULT_TRIVIAL_K};
use tfhe_eval::orchestrator::config::background_corpus;
use tfhe_eval::orchestrator::{LoopConfig, MethodConfig, MethodName, RagParams};
use tfhe_eval::retrieval::{read_documents, MockEmbedder, RetrievalIndex, Retriever};
use tfhe_eval::toolchain::{build_stub_library, CcToolchain, LibraryPaths, MockToolchain, ToolchainConfig};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn corpus_root() -> PathBuf {
    repo_root().join("corpus")
}

pub fn corpus() -> Vec<TaskManifest> {
    load_corpus(&corpus_root()).expect("bundled corpus loads")
}

pub fn task(id: &str) -> TaskManifest {
    corpus().into_iter().find(|t| t.task_id == id).unwrap_or_else(|| panic!("no task {id}"))
}

pub fn exemplar_path() -> PathBuf {
    corpus_root().join("or_gate/ground_truth.c")
}

pub fn docs() -> Vec<(String, String)> {
    read_documents(&[corpus_root().join("docs/gate_bootstrapping_api.md")]).unwrap()
}

pub fn api() -> StubApiSurface {
    StubApiSurface::from_header_file(&corpus_root().join("stub/include/tfhe/tfhe.h"), "tfhe/tfhe.h").unwrap()
}

/// The stub library, built once per test binary.
pub fn stub_library() -> &'static LibraryPaths {
    static LIB: OnceLock<LibraryPaths> = OnceLock::new();
    LIB.get_or_init(|| {
        let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("stub-{}", std::process::id()));
        let stub = corpus_root().join("stub");
        build_stub_library(&[stub.join("tfhe_stub.c")], &[stub.join("include")], &out).expect("stub builds")
    })
}

pub fn cc_toolchain(workspace: &Path) -> CcToolchain {
    let mut cfg = ToolchainConfig::new(workspace, stub_library().clone());
    cfg.run_timeout = std::time::Duration::from_secs(2);
    CcToolchain::new(cfg, api()).unwrap()
}

/// True when `cc` is clang, whose diagnostics sometimes point at a
/// different line than gcc's.
pub fn cc_is_clang() -> bool {
    std::process::Command::new("cc")
        .arg("--version")
        .output()
        .map(|o| String::from_utf8_lossy(&o.stdout).contains("clang"))
        .unwrap_or(false)
}

pub fn fenced(code: &str) -> String {
    format!("Here you go:\n```c\n{code}\n```\n")
}

pub const AND_SIGNATURE: &str = "void homomorphic_and(LweSample *result, const LweSample *a, const LweSample *b,\n\
                    const TFheGateBootstrappingCloudKeySet *bk)";

pub fn and_gate_calling(gate: &str) -> String {
    format!("#include <tfhe/tfhe.h>\n\n{AND_SIGNATURE} {{\n    {gate}(result, a, b, bk);\n}}\n")
}

pub const HALLUCINATED_GATE: &str = "bootsNAND_typo";

/// Toolchain double. Sources naming a `boots*` function the stub does not
/// export fail like gcc's implicit-declaration error on that line; sources
/// containing `syntax_error` fail on a missing semicolon. Everything else
/// compiles. At run time a source containing `bootsOR` fails cases 1 and 2
/// of a four-case driver; otherwise every case passes.
pub fn scripted_toolchain() -> MockToolchain {
    let api = api();
    let surface = api.clone();
    MockToolchain::new(
        api,
        move |code, _task| {
            for (i, line) in code.lines().enumerate() {
                for word in line.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')) {
                    if word.starts_with("boots") && !surface.contains(word) {
                        return (
                            1,
                            format!(
                                "candidate.c:{}:5: error: implicit declaration of function '{word}' \
                                 [-Werror=implicit-function-declaration]\ncc1: some warnings being treated as errors\n",
                                i + 1
                            ),
                        );
                    }
                }
                if line.contains("syntax_error") {
                    return (1, format!("candidate.c:{}:5: error: expected ';' before '}}' token\n", i + 1));
                }
            }
            (0, String::new())
        },
        |code, task| {
            let mut out = String::new();
            let mut passed = 0;
            for case in 0..task.expected_cases {
                let ok = !(code.contains("bootsOR") && task.expected_cases == 4 && (case == 1 || case == 2));
                passed += ok as u32;
                out.push_str(&format!("CASE {case} {}\n", if ok { "PASS" } else { "FAIL" }));
            }
            out.push_str(&format!("TOTAL {passed}/{}\n", task.expected_cases));
            (Some(if passed == task.expected_cases { 0 } else { 1 }), out, false)
        },
    )
}

pub fn mock_retriever() -> Retriever {
    let embedder = MockEmbedder::default();
    let index = RetrievalIndex::build(&docs(), &embedder, 1200, 200).unwrap();
    Retriever::new(index, Box::new(embedder)).unwrap()
}

pub fn method_configs() -> Vec<MethodConfig> {
    MethodName::ALL.iter().map(|&m| MethodConfig::new(m, RagParams::default(), &exemplar_path())).collect()
}

/// Trivial n-grams over the bundled ground truths and documentation code,
/// with the default k and order.
pub fn default_trivial() -> TrivialNgramSet {
    let background = background_corpus(&corpus(), &docs(), true).unwrap();
    trivial_ngrams(&background, DEFAULT_TRIVIAL_K, DEFAULT_MAX_ORDER, "bundled")
}

pub fn loop_config(max_iterations: u32) -> LoopConfig {
    LoopConfig { max_iterations, ..LoopConfig::default() }
}

/// A captured compiler output and what parsing it must yield.
pub struct DiagFixture {
    pub name: &'static str,
    /// (file, line, column, severity) of every diagnostic, in output order.
    pub diagnostics: &'static [(&'static str, u32, Option<u32>, &'static str)],
    pub hallucinated: &'static [&'static str],
    pub missing_include: &'static [&'static str],
    /// Undeclared names that must not be flagged as hallucinations.
    pub undeclared_other: &'static [&'static str],
}

const C: &str = "candidate.c";

pub const DIAG_FIXTURES: [DiagFixture; 10] = [
    DiagFixture {
        name: "01_gcc_missing_semicolon",
        diagnostics: &[(C, 6, Some(5), "error")],
        hallucinated: &[],
        missing_include: &[],
        undeclared_other: &[],
    },
    DiagFixture {
        name: "02_gcc_hallucinated_xnor",
        diagnostics: &[(C, 5, Some(5), "error")],
        hallucinated: &["bootsXNOR"],
        missing_include: &[],
        undeclared_other: &[],
    },
    DiagFixture {
        name: "03_gcc_undeclared_variable",
        diagnostics: &[(C, 5, Some(27), "error"), (C, 5, Some(27), "note")],
        hallucinated: &[],
        missing_include: &[],
        undeclared_other: &["cloud_key"],
    },
    DiagFixture {
        name: "04_gcc_unknown_type",
        diagnostics: &[(C, 5, Some(5), "error"), (C, 5, Some(18), "warning")],
        hallucinated: &["TFHEContext"],
        missing_include: &[],
        undeclared_other: &[],
    },
    DiagFixture {
        name: "05_gcc_missing_include",
        diagnostics: &[
            (C, 3, Some(22), "error"),
            (C, 3, Some(47), "error"),
            (C, 3, Some(67), "error"),
            (C, 4, Some(28), "error"),
        ],
        hallucinated: &[],
        missing_include: &["LweSample", "TFheGateBootstrappingCloudKeySet"],
        undeclared_other: &[],
    },
    DiagFixture {
        name: "06_gcc_wrong_arity",
        diagnostics: &[
            (C, 6, Some(5), "error"),
            ("/opt/tfhe-stub/include/tfhe/tfhe.h", 51, Some(6), "note"),
            (C, 5, Some(9), "warning"),
        ],
        hallucinated: &[],
        missing_include: &[],
        undeclared_other: &[],
    },
    DiagFixture {
        name: "07_gcc_fatal_missing_header",
        diagnostics: &[(C, 2, Some(10), "error")],
        hallucinated: &[],
        missing_include: &[],
        undeclared_other: &[],
    },
    DiagFixture {
        name: "08_clang_hallucinated_nand",
        diagnostics: &[(C, 5, Some(5), "error")],
        hallucinated: &["bootsNAND_typo"],
        missing_include: &[],
        undeclared_other: &[],
    },
    DiagFixture {
        name: "09_clang_missing_semicolon",
        diagnostics: &[(C, 6, Some(40), "error")],
        hallucinated: &[],
        missing_include: &[],
        undeclared_other: &[],
    },
    DiagFixture {
        name: "10_clang_undeclared_identifier",
        diagnostics: &[(C, 5, Some(25), "error"), (C, 6, Some(5), "error")],
        hallucinated: &[],
        missing_include: &[],
        undeclared_other: &["bk", "helper_flip"],
    },
];

pub fn fixture_path(name: &str, ext: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/diagnostics").join(format!("{name}.{ext}"))
}

pub fn fixture_output(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name, "txt")).unwrap()
}

/// Shape of one synthetic iteration: usage, wrong format, repetition.
#[derive(Debug, Clone, Copy)]
pub struct SynthIteration {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wrong_format: bool,
    pub repetition: bool,
}

/// Shape of one synthetic run record.
#[derive(Debug, Clone)]
pub struct SynthRun {
    pub task: String,
    pub model: String,
    pub method: MethodName,
    pub repeat_index: u32,
    pub repeat_total: u32,
    pub compiled: bool,
    pub func_passed: bool,
    pub errored: bool,
    pub bleu: f64,
    pub iterations: Vec<SynthIteration>,
}

pub fn synth_record(s: &SynthRun) -> tfhe_eval::orchestrator::RunRecord {
    use tfhe_eval::extraction::{ExtractionResult, Outcome};
    use tfhe_eval::gateway::Usage;
    use tfhe_eval::orchestrator::{IterationRecord, RunRecord, TerminalStatus, SCHEMA_VERSION};
    use tfhe_eval::toolchain::FuncReport;

    let iterations: Vec<IterationRecord> = s
        .iterations
        .iter()
        .enumerate()
        .map(|(i, it)| IterationRecord {
            index: i as u32 + 1,
            prompt_message: String::new(),
            response: String::new(),
            usage: Usage::new(it.input_tokens, it.output_tokens),
            extraction: if it.wrong_format {
                ExtractionResult { outcome: Outcome::WrongFormat, block_count: 0 }
            } else {
                ExtractionResult { outcome: Outcome::Code("int x;".into()), block_count: 1 }
            },
            repetition_flag: it.repetition,
            compile_report: None,
        })
        .collect();
    let func_report = s.compiled.then(|| {
        let verdict = if s.func_passed { "PASS" } else { "FAIL" };
        let ok = s.func_passed as u32;
        FuncReport::from_run(format!("CASE 0 {verdict}\nTOTAL {ok}/1\n"), Some(1 - ok as i32), false, 1)
    });
    RunRecord {
        schema_version: SCHEMA_VERSION,
        task_id: s.task.clone(),
        model_id: s.model.clone(),
        method: s.method,
        repeat_index: s.repeat_index,
        repeat_total: s.repeat_total,
        totals: iterations.iter().map(|i| i.usage).sum(),
        iterations,
        terminal_status: if s.errored {
            TerminalStatus::Errored
        } else if s.compiled {
            TerminalStatus::CompileSuccess
        } else {
            TerminalStatus::IterationBudgetExhausted
        },
        func_report,
        link_report: None,
        final_code: None,
        crystal_bleu: s.bleu,
        retrieved: Vec::new(),
        error: s.errored.then(|| "provider outage".to_string()),
        started_at: chrono::DateTime::<chrono::Utc>::UNIX_EPOCH,
        wall_time_ms: 0,
        config_snapshot: serde_json::Value::Null,
    }
}
