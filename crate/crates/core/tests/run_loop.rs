mod common;

use std::sync::Mutex;

use common::{
    and_gate_calling, default_trivial, fenced, loop_config, method_configs, mock_retriever, scripted_toolchain, task,
    HALLUCINATED_GATE,
};
use serde_json::Value;
use tfhe_eval::extraction::Outcome;
use tfhe_eval::gateway::{
    ChatProvider, Completion, Conversation, GatewayError, MockProvider, ModelConfig, Role, Usage,
};
use tfhe_eval::metrics::TrivialNgramSet;
use tfhe_eval::orchestrator::{
    build_first_prompt, run_matrix, run_one, HistoryPolicy, LoopConfig, MethodConfig, MethodName, RunContext,
    RunIdentity, RunKey, RunRecord, TerminalStatus, EXEMPLAR_INTRO,
};
use tfhe_eval::retrieval::Retriever;
use tfhe_eval::toolchain::{MockToolchain, FORMAT_REQUIREMENT};

/// Serves a script and keeps every conversation it was sent.
struct Recording {
    script: Mutex<Vec<String>>,
    seen: Mutex<Vec<Conversation>>,
}

impl Recording {
    fn new(script: Vec<String>) -> Self {
        let mut script = script;
        script.reverse();
        Recording { script: Mutex::new(script), seen: Mutex::new(Vec::new()) }
    }
}

impl ChatProvider for Recording {
    fn name(&self) -> &str {
        "recording"
    }

    fn complete_once(&self, _: &ModelConfig, conv: &Conversation) -> Result<Completion, GatewayError> {
        self.seen.lock().unwrap().push(conv.clone());
        let text = self.script.lock().unwrap().pop().ok_or(GatewayError::ScriptExhausted(0))?;
        Ok(Completion { text, usage: Usage::new(conv.messages.len() as u64 * 10, 7) })
    }
}

struct Fixture {
    toolchain: MockToolchain,
    trivial: TrivialNgramSet,
    loop_config: LoopConfig,
    retriever: Retriever,
}

impl Fixture {
    fn new(max_iterations: u32) -> Self {
        Fixture {
            toolchain: scripted_toolchain(),
            trivial: default_trivial(),
            loop_config: loop_config(max_iterations),
            retriever: mock_retriever(),
        }
    }

    fn ctx(&self) -> RunContext<'_> {
        RunContext {
            toolchain: &self.toolchain,
            retriever: Some(&self.retriever),
            trivial: &self.trivial,
            loop_config: &self.loop_config,
            snapshot_extra: Value::Null,
        }
    }

    fn run(&self, provider: &dyn ChatProvider) -> RunRecord {
        self.run_method(provider, &MethodConfig::baseline())
    }

    fn run_method(&self, provider: &dyn ChatProvider, method: &MethodConfig) -> RunRecord {
        let model = ModelConfig::mock("scripted", vec![]);
        let id = RunIdentity { repeat_index: 0, repeat_total: 1 };
        run_one(&task("and_gate"), &model, method, id, provider, &self.ctx())
    }
}

fn bad() -> String {
    fenced(&and_gate_calling(HALLUCINATED_GATE))
}

fn good() -> String {
    fenced(&and_gate_calling("bootsAND"))
}

#[test]
fn fail_then_succeed_takes_two_iterations() {
    let fx = Fixture::new(10);
    let r = fx.run(&MockProvider::new([bad(), good()]));
    assert_eq!(r.terminal_status, TerminalStatus::CompileSuccess);
    assert_eq!(r.iterations.len(), 2);
    assert!(!r.iterations[0].compile_report.as_ref().unwrap().success);
    assert_eq!(r.iterations[0].compile_report.as_ref().unwrap().hallucinated_api_candidates, [HALLUCINATED_GATE]);
    assert!(r.iterations[1].compile_report.as_ref().unwrap().success);
    assert!(r.iterations[1].prompt_message.contains(HALLUCINATED_GATE));
    let f = r.func_report.as_ref().unwrap();
    assert_eq!((f.passed_cases, f.total_cases), (4, 4));
    assert_eq!(r.crystal_bleu, 1.0);
    assert_eq!(fx.toolchain.compile_calls().iter().map(|k| k.iteration).collect::<Vec<_>>(), [1, 2]);
}

#[test]
fn identical_failures_exhaust_the_budget_and_flag_repetition() {
    let fx = Fixture::new(10);
    let r = fx.run(&MockProvider::new(vec![bad(); 10]));
    assert_eq!(r.terminal_status, TerminalStatus::IterationBudgetExhausted);
    assert_eq!(r.iterations.len(), 10);
    let flags: Vec<bool> = r.iterations.iter().map(|i| i.repetition_flag).collect();
    let mut want = vec![true; 10];
    want[0] = false;
    assert_eq!(flags, want);
    assert!(r.func_report.is_none());
    assert_eq!(fx.toolchain.compile_calls().len(), 10);
}

#[test]
fn comment_only_changes_still_count_as_repetition() {
    let fx = Fixture::new(3);
    let tweaked = fenced(&and_gate_calling(HALLUCINATED_GATE).replace("{\n", "{ /* retry */\n"));
    let r = fx.run(&MockProvider::new([bad(), tweaked, good()]));
    assert_eq!(r.iterations.iter().map(|i| i.repetition_flag).collect::<Vec<_>>(), [false, true, false]);
}

#[test]
fn wrong_format_skips_compilation_and_reminds() {
    let fx = Fixture::new(10);
    let r = fx.run(&MockProvider::new(["I would call bootsAND on the inputs.".to_string(), good()]));
    assert_eq!(r.iterations.len(), 2);
    assert_eq!(r.iterations[0].extraction.outcome, Outcome::WrongFormat);
    assert!(r.iterations[0].compile_report.is_none());
    let reminder = &r.iterations[1].prompt_message;
    assert!(reminder.contains(FORMAT_REQUIREMENT));
    assert!(reminder.contains("wrong_format"));
    assert!(!reminder.contains("error:"));
    assert_eq!(fx.toolchain.compile_calls().iter().map(|k| k.iteration).collect::<Vec<_>>(), [2]);
    assert_eq!(r.terminal_status, TerminalStatus::CompileSuccess);
}

#[test]
fn never_extracted_code_scores_zero() {
    let fx = Fixture::new(2);
    let r = fx.run(&MockProvider::new(["no code".to_string(), "still none".into()]));
    assert_eq!(r.terminal_status, TerminalStatus::IterationBudgetExhausted);
    assert!(r.final_code.is_none());
    assert_eq!(r.crystal_bleu, 0.0);
    assert!(fx.toolchain.compile_calls().is_empty());
}

#[test]
fn history_grows_by_one_exchange_per_iteration() {
    let fx = Fixture::new(4);
    let provider = Recording::new(vec![bad(), "no code".into(), bad(), good()]);
    let r = fx.run(&provider);
    assert_eq!(r.iterations.len(), 4);
    let seen = provider.seen.lock().unwrap();
    for (i, conv) in seen.iter().enumerate() {
        assert_eq!(conv.len(), 2 + 2 * i);
        conv.validate().unwrap();
        for (j, it) in r.iterations[..i].iter().enumerate() {
            assert_eq!(conv.messages[2 + 2 * j].role, Role::Assistant);
            assert_eq!(conv.messages[2 + 2 * j].text, it.response);
            assert_eq!(conv.messages[3 + 2 * j].text, r.iterations[j + 1].prompt_message);
        }
    }
    // earlier conversations are prefixes of later ones
    for w in seen.windows(2) {
        assert_eq!(w[0].messages[..], w[1].messages[..w[0].len()]);
    }
}

#[test]
fn keep_last_bounds_resent_history() {
    let mut fx = Fixture::new(5);
    fx.loop_config.history = HistoryPolicy::KeepLast(1);
    let provider = Recording::new(vec![bad(); 5]);
    fx.run(&provider);
    let lens: Vec<usize> = provider.seen.lock().unwrap().iter().map(Conversation::len).collect();
    assert_eq!(lens, [2, 4, 4, 4, 4]);
}

#[test]
fn totals_are_the_sum_of_iteration_usage() {
    let fx = Fixture::new(10);
    let provider = Recording::new(vec![bad(), bad(), good()]);
    let r = fx.run(&provider);
    // Recording charges 10 input tokens per message sent and 7 output tokens.
    assert_eq!((r.totals.input_tokens, r.totals.output_tokens), ((2 + 4 + 6) * 10, 3 * 7));
}

#[test]
fn provider_failure_is_recorded_as_errored() {
    let fx = Fixture::new(10);
    let r = fx.run(&MockProvider::new([bad()]));
    assert_eq!(r.terminal_status, TerminalStatus::Errored);
    assert_eq!(r.iterations.len(), 1);
    assert!(r.error.as_deref().unwrap().contains("exhausted"));
}

#[test]
fn methods_shape_the_first_prompt() {
    let fx = Fixture::new(1);
    let t = task("and_gate");
    for m in method_configs() {
        let p = build_first_prompt(&t, &m, Some(&fx.retriever), None).unwrap();
        let system = p.conversation.system_text().unwrap();
        let user = p.conversation.last_user_text().unwrap();
        assert!(user.contains("homomorphic_and"));
        assert_eq!(system.contains("### TFHE documentation excerpts"), m.name.uses_rag(), "{}", m.name);
        assert_eq!(!p.retrieved.is_empty(), m.name.uses_rag());
        assert_eq!(user.contains(EXEMPLAR_INTRO), m.name.uses_fewshot(), "{}", m.name);
    }
}

#[test]
fn exemplar_can_be_withheld_from_the_or_task() {
    let fx = Fixture::new(1);
    let fewshot = method_configs().into_iter().find(|m| m.name == MethodName::Fewshot).unwrap();
    let or = task("or_gate");
    let with = build_first_prompt(&or, &fewshot, Some(&fx.retriever), None).unwrap();
    let without = build_first_prompt(&or, &fewshot, Some(&fx.retriever), Some("or_gate")).unwrap();
    assert!(with.conversation.last_user_text().unwrap().contains(EXEMPLAR_INTRO));
    assert!(!without.conversation.last_user_text().unwrap().contains(EXEMPLAR_INTRO));
    let and = build_first_prompt(&task("and_gate"), &fewshot, Some(&fx.retriever), Some("or_gate")).unwrap();
    assert!(and.conversation.last_user_text().unwrap().contains(EXEMPLAR_INTRO));
}

#[test]
fn rag_without_index_errors_the_run() {
    let fx = Fixture::new(1);
    let rag = method_configs().into_iter().find(|m| m.name == MethodName::Rag).unwrap();
    let ctx = RunContext { retriever: None, ..fx.ctx() };
    let model = ModelConfig::mock("scripted", vec![]);
    let id = RunIdentity { repeat_index: 0, repeat_total: 1 };
    let r = run_one(&task("and_gate"), &model, &rag, id, &MockProvider::new([good()]), &ctx);
    assert_eq!(r.terminal_status, TerminalStatus::Errored);
    assert!(r.iterations.is_empty());
}

fn matrix_records(parallelism: usize) -> Vec<RunRecord> {
    let fx = Fixture::new(10);
    let tasks = vec![task("and_gate"), task("or_gate")];
    let models = vec![ModelConfig::mock("m1", vec![]), ModelConfig::mock("m2", vec![])];
    let factory = |k: &RunKey, _: &ModelConfig| -> Result<Box<dyn ChatProvider>, GatewayError> {
        let script =
            if (k.repeat_index + k.method as u32).is_multiple_of(2) { vec![good()] } else { vec![bad(), good()] };
        Ok(Box::new(MockProvider::new(script)))
    };
    let mut out = Vec::new();
    let summary = run_matrix(&tasks, &models, &method_configs(), 3, parallelism, &fx.ctx(), &factory, &mut |r| {
        out.push(r);
        Ok(())
    })
    .unwrap();
    assert_eq!(summary.runs, 2 * 2 * 4 * 3);
    assert_eq!(summary.errored, 0);
    out.sort_by_key(|r| (r.task_id.clone(), r.model_id.clone(), r.method, r.repeat_index));
    out.into_iter().map(|r| r.without_timing()).collect()
}

#[test]
fn matrix_replays_identically_across_parallelism() {
    let a = matrix_records(1);
    let b = matrix_records(4);
    assert_eq!(a.len(), 48);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn factory_failure_becomes_an_errored_record() {
    let fx = Fixture::new(2);
    let factory = |k: &RunKey, _: &ModelConfig| -> Result<Box<dyn ChatProvider>, GatewayError> {
        if k.repeat_index == 1 {
            Err(GatewayError::MissingCredential("NOPE_KEY".into()))
        } else {
            Ok(Box::new(MockProvider::new([good()])))
        }
    };
    let mut out = Vec::new();
    let summary = run_matrix(
        &[task("not_gate")],
        &[ModelConfig::mock("m", vec![])],
        &[MethodConfig::baseline()],
        3,
        2,
        &fx.ctx(),
        &factory,
        &mut |r| {
            out.push(r);
            Ok(())
        },
    )
    .unwrap();
    assert_eq!((summary.runs, summary.errored), (3, 1));
    let errored: Vec<u32> = out.iter().filter(|r| r.is_errored()).map(|r| r.repeat_index).collect();
    assert_eq!(errored, [1]);
}
