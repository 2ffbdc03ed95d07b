use serde::{Deserialize, Serialize};

use super::{CompileReport, FuncReport};

/// Appended to every revision prompt and to the first system prompt.
pub const FORMAT_REQUIREMENT: &str = "Reply with the complete C program in a single fenced code block \
that starts with ```c and ends with ```. Do not split the program across several blocks.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionConfig {
    /// Upper bound on the bytes of quoted compiler output.
    pub byte_budget: usize,
    /// At most this many error lines are quoted, earliest first.
    pub max_error_lines: usize,
    /// Header generated code is expected to include.
    pub api_header: String,
}

impl Default for RevisionConfig {
    fn default() -> Self {
        RevisionConfig { byte_budget: 4000, max_error_lines: 20, api_header: "tfhe/tfhe.h".into() }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum RevisionContext<'a> {
    CompileFailure(&'a CompileReport),
    FunctionalFailure(&'a FuncReport),
    WrongFormat,
}

pub fn build_revision_prompt(ctx: RevisionContext<'_>, cfg: &RevisionConfig) -> String {
    match ctx {
        RevisionContext::WrongFormat => format!(
            "Failure class: wrong_format.\n\nYour previous response contained no fenced code block, \
             so no program could be extracted.\n\n{FORMAT_REQUIREMENT}"
        ),
        RevisionContext::CompileFailure(report) => compile_prompt(report, cfg),
        RevisionContext::FunctionalFailure(report) => functional_prompt(report),
    }
}

fn compile_prompt(report: &CompileReport, cfg: &RevisionConfig) -> String {
    let class = if report.timed_out { "compile_timeout" } else { "compile_error" };
    let mut msg = format!("Failure class: {class}.\n\nThe previous program failed to compile.\n\n");

    let errors: Vec<String> = report.errors().map(|d| d.to_string()).collect();
    let (lines, label) =
        if errors.is_empty() { (report.unparsed.clone(), "Toolchain output") } else { (errors, "Compiler errors") };
    let (quoted, omitted) = take_within_budget(&lines, cfg.max_error_lines, cfg.byte_budget);
    if !quoted.is_empty() {
        msg.push_str(label);
        msg.push_str(":\n");
        for l in &quoted {
            msg.push_str(l);
            msg.push('\n');
        }
        if omitted > 0 {
            msg.push_str(&format!("({omitted} more lines omitted)\n"));
        }
        msg.push('\n');
    }

    if !report.hallucinated_api_candidates.is_empty() {
        msg.push_str(&format!(
            "The following identifiers do not exist in the TFHE library API: {}. \
             Use only functions and types documented in <{}>.\n\n",
            report.hallucinated_api_candidates.join(", "),
            cfg.api_header
        ));
    }
    if !report.missing_include_candidates.is_empty() {
        msg.push_str(&format!(
            "These TFHE identifiers were used without a declaration in scope: {}. \
             Include <{}>.\n\n",
            report.missing_include_candidates.join(", "),
            cfg.api_header
        ));
    }
    msg.push_str(FORMAT_REQUIREMENT);
    msg
}

fn functional_prompt(report: &FuncReport) -> String {
    let mut msg = String::from("Failure class: functional_failure.\n\n");
    if report.timed_out {
        msg.push_str("The program compiled but the functional test timed out.\n");
    } else {
        msg.push_str(&format!(
            "The program compiled but passed {}/{} functional test cases.\n",
            report.passed_cases, report.total_cases
        ));
        let failed = report.failed_cases();
        if !failed.is_empty() {
            let ids: Vec<String> = failed.iter().map(u32::to_string).collect();
            msg.push_str(&format!("Failing cases: {}.\n", ids.join(", ")));
        }
    }
    msg.push('\n');
    msg.push_str(FORMAT_REQUIREMENT);
    msg
}

/// Leading lines that fit both limits, plus the count left out.
fn take_within_budget(lines: &[String], max_lines: usize, byte_budget: usize) -> (Vec<&str>, usize) {
    let mut used = 0;
    let mut taken = Vec::new();
    for l in lines.iter().take(max_lines) {
        let cost = l.len() + 1;
        if used + cost > byte_budget {
            break;
        }
        used += cost;
        taken.push(l.as_str());
    }
    let omitted = lines.len() - taken.len();
    (taken, omitted)
}
