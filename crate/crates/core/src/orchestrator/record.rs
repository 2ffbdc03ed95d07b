use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::extraction::ExtractionResult;
use crate::gateway::Usage;
use crate::toolchain::{CompileReport, FuncReport, LinkReport};

/// Bumped whenever the serialized shape of `RunRecord` changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Baseline,
    Rag,
    Fewshot,
    RagFewshot,
}

impl MethodName {
    pub const ALL: [MethodName; 4] =
        [MethodName::Baseline, MethodName::Rag, MethodName::Fewshot, MethodName::RagFewshot];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Baseline => "baseline",
            MethodName::Rag => "rag",
            MethodName::Fewshot => "fewshot",
            MethodName::RagFewshot => "rag_fewshot",
        }
    }

    pub fn uses_rag(self) -> bool {
        matches!(self, MethodName::Rag | MethodName::RagFewshot)
    }

    pub fn uses_fewshot(self) -> bool {
        matches!(self, MethodName::Fewshot | MethodName::RagFewshot)
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected baseline, rag, fewshot or rag_fewshot)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub index: u32,
    /// The user message this iteration answered.
    pub prompt_message: String,
    pub response: String,
    pub usage: Usage,
    pub extraction: ExtractionResult,
    pub repetition_flag: bool,
    /// Present iff extraction produced code.
    pub compile_report: Option<CompileReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    CompileSuccess,
    IterationBudgetExhausted,
    /// Infrastructure failure; the record is kept but not aggregated.
    Errored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub task_id: String,
    pub model_id: String,
    pub method: MethodName,
    /// 0-based.
    pub repeat_index: u32,
    /// Repeats requested for this cell.
    pub repeat_total: u32,
    pub iterations: Vec<IterationRecord>,
    pub terminal_status: TerminalStatus,
    /// Present iff the final code compiled, linked and ran.
    pub func_report: Option<FuncReport>,
    /// Present iff the compiled code failed to link against the driver.
    pub link_report: Option<LinkReport>,
    pub final_code: Option<String>,
    pub crystal_bleu: f64,
    pub totals: Usage,
    /// Chunk ids and scores retrieved for the first prompt.
    pub retrieved: Vec<(u64, f64)>,
    pub error: Option<String>,
    pub started_at: DateTime<Utc>,
    pub wall_time_ms: u64,
    pub config_snapshot: serde_json::Value,
}

impl RunRecord {
    pub fn is_errored(&self) -> bool {
        self.terminal_status == TerminalStatus::Errored
    }

    pub fn compiled(&self) -> bool {
        self.terminal_status == TerminalStatus::CompileSuccess
    }

    pub fn func_passed(&self) -> bool {
        self.func_report.as_ref().is_some_and(FuncReport::is_pass)
    }

    /// Copy with every clock-dependent field reset, for replay comparison.
    pub fn without_timing(&self) -> RunRecord {
        let mut r = self.clone();
        r.started_at = DateTime::<Utc>::UNIX_EPOCH;
        r.wall_time_ms = 0;
        for it in &mut r.iterations {
            if let Some(c) = &mut it.compile_report {
                c.duration_ms = 0;
            }
        }
        r
    }

    pub fn cell_label(&self) -> String {
        format!("{}/{}/{}", self.task_id, self.model_id, self.method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in MethodName::ALL {
            assert_eq!(m.as_str().parse::<MethodName>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("rag+fewshot".parse::<MethodName>().is_err());
    }

    #[test]
    fn method_flags() {
        assert!(!MethodName::Baseline.uses_rag() && !MethodName::Baseline.uses_fewshot());
        assert!(MethodName::Rag.uses_rag() && !MethodName::Rag.uses_fewshot());
        assert!(!MethodName::Fewshot.uses_rag() && MethodName::Fewshot.uses_fewshot());
        assert!(MethodName::RagFewshot.uses_rag() && MethodName::RagFewshot.uses_fewshot());
    }
}
