use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::StubApiSurface;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Note,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Note => "note",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    pub line: u32,
    pub column: Option<u32>,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.column {
            Some(c) => write!(f, "{}:{}:{}: {}: {}", self.file, self.line, c, self.severity, self.message),
            None => write!(f, "{}:{}: {}: {}", self.file, self.line, self.severity, self.message),
        }
    }
}

/// Toolchain output split into recognised diagnostics and everything else
/// (source excerpts, carets, "In function" headers, linker chatter).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedOutput {
    pub diagnostics: Vec<Diagnostic>,
    pub unparsed: Vec<String>,
}

static DIAG_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(?P<file>[^:\s][^:]*):(?P<line>\d+):(?:(?P<col>\d+):)?\s*(?P<sev>fatal error|error|warning|note):\s*(?P<msg>.*?)\s*$",
    )
    .unwrap()
});

/// Parse `file:line[:col]: severity: message` lines. Blank lines are the
/// only ones dropped.
pub fn parse_diagnostics(output: &str) -> ParsedOutput {
    let mut parsed = ParsedOutput::default();
    for line in output.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Some(d) => parsed.diagnostics.push(d),
            None => parsed.unparsed.push(line.to_owned()),
        }
    }
    parsed
}

fn parse_line(line: &str) -> Option<Diagnostic> {
    let caps = DIAG_LINE.captures(line)?;
    let line_no: u32 = caps["line"].parse().ok().filter(|&n| n > 0)?;
    let column = caps.name("col").and_then(|c| c.as_str().parse().ok()).filter(|&c: &u32| c > 0);
    let severity = match &caps["sev"] {
        "warning" => Severity::Warning,
        "note" => Severity::Note,
        _ => Severity::Error,
    };
    let message = caps["msg"].to_owned();
    if severity == Severity::Error && message.is_empty() {
        return None;
    }
    Some(Diagnostic { file: caps["file"].to_owned(), line: line_no, column, severity, message })
}

const Q_OPEN: &str = r#"['‘`"]"#;
const Q_CLOSE: &str = r#"['’"]"#;

static UNDECLARED: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        r"implicit declaration of function {o}(?P<id>\w+){c}",
        r"call to undeclared (?:library )?function {o}(?P<id>\w+){c}",
        r"use of undeclared identifier {o}(?P<id>\w+){c}",
        r"^{o}(?P<id>\w+){c} undeclared",
        r"unknown type name {o}(?P<id>\w+){c}",
        r"{o}(?P<id>\w+){c} was not declared in this scope",
    ]
    .iter()
    .map(|p| Regex::new(&p.replace("{o}", Q_OPEN).replace("{c}", Q_CLOSE)).unwrap())
    .collect()
});

/// The identifier an undeclared/implicit-declaration/unknown-type
/// diagnostic complains about.
pub fn undeclared_identifier(diag: &Diagnostic) -> Option<String> {
    UNDECLARED.iter().find_map(|re| re.captures(&diag.message)).map(|c| c["id"].to_owned())
}

/// `boots*` prefix, or `tfhe`/`lwe` anywhere, ignoring case.
pub fn is_tfhe_patterned(ident: &str) -> bool {
    let lower = ident.to_ascii_lowercase();
    lower.starts_with("boots") || lower.contains("tfhe") || lower.contains("lwe")
}

/// An undeclared TFHE-looking identifier that the API does not export.
///
/// Names the API does export are a missing include, not a hallucination;
/// see [`missing_include`].
pub fn classify_hallucination(diag: &Diagnostic, api: &StubApiSurface) -> Option<String> {
    let ident = undeclared_identifier(diag)?;
    (is_tfhe_patterned(&ident) && !api.contains(&ident)).then_some(ident)
}

/// An undeclared identifier that the API does export.
pub fn missing_include(diag: &Diagnostic, api: &StubApiSurface) -> Option<String> {
    let ident = undeclared_identifier(diag)?;
    api.contains(&ident).then_some(ident)
}
