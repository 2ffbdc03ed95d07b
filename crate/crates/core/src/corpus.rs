//! Task manifests and the TFHE API surface generated code is compiled
//! against.
//!
//! A corpus root holds one subdirectory per task, each with a
//! `task.manifest` file:
//!
//! ```text
//! # comments start with '#'
//! task_id = and_gate
//! title = AND gate
//! expected_cases = 4
//! reference_plaintext = reference.c
//! ground_truth_tfhe = ground_truth.c
//! driver = driver.c
//! description = <<END
//! Implement a homomorphic AND gate ...
//! END
//! ```
//!
//! Paths are relative to the manifest's directory. Values can span lines
//! with the `<<TAG` ... `TAG` form.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::normalize;

pub const MANIFEST_FILE: &str = "task.manifest";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Syntax { path: PathBuf, line: usize, message: String },
    #[error("task `{task_id}` ({path}): {message}")]
    Invalid { task_id: String, path: PathBuf, message: String },
    #[error("no task manifests found under {0}")]
    Empty(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub task_id: String,
    pub title: String,
    pub description: String,
    pub reference_plaintext: PathBuf,
    pub ground_truth_tfhe: PathBuf,
    pub driver: PathBuf,
    pub expected_cases: u32,
}

impl TaskManifest {
    pub fn reference_code(&self) -> Result<String, CorpusError> {
        read(&self.reference_plaintext)
    }

    pub fn ground_truth_code(&self) -> Result<String, CorpusError> {
        read(&self.ground_truth_tfhe)
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_owned(), source })
}

/// Parse the flat `key = value` manifest format.
pub fn parse_manifest_fields(text: &str, path: &Path) -> Result<BTreeMap<String, String>, CorpusError> {
    let mut fields = BTreeMap::new();
    let mut lines = text.lines().enumerate();
    while let Some((idx, raw)) = lines.next() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let syntax = |message: String| CorpusError::Syntax { path: path.to_owned(), line: idx + 1, message };
        let (key, value) =
            line.split_once('=').ok_or_else(|| syntax(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(syntax(format!("bad key `{key}`")));
        }
        let value = value.trim();
        let value = if let Some(tag) = value.strip_prefix("<<") {
            let tag = tag.trim();
            let mut body = Vec::new();
            loop {
                match lines.next() {
                    Some((_, l)) if l.trim() == tag => break,
                    Some((_, l)) => body.push(l),
                    None => return Err(syntax(format!("unterminated `<<{tag}` block"))),
                }
            }
            body.join("\n")
        } else {
            value.to_owned()
        };
        if fields.insert(key.to_owned(), value).is_some() {
            return Err(syntax(format!("duplicate key `{key}`")));
        }
    }
    Ok(fields)
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<TaskManifest, CorpusError> {
    let mut fields = parse_manifest_fields(text, path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let task_id = fields.remove("task_id").unwrap_or_default();
    let invalid = |message: String| CorpusError::Invalid {
        task_id: if task_id.is_empty() { "?".into() } else { task_id.clone() },
        path: path.to_owned(),
        message,
    };
    if task_id.is_empty() || !task_id.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
        return Err(invalid("task_id must be a non-empty lower_snake identifier".into()));
    }
    let mut take = |key: &str| fields.remove(key).ok_or_else(|| invalid(format!("missing field `{key}`")));
    let title = take("title")?;
    let description = take("description")?;
    let reference_plaintext = dir.join(take("reference_plaintext")?);
    let ground_truth_tfhe = dir.join(take("ground_truth_tfhe")?);
    let driver = dir.join(take("driver")?);
    let expected_cases = take("expected_cases")?;
    let expected_cases: u32 =
        expected_cases.parse().map_err(|_| invalid(format!("expected_cases `{expected_cases}` is not an integer")))?;
    if let Some(extra) = fields.keys().next() {
        return Err(invalid(format!("unknown field `{extra}`")));
    }
    Ok(TaskManifest { task_id, title, description, reference_plaintext, ground_truth_tfhe, driver, expected_cases })
}

/// Structural checks: referenced files exist and are non-empty, case counts
/// match the truth-table size of the known gate tasks.
pub fn check_manifest(task: &TaskManifest, manifest_path: &Path) -> Result<(), CorpusError> {
    let invalid = |message: String| CorpusError::Invalid {
        task_id: task.task_id.clone(),
        path: manifest_path.to_owned(),
        message,
    };
    if task.description.trim().is_empty() {
        return Err(invalid("description is empty".into()));
    }
    for (field, p) in [
        ("reference_plaintext", &task.reference_plaintext),
        ("ground_truth_tfhe", &task.ground_truth_tfhe),
        ("driver", &task.driver),
    ] {
        match fs::metadata(p) {
            Ok(m) if m.is_file() && m.len() > 0 => {}
            Ok(_) => return Err(invalid(format!("{field} {} is empty or not a file", p.display()))),
            Err(_) => return Err(invalid(format!("{field} {} does not exist", p.display()))),
        }
    }
    if task.expected_cases == 0 {
        return Err(invalid("expected_cases must be at least 1".into()));
    }
    let required = match task.task_id.as_str() {
        "and_gate" | "or_gate" => Some(4),
        "not_gate" => Some(2),
        _ => None,
    };
    if let Some(n) = required {
        if task.expected_cases != n {
            return Err(invalid(format!(
                "expected_cases is {} but the full truth table has {n} rows",
                task.expected_cases
            )));
        }
    }
    Ok(())
}

/// Load and check every `*/task.manifest` under `root`, sorted by task id.
pub fn load_corpus(root: &Path) -> Result<Vec<TaskManifest>, CorpusError> {
    let entries = fs::read_dir(root).map_err(|source| CorpusError::Io { path: root.to_owned(), source })?;
    let mut tasks = Vec::new();
    let mut seen = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io { path: root.to_owned(), source })?;
        let manifest_path = entry.path().join(MANIFEST_FILE);
        if !manifest_path.is_file() {
            continue;
        }
        let text = read(&manifest_path)?;
        let task = parse_manifest(&text, &manifest_path)?;
        check_manifest(&task, &manifest_path)?;
        if let Some(prev) = seen.insert(task.task_id.clone(), manifest_path.clone()) {
            return Err(CorpusError::Invalid {
                task_id: task.task_id,
                path: manifest_path,
                message: format!("duplicate task id, also defined in {}", Path::display(&prev)),
            });
        }
        tasks.push(task);
    }
    if tasks.is_empty() {
        return Err(CorpusError::Empty(root.to_owned()));
    }
    tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok(tasks)
}

/// Identifiers exported by the TFHE header generated code compiles against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubApiSurface {
    pub function_names: BTreeSet<String>,
    pub type_names: BTreeSet<String>,
    /// Include path as written in generated code, e.g. `tfhe/tfhe.h`.
    pub header: String,
}

const DEFAULT_FUNCTIONS: &[&str] = &[
    "bootsAND",
    "bootsCONSTANT",
    "bootsCOPY",
    "bootsMUX",
    "bootsNOT",
    "bootsOR",
    "bootsSymDecrypt",
    "bootsSymEncrypt",
    "bootsXOR",
    "delete_gate_bootstrapping_ciphertext",
    "delete_gate_bootstrapping_ciphertext_array",
    "delete_gate_bootstrapping_parameters",
    "delete_gate_bootstrapping_secret_keyset",
    "new_default_gate_bootstrapping_parameters",
    "new_gate_bootstrapping_ciphertext",
    "new_gate_bootstrapping_ciphertext_array",
    "new_random_gate_bootstrapping_secret_keyset",
    "tfhe_random_generator_setSeed",
];

const DEFAULT_TYPES: &[&str] = &[
    "LweSample",
    "TFheGateBootstrappingCloudKeySet",
    "TFheGateBootstrappingParameterSet",
    "TFheGateBootstrappingSecretKeySet",
];

impl StubApiSurface {
    /// The plaintext stub's surface: gate operations, key generation,
    /// single-bit encrypt/decrypt and ciphertext allocation.
    pub fn stub_default() -> Self {
        StubApiSurface {
            function_names: DEFAULT_FUNCTIONS.iter().map(|s| s.to_string()).collect(),
            type_names: DEFAULT_TYPES.iter().map(|s| s.to_string()).collect(),
            header: "tfhe/tfhe.h".into(),
        }
    }

    pub fn from_header_file(path: &Path, header: impl Into<String>) -> Result<Self, CorpusError> {
        let text = read(path)?;
        let (function_names, type_names) = scan_header(&text);
        Ok(StubApiSurface { function_names, type_names, header: header.into() })
    }

    pub fn contains(&self, ident: &str) -> bool {
        self.function_names.contains(ident) || self.type_names.contains(ident)
    }
}

/// Collect declared function names and typedef/struct names from a C header.
pub fn scan_header(text: &str) -> (BTreeSet<String>, BTreeSet<String>) {
    let without_pp: String = text.lines().filter(|l| !l.trim_start().starts_with('#')).collect::<Vec<_>>().join("\n");
    let flat = normalize(&without_pp);
    let mut functions = BTreeSet::new();
    let mut types = BTreeSet::new();
    for stmt in flat.split(';') {
        let stmt = stmt.trim_start_matches(|c: char| c == '}' || c.is_whitespace());
        let idents = identifiers(stmt);
        if stmt.starts_with("typedef") {
            if let Some(pos) = stmt.find("(*") {
                if let Some((name, _)) = identifiers(&stmt[pos + 2..]).first() {
                    types.insert(name.to_string());
                }
            } else if let Some((name, _)) = idents.last() {
                types.insert(name.to_string());
            }
            add_struct_tags(stmt, &mut types);
            continue;
        }
        add_struct_tags(stmt, &mut types);
        if let Some(paren) = stmt.find('(') {
            if let Some((name, _)) = identifiers(&stmt[..paren]).last() {
                if !is_keyword(name) {
                    functions.insert(name.to_string());
                }
            }
        }
    }
    (functions, types)
}

fn add_struct_tags(stmt: &str, types: &mut BTreeSet<String>) {
    let idents = identifiers(stmt);
    for w in idents.windows(2) {
        if matches!(w[0].0, "struct" | "union" | "enum") {
            types.insert(w[1].0.to_string());
        }
    }
}

fn identifiers(s: &str) -> Vec<(&str, usize)> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_alphabetic() || bytes[i] == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((&s[start..i], start));
        } else {
            i += 1;
        }
    }
    out
}

fn is_keyword(w: &str) -> bool {
    matches!(w, "if" | "while" | "for" | "switch" | "return" | "sizeof" | "void" | "int" | "const" | "extern")
}
