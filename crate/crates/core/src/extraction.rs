//! Pulling code out of model responses, and the two generation-phase error
//! checks: wrong format (nothing extractable) and repetition (a previously
//! failing program regenerated unchanged).

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const FENCE: &str = "```";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "code", rename_all = "snake_case")]
pub enum Outcome {
    Code(String),
    WrongFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub outcome: Outcome,
    pub block_count: usize,
}

impl ExtractionResult {
    pub fn code(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Code(c) => Some(c),
            Outcome::WrongFormat => None,
        }
    }

    pub fn is_wrong_format(&self) -> bool {
        matches!(self.outcome, Outcome::WrongFormat)
    }
}

/// Bodies of every complete fenced block with a non-blank body, in order.
///
/// Fences are matched pairwise wherever they occur. An opening fence may
/// carry a language tag on the rest of its line.
pub fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find(FENCE) {
        let after_open = &rest[open + FENCE.len()..];
        let Some(close) = after_open.find(FENCE) else {
            break;
        };
        let body = strip_language_tag(&after_open[..close]);
        if !body.trim().is_empty() {
            blocks.push(tidy_body(body));
        }
        rest = &after_open[close + FENCE.len()..];
    }
    blocks
}

/// Return the body of the last fenced block; text before the first fence
/// never changes the result.
pub fn extract_code(response: &str) -> ExtractionResult {
    let mut blocks = fenced_blocks(response);
    let block_count = blocks.len();
    match blocks.pop() {
        Some(body) => ExtractionResult { outcome: Outcome::Code(body), block_count },
        None => ExtractionResult { outcome: Outcome::WrongFormat, block_count: 0 },
    }
}

fn strip_language_tag(inner: &str) -> &str {
    match inner.find('\n') {
        Some(nl) => {
            let first = inner[..nl].trim();
            let is_tag = first.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '+' | '#' | '.' | '-'));
            if is_tag {
                &inner[nl + 1..]
            } else {
                inner
            }
        }
        None => inner,
    }
}

fn tidy_body(body: &str) -> String {
    let trimmed_end = body.trim_end();
    let start = trimmed_end.char_indices().find(|&(_, c)| c != '\n' && c != '\r').map(|(i, _)| i).unwrap_or(0);
    trimmed_end[start..].to_owned()
}

/// Strip comments, collapse whitespace runs to one space, trim.
///
/// String and character literals are copied verbatim. An unterminated block
/// comment or literal runs to the end of the input. A removed comment
/// leaves a space behind so adjacent tokens never fuse.
pub fn normalize(code: &str) -> String {
    let bytes = code.as_bytes();
    let mut out = String::with_capacity(code.len());
    let mut pending_space = false;
    let mut i = 0;

    let flush = |out: &mut String, pending: &mut bool| {
        if *pending && !out.is_empty() {
            out.push(' ');
        }
        *pending = false;
    };

    while i < bytes.len() {
        let b = bytes[i];
        if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
            i = code[i..].find('\n').map_or(bytes.len(), |n| i + n);
            pending_space = true;
        } else if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i = code[i + 2..].find("*/").map_or(bytes.len(), |n| i + 2 + n + 2);
            pending_space = true;
        } else if b == b'"' || b == b'\'' {
            let end = literal_end(bytes, i);
            flush(&mut out, &mut pending_space);
            out.push_str(&code[i..end]);
            i = end;
        } else if b.is_ascii_whitespace() {
            pending_space = true;
            i += 1;
        } else {
            flush(&mut out, &mut pending_space);
            let ch_len = code[i..].chars().next().map_or(1, char::len_utf8);
            out.push_str(&code[i..i + ch_len]);
            i += ch_len;
        }
    }
    out
}

/// End (exclusive) of the literal opened at `start`, honouring backslash
/// escapes; runs to end of input when unterminated.
pub(crate) fn literal_end(bytes: &[u8], start: usize) -> usize {
    let quote = bytes[start];
    let mut j = start + 1;
    while j < bytes.len() {
        match bytes[j] {
            b'\\' => j += 2,
            c if c == quote => return j + 1,
            _ => j += 1,
        }
    }
    bytes.len()
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fingerprint(#[serde(with = "hex32")] [u8; 32]);

impl Fingerprint {
    /// SHA-256 of the normalized code.
    pub fn of(code: &str) -> Fingerprint {
        let digest = Sha256::digest(normalize(code).as_bytes());
        let mut out = [0u8; 32];
        out.copy_from_slice(&digest);
        Fingerprint(out)
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({self})")
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

mod hex32 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        s.serialize_str(&hex)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 64 {
            return Err(D::Error::custom("fingerprint must be 64 hex digits"));
        }
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(D::Error::custom)?;
        }
        Ok(out)
    }
}

/// `history` holds fingerprints of earlier iterations that failed to
/// compile. Exact match only.
pub fn detect_repetition(history: &[Fingerprint], candidate: &str) -> bool {
    let fp = Fingerprint::of(candidate);
    history.contains(&fp)
}
