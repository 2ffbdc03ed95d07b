use serde::{Deserialize, Serialize};

use crate::extraction::literal_end;

/// C-family tokens with comments and whitespace dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined tokens; lexing the result gives the same sequence back.
    pub fn detokenize(&self) -> String {
        self.tokens.join(" ")
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence { tokens: iter.into_iter().map(Into::into).collect() }
    }
}

// Longest first within each length class.
const PUNCTUATORS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=",
    "%=", "&=", "^=", "|=", "##", "::",
];

/// Token classes: identifiers/keywords, preprocessing numbers, string and
/// character literals (unterminated ones run to end of input), multi-char
/// punctuators, and single characters for everything else.
pub fn lex(code: &str) -> TokenSequence {
    let bytes = code.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
        } else if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
            i = code[i..].find('\n').map_or(bytes.len(), |n| i + n);
        } else if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i = code[i + 2..].find("*/").map_or(bytes.len(), |n| i + 2 + n + 2);
        } else if b.is_ascii_alphabetic() || b == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(code[start..i].to_owned());
        } else if b.is_ascii_digit() || (b == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            i += 1;
            while i < bytes.len() {
                let c = bytes[i];
                let exponent_sign = matches!(c, b'+' | b'-') && matches!(bytes[i - 1], b'e' | b'E' | b'p' | b'P');
                if !(exponent_sign || c.is_ascii_alphanumeric() || c == b'_' || c == b'.') {
                    break;
                }
                i += 1;
            }
            tokens.push(code[start..i].to_owned());
        } else if b == b'"' || b == b'\'' {
            let end = literal_end(bytes, i);
            tokens.push(code[i..end].to_owned());
            i = end;
        } else if let Some(p) = PUNCTUATORS.iter().find(|p| code[i..].starts_with(**p)) {
            tokens.push((*p).to_owned());
            i += p.len();
        } else {
            let len = code[i..].chars().next().map_or(1, char::len_utf8);
            tokens.push(code[i..i + len].to_owned());
            i += len;
        }
    }
    TokenSequence { tokens }
}
