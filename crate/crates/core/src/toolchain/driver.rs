//! The line protocol functional drivers print on stdout:
//!
//! ```text
//! CASE 0 PASS
//! CASE 1 FAIL
//! TOTAL 1/2
//! ```
//!
//! Exit status is 0 iff every case passed.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriverLine {
    Case { index: u32, passed: bool },
    Total { passed: u32, total: u32 },
}

impl DriverLine {
    pub fn render(&self) -> String {
        match *self {
            DriverLine::Case { index, passed } => {
                format!("CASE {index} {}", if passed { "PASS" } else { "FAIL" })
            }
            DriverLine::Total { passed, total } => format!("TOTAL {passed}/{total}"),
        }
    }
}

static CASE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^CASE (\d+) (PASS|FAIL)$").unwrap());
static TOTAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^TOTAL (\d+)/(\d+)$").unwrap());

pub fn parse_line(line: &str) -> Option<DriverLine> {
    let line = line.trim_end_matches('\r');
    if let Some(c) = CASE.captures(line) {
        return Some(DriverLine::Case { index: c[1].parse().ok()?, passed: &c[2] == "PASS" });
    }
    TOTAL.captures(line).and_then(|c| Some(DriverLine::Total { passed: c[1].parse().ok()?, total: c[2].parse().ok()? }))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DriverOutput {
    /// First verdict per case index, in order of appearance.
    pub cases: Vec<(u32, bool)>,
    pub total: Option<(u32, u32)>,
}

pub fn parse_output(stdout: &str) -> DriverOutput {
    let mut out = DriverOutput::default();
    for line in stdout.lines() {
        match parse_line(line) {
            Some(DriverLine::Case { index, passed }) => {
                if !out.cases.iter().any(|&(i, _)| i == index) {
                    out.cases.push((index, passed));
                }
            }
            Some(DriverLine::Total { passed, total }) => out.total = Some((passed, total)),
            None => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_protocol() {
        let out = parse_output("noise\nCASE 0 PASS\nCASE 1 FAIL\nCASE 2 FAIL\nCASE 3 PASS\nTOTAL 2/4\n");
        assert_eq!(out.cases, vec![(0, true), (1, false), (2, false), (3, true)]);
        assert_eq!(out.total, Some((2, 4)));
    }

    #[test]
    fn strict_format() {
        assert_eq!(parse_line("CASE 1 pass"), None);
        assert_eq!(parse_line(" CASE 1 PASS"), None);
        assert_eq!(parse_line("TOTAL 4 / 4"), None);
        assert_eq!(parse_line("CASE 3 PASS\r"), Some(DriverLine::Case { index: 3, passed: true }));
    }

    #[test]
    fn render_matches_parse() {
        for l in [DriverLine::Case { index: 7, passed: false }, DriverLine::Total { passed: 4, total: 4 }] {
            assert_eq!(parse_line(&l.render()), Some(l));
        }
        assert_eq!(DriverLine::Total { passed: 2, total: 4 }.render(), "TOTAL 2/4");
    }

    #[test]
    fn duplicate_case_keeps_first() {
        let out = parse_output("CASE 0 FAIL\nCASE 0 PASS\n");
        assert_eq!(out.cases, vec![(0, false)]);
    }
}
