//! Pulls executable code out of free-form model responses.
//!
//! Precedence, first match wins:
//! 1. the first fence tagged with the language hint,
//! 2. the longest fence of any tag (earliest on ties),
//! 3. the largest block of at least three code-like lines,
//! 4. the whole trimmed response,
//! 5. nothing, for blank input.
//!
//! The result is always a contiguous slice of the input with fence lines
//! excluded and trailing whitespace trimmed.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use regex::Regex;

use crate::model::ExtractionMethod;

/// Minimum number of code-like lines for the heuristic to fire.
pub const MIN_HEURISTIC_LINES: usize = 3;

/// The pattern file shipped with the crate.
pub const BUILTIN_PATTERNS: &str = include_str!("../data/extraction_patterns");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionResult {
    pub code: String,
    pub method: ExtractionMethod,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("line {line}: entry outside of a [language] section")]
    NoSection { line: usize },
    #[error("line {line}: unrecognized entry {text:?}")]
    UnknownEntry { line: usize, text: String },
    #[error("line {line}: bad regex: {message}")]
    BadRegex { line: usize, message: String },
}

/// Patterns for one language.
#[derive(Debug, Clone, Default)]
pub struct LanguagePatterns {
    pub code_lines: Vec<Regex>,
    pub failure_markers: Vec<String>,
}

impl LanguagePatterns {
    pub fn is_code_line(&self, line: &str) -> bool {
        self.code_lines.iter().any(|re| re.is_match(line))
    }

    /// True if `stderr` carries one of the assertion-failure markers.
    pub fn indicates_test_failure(&self, stderr: &str) -> bool {
        self.failure_markers.iter().any(|m| stderr.contains(m.as_str()))
    }
}

/// Parsed `extraction_patterns` file.
#[derive(Debug, Clone, Default)]
pub struct PatternFile {
    languages: BTreeMap<String, LanguagePatterns>,
}

impl PatternFile {
    pub fn parse(text: &str) -> Result<Self, PatternError> {
        let mut languages: BTreeMap<String, LanguagePatterns> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_ascii_lowercase();
                languages.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let Some(lang) = current.as_ref() else {
                return Err(PatternError::NoSection { line: line_no });
            };
            let entry = languages.get_mut(lang).expect("section inserted on header");
            if let Some(pattern) = line.strip_prefix("code:") {
                let re = Regex::new(pattern.trim()).map_err(|e| PatternError::BadRegex {
                    line: line_no,
                    message: e.to_string(),
                })?;
                entry.code_lines.push(re);
            } else if let Some(marker) = line.strip_prefix("fail:") {
                entry.failure_markers.push(marker.trim().to_string());
            } else {
                return Err(PatternError::UnknownEntry {
                    line: line_no,
                    text: line.to_string(),
                });
            }
        }
        Ok(PatternFile { languages })
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_PATTERNS).expect("builtin pattern file parses")
    }

    /// Patterns for `language`, case-insensitive; empty if unknown.
    pub fn language(&self, language: &str) -> LanguagePatterns {
        self.languages
            .get(&language.to_ascii_lowercase())
            .cloned()
            .unwrap_or_default()
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.languages.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy)]
struct Line<'a> {
    start: usize,
    /// Line content without the terminating `\n` (and `\r`).
    text: &'a str,
}

fn split_lines(s: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    for piece in s.split_inclusive('\n') {
        let text = piece.strip_suffix('\n').unwrap_or(piece);
        let text = text.strip_suffix('\r').unwrap_or(text);
        out.push(Line { start, text });
        start += piece.len();
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Fence<'a> {
    info: &'a str,
    body: &'a str,
    line_count: usize,
}

fn is_closing_fence(line: &str) -> bool {
    let t = line.trim();
    t.len() >= 3 && t.bytes().all(|b| b == b'`')
}

fn parse_fences(raw: &str) -> Vec<Fence<'_>> {
    let lines = split_lines(raw);
    let mut fences = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let t = lines[i].text.trim_start();
        let Some(rest) = t.strip_prefix("```") else {
            i += 1;
            continue;
        };
        let info = rest.trim_start_matches('`').trim();
        // inline spans such as ```x``` are not fences
        if info.contains("```") {
            i += 1;
            continue;
        }
        let body_start = lines.get(i + 1).map_or(raw.len(), |l| l.start);
        let mut j = i + 1;
        while j < lines.len() && !is_closing_fence(lines[j].text) {
            j += 1;
        }
        // an unclosed fence runs to the end of the response
        let body_end = if j < lines.len() {
            lines[j].start.saturating_sub(1).max(body_start)
        } else {
            raw.len()
        };
        let body = &raw[body_start..body_end];
        let body = body.strip_suffix('\r').unwrap_or(body);
        fences.push(Fence {
            info,
            body,
            line_count: j - (i + 1),
        });
        i = j + 1;
    }
    fences
}

fn info_tag(info: &str) -> &str {
    info.split_whitespace().next().unwrap_or("")
}

fn heuristic_block<'a>(raw: &'a str, patterns: &LanguagePatterns) -> Option<&'a str> {
    let lines = split_lines(raw);
    let mut best: Option<(usize, usize, usize)> = None; // (code lines, first, last)
    let mut i = 0;
    while i < lines.len() {
        if !patterns.is_code_line(lines[i].text) {
            i += 1;
            continue;
        }
        let first = i;
        let mut last = i;
        let mut code = 0;
        while i < lines.len() {
            let text = lines[i].text;
            if text.trim().is_empty() {
                i += 1;
                continue;
            }
            if !patterns.is_code_line(text) {
                break;
            }
            code += 1;
            last = i;
            i += 1;
        }
        if code >= MIN_HEURISTIC_LINES && best.is_none_or(|(c, _, _)| code > c) {
            best = Some((code, first, last));
        }
    }
    best.map(|(_, first, last)| {
        let start = lines[first].start;
        let end = lines[last].start + lines[last].text.len();
        &raw[start..end]
    })
}

fn result(code: &str, method: ExtractionMethod) -> ExtractionResult {
    ExtractionResult {
        code: code.trim_end().to_string(),
        method,
    }
}

/// Extracts code from `raw_response`. Total: every input yields exactly one method.
pub fn extract_code(
    raw_response: &str,
    language_tag_hint: &str,
    patterns: &LanguagePatterns,
) -> ExtractionResult {
    if raw_response.trim().is_empty() {
        return result("", ExtractionMethod::Empty);
    }
    let fences: Vec<Fence<'_>> = parse_fences(raw_response)
        .into_iter()
        .filter(|f| !f.body.trim().is_empty())
        .collect();

    let hint = language_tag_hint.trim();
    if !hint.is_empty() {
        if let Some(f) = fences.iter().find(|f| info_tag(f.info).eq_ignore_ascii_case(hint)) {
            return result(f.body, ExtractionMethod::FencedTagged);
        }
    }

    let mut longest: Option<&Fence<'_>> = None;
    for f in &fences {
        if longest.is_none_or(|l| f.line_count > l.line_count) {
            longest = Some(f);
        }
    }
    if let Some(f) = longest {
        return result(f.body, ExtractionMethod::FencedUntagged);
    }

    if let Some(block) = heuristic_block(raw_response, patterns) {
        return result(block, ExtractionMethod::HeuristicLines);
    }

    result(raw_response.trim(), ExtractionMethod::WholeResponse)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn py() -> LanguagePatterns {
        PatternFile::builtin().language("python")
    }

    #[test]
    fn builtin_file_has_python() {
        let pf = PatternFile::builtin();
        assert!(pf.languages().any(|l| l == "python"));
        let p = pf.language("Python");
        assert!(!p.code_lines.is_empty());
        assert!(p.indicates_test_failure("Traceback...\nAssertionError\n"));
        assert!(!p.indicates_test_failure("NameError: x"));
    }

    #[test]
    fn single_tagged_fence() {
        let r = extract_code("Here you go:\n```python\nprint(1)\n```", "python", &py());
        assert_eq!(r, result("print(1)", ExtractionMethod::FencedTagged));
    }

    #[test]
    fn tag_match_is_case_insensitive_and_uses_first_word() {
        let r = extract_code("```Python title=x\nprint(2)\n```\n", "python", &py());
        assert_eq!(r, result("print(2)", ExtractionMethod::FencedTagged));
    }

    #[test]
    fn longest_fence_wins_over_wrong_tag() {
        let body: Vec<String> = (0..10).map(|i| alloc::format!("x{i} = {i}")).collect();
        let raw = alloc::format!(
            "First:\n```bash\necho a\necho b\n```\nThen:\n```\n{}\n```\n",
            body.join("\n")
        );
        let r = extract_code(&raw, "python", &py());
        assert_eq!(r.method, ExtractionMethod::FencedUntagged);
        assert_eq!(r.code, body.join("\n"));
    }

    #[test]
    fn equal_length_fences_pick_earliest() {
        let raw = "```sh\na\nb\n```\n```text\nc\nd\n```";
        let r = extract_code(raw, "python", &py());
        assert_eq!(r, result("a\nb", ExtractionMethod::FencedUntagged));
    }

    #[test]
    fn only_first_tagged_fence_is_taken() {
        let raw = "```python\ndef a():\n    pass\n```\n```python\ndef b():\n    pass\n    pass\n```";
        let r = extract_code(raw, "python", &py());
        assert_eq!(r, result("def a():\n    pass", ExtractionMethod::FencedTagged));
    }

    #[test]
    fn unclosed_fence_runs_to_end() {
        let r = extract_code("```python\nprint(1)\nprint(2)\n", "python", &py());
        assert_eq!(r, result("print(1)\nprint(2)", ExtractionMethod::FencedTagged));
    }

    #[test]
    fn blank_fences_are_skipped() {
        let raw = "```python\n\n```\nsome prose only";
        let r = extract_code(raw, "python", &py());
        assert_eq!(r, result(raw.trim(), ExtractionMethod::WholeResponse));
    }

    #[test]
    fn crlf_fences() {
        let r = extract_code("```python\r\nprint(1)\r\n```\r\n", "python", &py());
        assert_eq!(r, result("print(1)", ExtractionMethod::FencedTagged));
    }

    #[test]
    fn heuristic_picks_code_block_between_prose() {
        let raw = "Sure! Here is a solution.\n\ndef add(a, b):\n    return a + b\n\nprint(add(1, 2))\n\nHope this helps.";
        let r = extract_code(raw, "python", &py());
        assert_eq!(
            r,
            result(
                "def add(a, b):\n    return a + b\n\nprint(add(1, 2))",
                ExtractionMethod::HeuristicLines
            )
        );
    }

    #[test]
    fn two_code_lines_are_not_enough() {
        let raw = "Use this:\nx = 1\nprint(x)\nThat is all.";
        let r = extract_code(raw, "python", &py());
        assert_eq!(r.method, ExtractionMethod::WholeResponse);
        assert_eq!(r.code, raw);
    }

    #[test]
    fn blank_input_is_empty() {
        assert_eq!(extract_code("", "python", &py()), result("", ExtractionMethod::Empty));
        assert_eq!(extract_code(" \n\t\n", "python", &py()), result("", ExtractionMethod::Empty));
    }

    #[test]
    fn inline_triple_backticks_are_not_fences() {
        let raw = "Call ```f()``` to run it.";
        let r = extract_code(raw, "python", &py());
        assert_eq!(r.method, ExtractionMethod::WholeResponse);
    }

    #[test]
    fn parse_errors_name_the_line() {
        assert_eq!(
            PatternFile::parse("code: x").unwrap_err(),
            PatternError::NoSection { line: 1 }
        );
        assert!(matches!(
            PatternFile::parse("[py]\n\ncode: (").unwrap_err(),
            PatternError::BadRegex { line: 3, .. }
        ));
        assert!(matches!(
            PatternFile::parse("[py]\nwhat: x").unwrap_err(),
            PatternError::UnknownEntry { line: 2, .. }
        ));
    }
}
