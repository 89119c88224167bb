//! Deterministic answer canonicalization.
//!
//! Every verifier compares canonical forms, so each function here must be
//! idempotent: `normalize(normalize(x)) == normalize(x)`.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Integer,
    IntegerList,
    String { fold_case: bool },
    Grid,
    Expression,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot normalize {raw:?} as {kind}: {message}")]
pub struct NormalizeError {
    pub raw: String,
    pub kind: &'static str,
    pub message: String,
}

impl AnswerKind {
    fn label(self) -> &'static str {
        match self {
            AnswerKind::Integer => "integer",
            AnswerKind::IntegerList => "integer list",
            AnswerKind::String { .. } => "string",
            AnswerKind::Grid => "grid",
            AnswerKind::Expression => "expression",
        }
    }
}

pub fn normalize_answer(raw: &str, kind: AnswerKind) -> Result<String, NormalizeError> {
    let fail = |message: &str| NormalizeError {
        raw: raw.to_string(),
        kind: kind.label(),
        message: message.to_string(),
    };
    match kind {
        AnswerKind::Integer => {
            let s = strip_brackets(strip_quotes(raw));
            parse_integer(s)
                .map(|v| v.to_string())
                .ok_or_else(|| fail("not an integer"))
        }
        AnswerKind::IntegerList => {
            let s: String = strip_quotes(raw)
                .chars()
                .filter(|c| !matches!(c, '[' | ']' | '(' | ')' | '{' | '}'))
                .collect();
            let mut out = Vec::new();
            for item in LIST_SEP.split(&s).filter(|t| !t.is_empty()) {
                let v = parse_integer(strip_quotes(item)).ok_or_else(|| fail("list item is not an integer"))?;
                out.push(v.to_string());
            }
            Ok(out.join(","))
        }
        AnswerKind::String { fold_case } => {
            let s = strip_quotes(raw);
            Ok(if fold_case { s.to_lowercase() } else { s.to_string() })
        }
        AnswerKind::Grid => {
            // Joining cells can form a new quoted span, so repeat to a fixed
            // point. No pass makes the text longer.
            let mut s = grid_pass(raw).map_err(&fail)?;
            loop {
                let next = grid_pass(&s).map_err(&fail)?;
                if next == s {
                    return Ok(s);
                }
                s = next;
            }
        }
        AnswerKind::Expression => {
            let mut s = raw.to_string();
            loop {
                let next = expression_pass(&s);
                if next == s {
                    break;
                }
                s = next;
            }
            if s.is_empty() {
                return Err(fail("empty expression"));
            }
            Ok(s)
        }
    }
}

fn grid_pass(raw: &str) -> Result<String, &'static str> {
    let mut out = Vec::new();
    let mut width = None;
    for row in grid_rows(raw) {
        let cells: Vec<&str> = CELL_SEP
            .split(row)
            .map(|c| strip_quotes(c.trim_matches(|ch| ch == '[' || ch == ']')))
            .filter(|c| !c.is_empty())
            .collect();
        if cells.is_empty() {
            continue;
        }
        if *width.get_or_insert(cells.len()) != cells.len() {
            return Err("rows have different lengths");
        }
        out.push(cells.join(","));
    }
    if out.is_empty() {
        return Err("empty grid");
    }
    Ok(out.join(";"))
}

fn expression_pass(raw: &str) -> String {
    let mut s: String = strip_quotes(raw)
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '×' | '∗' => '*',
            '÷' => '/',
            '−' | '–' => '-',
            other => other,
        })
        .collect();
    while let Some(m) = TRAILING_EQUALS.find(&s) {
        s.truncate(m.start());
    }
    s
}

static LIST_SEP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[,;\s]+").unwrap());
static CELL_SEP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[,\s]+").unwrap());
static ROW_BREAK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\]\s*[,;]?\s*\[").unwrap());
static TRAILING_EQUALS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"=[-+]?\d+(\.\d+)?$").unwrap());

fn grid_rows(raw: &str) -> Vec<&str> {
    let s = strip_quotes(raw);
    if s.starts_with("[[") && s.ends_with("]]") {
        ROW_BREAK.split(&s[1..s.len() - 1]).collect()
    } else {
        s.split(['\n', ';']).collect()
    }
}

/// Trims whitespace and peels matching quote pairs until none remain.
fn strip_quotes(raw: &str) -> &str {
    let mut s = raw.trim();
    loop {
        let b = s.as_bytes();
        if b.len() >= 2 && matches!(b[0], b'"' | b'\'' | b'`') && b[b.len() - 1] == b[0] {
            s = s[1..s.len() - 1].trim();
        } else {
            return s;
        }
    }
}

fn strip_brackets(raw: &str) -> &str {
    let mut s = raw.trim();
    loop {
        let b = s.as_bytes();
        let wrapped = b.len() >= 2 && matches!((b[0], b[b.len() - 1]), (b'[', b']') | (b'(', b')') | (b'{', b'}'));
        if wrapped {
            s = strip_quotes(&s[1..s.len() - 1]);
        } else {
            return s;
        }
    }
}

/// Accepts an optional sign, digits, and an optional all-zero fraction.
fn parse_integer(s: &str) -> Option<i128> {
    let s = s.trim();
    let (int_part, frac) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s, None),
    };
    if let Some(f) = frac {
        if f.is_empty() || !f.bytes().all(|b| b == b'0') {
            return None;
        }
    }
    let digits = int_part.strip_prefix(['+', '-']).unwrap_or(int_part);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    int_part.parse::<i128>().ok()
}
