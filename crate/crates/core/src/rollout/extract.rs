//! Parsing of model segments: fenced code blocks and `<<<...>>>` answers.

use std::sync::LazyLock;

use regex::Regex;

static OPENER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^\s*```\s*python\s*$").unwrap());

fn is_closer(line: &str) -> bool {
    line.trim() == "```"
}

/// Every complete ```` ```python ```` block, in order. An opener without a
/// closing fence ends the scan.
pub fn code_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<String> = None;
    for line in text.split_inclusive('\n') {
        let bare = line.strip_suffix('\n').unwrap_or(line);
        match current.as_mut() {
            None if OPENER.is_match(bare) => current = Some(String::new()),
            None => {}
            Some(_) if is_closer(bare) => blocks.push(current.take().unwrap()),
            Some(body) => body.push_str(line),
        }
    }
    blocks
}

/// The first complete code block. Further blocks are ignored with a warning.
pub fn extract_code_block(text: &str) -> Option<String> {
    let mut blocks = code_blocks(text);
    if blocks.len() > 1 {
        tracing::warn!(
            extra = blocks.len() - 1,
            "segment has several code blocks; running only the first"
        );
    }
    if blocks.is_empty() {
        None
    } else {
        Some(blocks.swap_remove(0))
    }
}

/// Content of the last complete `<<<...>>>` pair.
pub fn extract_final_answer(text: &str) -> Option<String> {
    let mut end = text.len();
    while let Some(open) = text[..end].rfind("<<<") {
        let body_start = open + 3;
        if let Some(close) = text[body_start..].find(">>>") {
            return Some(text[body_start..body_start + close].to_string());
        }
        end = open;
    }
    None
}
