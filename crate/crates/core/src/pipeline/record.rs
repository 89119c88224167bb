use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::client::{ChatMessage, Role};
use crate::rollout::{extract_final_answer, Segment, SegmentKind, Termination, Transcript, BUDGET_NOTICE};
use crate::tasks::Difficulty;

/// A verified-correct trajectory exported for supervised fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub task_name: String,
    pub seed: u64,
    pub difficulty: Difficulty,
    pub sample: u32,
    pub question: String,
    pub prompt_variant_id: usize,
    /// Full conversation; execution output travels as `tool` messages.
    pub messages: Vec<ChatMessage>,
    pub final_answer: String,
    pub code_calls: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("conversation must start with a system and a user message")]
    MissingPreamble,
    #[error("unexpected {role:?} message at position {index}")]
    UnexpectedRole { role: Role, index: usize },
    #[error("record does not end with an answered assistant message")]
    NoAnswer,
    #[error("execution span {0} does not fit its message")]
    BadSpan(usize),
}

impl SftRecord {
    /// Rebuilds the transcript the record was exported from.
    pub fn to_transcript(&self) -> Result<Transcript, RecordError> {
        transcript_from_messages(&self.task_name, &self.messages)
    }

    /// Hash of the question and the concatenated model text.
    pub fn content_hash(&self) -> String {
        let model: String = self
            .messages
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .map(|m| m.content.as_str())
            .collect();
        content_hash(&self.question, &model)
    }
}

pub(crate) fn content_hash(question: &str, model_text: &str) -> String {
    let mut h = Sha256::new();
    h.update(question.as_bytes());
    h.update([0u8]);
    h.update(model_text.as_bytes());
    hex::encode(h.finalize())
}

pub(crate) fn question_hash(question: &str) -> String {
    hex::encode(Sha256::digest(question.as_bytes()))
}

/// Inverse of [`Transcript::messages`] for an answered transcript.
pub fn transcript_from_messages(task_name: &str, messages: &[ChatMessage]) -> Result<Transcript, RecordError> {
    let (system, question) = match messages {
        [s, q, ..] if s.role == Role::System && q.role == Role::User => (s, q),
        _ => return Err(RecordError::MissingPreamble),
    };
    let mut segments = Vec::new();
    let mut budget_notices = Vec::new();
    for (index, m) in messages.iter().enumerate().skip(2) {
        let kind = match m.role {
            Role::Assistant => SegmentKind::Model,
            Role::Tool => SegmentKind::Execution,
            Role::User if m.content == BUDGET_NOTICE => {
                budget_notices.push(segments.len());
                continue;
            }
            role => return Err(RecordError::UnexpectedRole { role, index }),
        };
        segments.push(Segment {
            kind,
            text: m.content.clone(),
            index: segments.len(),
        });
    }
    let final_answer = match segments.last() {
        Some(s) if s.kind == SegmentKind::Model => extract_final_answer(&s.text),
        _ => None,
    }
    .ok_or(RecordError::NoAnswer)?;
    let count = |k| segments.iter().filter(|s: &&Segment| s.kind == k).count() as u32;
    Ok(Transcript {
        task_name: task_name.to_string(),
        question: question.content.clone(),
        system_prompt: system.content.clone(),
        code_calls: count(SegmentKind::Execution),
        model_turns: count(SegmentKind::Model),
        segments,
        final_answer: Some(final_answer),
        termination: Termination::Answered,
        budget_notices,
        error: None,
    })
}

/// Byte range of execution output inside an inlined assistant message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionSpan {
    pub message: usize,
    pub start: usize,
    pub end: usize,
}

/// Merges assistant messages with the tool messages that follow them into
/// one assistant message, for trainers that expect a single model sequence.
/// The returned spans locate the execution text so the split can be undone
/// exactly. Adjacent assistant messages stay separate, as does an empty one.
pub fn inline_execution(messages: &[ChatMessage]) -> (Vec<ChatMessage>, Vec<ExecutionSpan>) {
    let mut out: Vec<ChatMessage> = Vec::new();
    let mut spans = Vec::new();
    let mut open = false;
    let mut after_tool = false;
    for m in messages {
        match m.role {
            Role::Assistant | Role::Tool => {
                let joins = m.role == Role::Tool || (after_tool && !m.content.is_empty());
                if !open || !joins {
                    out.push(ChatMessage::assistant(String::new()));
                    open = true;
                }
                after_tool = m.role == Role::Tool;
                let idx = out.len() - 1;
                let buf = &mut out[idx].content;
                let start = buf.len();
                buf.push_str(&m.content);
                if m.role == Role::Tool {
                    spans.push(ExecutionSpan {
                        message: idx,
                        start,
                        end: buf.len(),
                    });
                }
            }
            _ => {
                out.push(m.clone());
                open = false;
                after_tool = false;
            }
        }
    }
    (out, spans)
}

/// Inverse of [`inline_execution`].
pub fn split_inlined(messages: &[ChatMessage], spans: &[ExecutionSpan]) -> Result<Vec<ChatMessage>, RecordError> {
    let mut out = Vec::new();
    for (idx, m) in messages.iter().enumerate() {
        if m.role != Role::Assistant {
            out.push(m.clone());
            continue;
        }
        let mut cursor = 0;
        for (n, span) in spans.iter().enumerate().filter(|(_, s)| s.message == idx) {
            let valid = span.start >= cursor
                && span.end >= span.start
                && span.end <= m.content.len()
                && m.content.is_char_boundary(span.start)
                && m.content.is_char_boundary(span.end);
            if !valid {
                return Err(RecordError::BadSpan(n));
            }
            if span.start > cursor {
                out.push(ChatMessage::assistant(&m.content[cursor..span.start]));
            }
            out.push(ChatMessage::tool(&m.content[span.start..span.end]));
            cursor = span.end;
        }
        if cursor < m.content.len() || cursor == 0 {
            out.push(ChatMessage::assistant(&m.content[cursor..]));
        }
    }
    Ok(out)
}
