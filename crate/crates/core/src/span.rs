//! Token and character spans, and the bridge between them.
//!
//! RC corpora address entities by inclusive token indices; span predictors
//! address answers by character offsets into a context string. The context is
//! the tokens joined by single spaces, so every token maps to exactly one
//! character range and the mapping is reversible.
//!
//! Character offsets count Unicode scalar values, matching the SQuAD
//! convention of indexing Python strings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive token range `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        TokenSpan { start, end }
    }

    pub fn check_bounds(&self, token_count: usize) -> std::result::Result<(), String> {
        if self.start > self.end {
            return Err(format!("span start {} exceeds end {}", self.start, self.end));
        }
        if self.end >= token_count {
            return Err(format!(
                "span {}..={} out of bounds for {} tokens",
                self.start, self.end, token_count
            ));
        }
        Ok(())
    }
}

/// Half-open character range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        CharSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// `self` contains `other` (closed containment over the covered characters).
    pub fn contains(&self, other: &CharSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// A sentence rendered to text, with the character span of every token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedContext {
    pub text: String,
    pub offsets: Vec<CharSpan>,
}

impl RenderedContext {
    /// Character span covering tokens `span.start..=span.end`.
    pub fn char_span(&self, span: TokenSpan) -> CharSpan {
        CharSpan::new(self.offsets[span.start].start, self.offsets[span.end].end)
    }
}

/// Joins tokens with single spaces and records per-token character offsets.
pub fn render_context<S: AsRef<str>>(tokens: &[S]) -> Result<RenderedContext> {
    if tokens.is_empty() {
        return Err(Error::Record {
            index: 0,
            message: "empty token sequence".into(),
        });
    }
    let mut text = String::new();
    let mut offsets = Vec::with_capacity(tokens.len());
    let mut pos = 0usize;
    for (i, tok) in tokens.iter().enumerate() {
        let tok = tok.as_ref();
        if i > 0 {
            text.push(' ');
            pos += 1;
        }
        let n = tok.chars().count();
        text.push_str(tok);
        offsets.push(CharSpan::new(pos, pos + n));
        pos += n;
    }
    Ok(RenderedContext { text, offsets })
}

/// Slices `text` by character offsets. Returns `None` when out of range.
pub fn char_slice(text: &str, span: CharSpan) -> Option<&str> {
    if span.start > span.end {
        return None;
    }
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let start = indices.nth(span.start)?;
    let end = if span.end == span.start {
        start
    } else {
        indices.nth(span.end - span.start - 1)?
    };
    Some(&text[start..end])
}

/// Number of characters in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}
