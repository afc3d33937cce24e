//! A deterministic word-overlap baseline.
//!
//! Always proposes the expected entity as the answer and scores it by how many
//! of the question's content words appear near that entity in the context.
//! Useful for smoke tests that need non-trivial margins without a model.

use std::collections::BTreeSet;

use super::{PredictionSet, Predictor, SpanPrediction};
use crate::error::{Error, Result};
use crate::reduction::SpDataset;
use crate::span::{char_slice, CharSpan};

/// Tokens on each side of the expected entity that count as its neighborhood.
pub const LEXICAL_WINDOW: usize = 5;
pub const LEXICAL_NULL_SCORE: f64 = 0.5;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "did", "do", "does", "for", "from", "has", "have",
    "how", "in", "is", "it", "its", "of", "on", "or", "s", "the", "to", "was", "were", "what", "when",
    "where", "which", "who", "whom", "whose", "why", "with",
];

fn normalize(word: &str) -> Option<String> {
    let w = word
        .trim_matches(|c: char| !c.is_alphanumeric())
        .trim_end_matches("'s")
        .to_lowercase();
    (!w.is_empty() && !STOPWORDS.contains(&w.as_str())).then_some(w)
}

fn content_words<'a>(words: impl Iterator<Item = &'a str>) -> BTreeSet<String> {
    words.filter_map(normalize).collect()
}

/// Whitespace-separated words with their character spans.
fn words_with_spans(text: &str) -> Vec<(CharSpan, &str)> {
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    let mut chars = 0;
    for (byte, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some((cs, bs)) = start.take() {
                out.push((CharSpan::new(cs, chars), &text[bs..byte]));
            }
        } else if start.is_none() {
            start = Some((chars, byte));
        }
        chars += 1;
    }
    if let Some((cs, bs)) = start {
        out.push((CharSpan::new(cs, chars), &text[bs..]));
    }
    out
}

/// Share of the question's content words found within [`LEXICAL_WINDOW`]
/// words of `entity`, not counting the entity itself.
fn overlap_ratio(question: &str, context: &str, entity: CharSpan) -> f64 {
    let q = content_words(question.split_whitespace());
    if q.is_empty() {
        return 0.0;
    }
    let words = words_with_spans(context);
    let inside: Vec<usize> = words
        .iter()
        .enumerate()
        .filter(|(_, (s, _))| s.start < entity.end && entity.start < s.end)
        .map(|(i, _)| i)
        .collect();
    let (Some(&first), Some(&last)) = (inside.first(), inside.last()) else {
        return 0.0;
    };
    let lo = first.saturating_sub(LEXICAL_WINDOW);
    let hi = (last + LEXICAL_WINDOW).min(words.len() - 1);
    let window = content_words(
        (lo..=hi)
            .filter(|i| *i < first || *i > last)
            .map(|i| words[i].1),
    );
    q.intersection(&window).count() as f64 / q.len() as f64
}

pub fn lexical_predict(ds: &SpDataset) -> Result<PredictionSet> {
    let mut set = PredictionSet::new("lexical");
    for inst in &ds.instances {
        let p = inst
            .provenance
            .as_ref()
            .ok_or_else(|| Error::MissingProvenance(inst.qid.clone()))?;
        let span = p.expected_entity;
        let text = char_slice(&inst.context, span)
            .ok_or_else(|| Error::Predictions(format!("{}: expected entity outside context", inst.qid)))?;
        set.insert(SpanPrediction {
            qid: inst.qid.clone(),
            text: text.to_string(),
            char_span: Some(span),
            span_score: overlap_ratio(&inst.question, &inst.context, span),
            null_score: LEXICAL_NULL_SCORE,
        })?;
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalPredictor;

impl Predictor for LexicalPredictor {
    fn predict(&self, ds: &SpDataset) -> Result<PredictionSet> {
        lexical_predict(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::{Provenance, SpInstance};
    use crate::schema::{Direction, Variant};

    const CONTEXT: &str = "The famous chemist Marie Curie lectured in Paris yesterday";

    fn inst(qid: &str, question: &str) -> SpInstance {
        SpInstance {
            qid: qid.into(),
            context: CONTEXT.into(),
            question: question.into(),
            answer: None,
            provenance: Some(Provenance {
                rc_id: "c".into(),
                relation: "r".into(),
                direction: Direction::Rev,
                variant: Variant::Question,
                // "Marie Curie"
                expected_entity: CharSpan::new(19, 30),
            }),
        }
    }

    fn ds() -> SpDataset {
        SpDataset {
            instances: vec![
                // content words: famous chemist lectured organic bonds tonight (6);
                // window words: famous chemist lectured paris yesterday; shared: 3
                inst("half", "Which famous chemist lectured on organic bonds tonight?"),
                inst("none", "Who wrote novels?"),
                inst("empty", "Who is the one?"),
            ],
            variant: None,
            source: "lex".into(),
        }
    }

    #[test]
    fn overlap_scores() {
        let set = lexical_predict(&ds()).unwrap();
        let half = set.get("half").unwrap();
        assert_eq!(half.text, "Marie Curie");
        assert_eq!(half.span_score, 0.5);
        assert_eq!(half.margin(), 0.0);
        assert_eq!(set.get("none").unwrap().margin(), -0.5);
        assert_eq!(set.get("empty").unwrap().span_score, 0.0);
        set.validate_against(&ds()).unwrap();
    }

    #[test]
    fn deterministic() {
        assert_eq!(lexical_predict(&ds()).unwrap(), lexical_predict(&ds()).unwrap());
    }

    #[test]
    fn word_spans_track_characters() {
        let w = words_with_spans("  Zoë  was here ");
        assert_eq!(w.iter().map(|(s, t)| (s.start, s.end, *t)).collect::<Vec<_>>(), [
            (2, 5, "Zoë"),
            (7, 10, "was"),
            (11, 15, "here")
        ]);
    }
}
