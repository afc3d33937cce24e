//! Span predictions and the sources that produce them.
//!
//! Scores are opaque; downstream code only reads the margin
//! `span_score - null_score`, the SQuAD 2.0 null-odds convention.

mod lexical;
mod oracle;
mod remote;

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::io::to_json_bytes;
use crate::reduction::SpDataset;
use crate::span::{char_len, char_slice, CharSpan};

pub use lexical::{lexical_predict, LexicalPredictor, LEXICAL_NULL_SCORE, LEXICAL_WINDOW};
pub use oracle::{oracle_predict, OraclePredictor};
pub use remote::{
    remote_predict, RemoteConfig, RemotePredictor, WireItem, WirePrediction, WireRequest, WireResponse,
};

/// Predictor output for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanPrediction {
    pub qid: String,
    pub text: String,
    pub char_span: Option<CharSpan>,
    pub span_score: f64,
    pub null_score: f64,
}

impl SpanPrediction {
    pub fn no_answer(qid: impl Into<String>, span_score: f64, null_score: f64) -> Self {
        SpanPrediction {
            qid: qid.into(),
            text: String::new(),
            char_span: None,
            span_score,
            null_score,
        }
    }

    pub fn margin(&self) -> f64 {
        self.span_score - self.null_score
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.span_score.is_finite() || !self.null_score.is_finite() {
            return Err(format!("{}: non-finite score", self.qid));
        }
        if !self.margin().is_finite() {
            return Err(format!("{}: non-finite margin", self.qid));
        }
        match (self.text.is_empty(), self.char_span) {
            (true, None) => Ok(()),
            (false, Some(span)) if !span.is_empty() && span.len() == char_len(&self.text) => Ok(()),
            (false, Some(span)) => Err(format!(
                "{}: span {}..{} does not fit text {:?}",
                self.qid, span.start, span.end, self.text
            )),
            (false, None) => Err(format!("{}: answer text without offsets", self.qid)),
            (true, Some(_)) => Err(format!("{}: offsets without answer text", self.qid)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionMeta {
    pub source: String,
    pub timestamp: Option<String>,
}

/// Predictions keyed by qid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    pub by_qid: BTreeMap<String, SpanPrediction>,
    pub meta: PredictionMeta,
}

impl PredictionSet {
    pub fn new(source: impl Into<String>) -> Self {
        PredictionSet {
            by_qid: BTreeMap::new(),
            meta: PredictionMeta {
                source: source.into(),
                timestamp: None,
            },
        }
    }

    pub fn get(&self, qid: &str) -> Option<&SpanPrediction> {
        self.by_qid.get(qid)
    }

    pub fn len(&self) -> usize {
        self.by_qid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_qid.is_empty()
    }

    /// Adds a validated prediction; rejects duplicates.
    pub fn insert(&mut self, pred: SpanPrediction) -> Result<()> {
        pred.validate().map_err(Error::Predictions)?;
        if self.by_qid.contains_key(&pred.qid) {
            return Err(Error::Predictions(format!("duplicate qid {:?}", pred.qid)));
        }
        self.by_qid.insert(pred.qid.clone(), pred);
        Ok(())
    }

    /// Checks totality over `ds` and that every answer matches its context.
    pub fn validate_against(&self, ds: &SpDataset) -> Result<()> {
        let mut missing = Vec::new();
        for inst in &ds.instances {
            let Some(pred) = self.by_qid.get(&inst.qid) else {
                missing.push(inst.qid.clone());
                continue;
            };
            if let Some(span) = pred.char_span {
                if char_slice(&inst.context, span) != Some(pred.text.as_str()) {
                    return Err(Error::Predictions(format!(
                        "{}: text {:?} does not match the context at {}..{}",
                        inst.qid, pred.text, span.start, span.end
                    )));
                }
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::IncompleteCoverage(missing))
        }
    }
}

/// Anything that can answer every question of a dataset.
pub trait Predictor {
    fn predict(&self, ds: &SpDataset) -> Result<PredictionSet>;
}

/// Reads predictions from a file produced elsewhere.
#[derive(Debug, Clone)]
pub struct FilePredictor {
    pub path: std::path::PathBuf,
}

impl Predictor for FilePredictor {
    fn predict(&self, ds: &SpDataset) -> Result<PredictionSet> {
        let mut set = parse_predictions(&crate::io::read_file(&self.path)?)?;
        set.meta.source = format!("file:{}", self.path.display());
        set.validate_against(ds)?;
        Ok(set)
    }
}

// File format.

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FileEntry {
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_char: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end_char: Option<usize>,
    span_score: Score,
    null_score: Score,
}

/// A score written either as a JSON number or as a string such as `"NaN"`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
enum Score {
    Number(f64),
    #[serde(deserialize_with = "score_from_str", skip_serializing)]
    Text(f64),
}

impl Score {
    fn value(self) -> f64 {
        match self {
            Score::Number(v) | Score::Text(v) => v,
        }
    }
}

fn score_from_str<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let s = String::deserialize(d)?;
    s.trim().parse::<f64>().map_err(serde::de::Error::custom)
}

/// Keeps duplicate keys visible instead of letting the last one win.
struct Entries(Vec<(String, FileEntry)>);

impl<'de> Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Entries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a mapping from qid to prediction")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Entries, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, FileEntry>()? {
                    out.push((k, v));
                }
                Ok(Entries(out))
            }
        }
        d.deserialize_map(V)
    }
}

pub fn parse_predictions(bytes: &[u8]) -> Result<PredictionSet> {
    let Entries(entries) = serde_json::from_slice(bytes).map_err(|e| Error::syntax("predictions", e))?;
    let mut set = PredictionSet::new("file");
    for (qid, e) in entries {
        let char_span = match (e.start_char, e.end_char) {
            (Some(s), Some(t)) => Some(CharSpan::new(s, t)),
            (None, None) => None,
            _ => return Err(Error::Predictions(format!("{qid}: only one of start_char/end_char given"))),
        };
        set.insert(SpanPrediction {
            qid,
            text: e.text,
            char_span,
            span_score: e.span_score.value(),
            null_score: e.null_score.value(),
        })?;
    }
    Ok(set)
}

pub fn serialize_predictions(set: &PredictionSet) -> Vec<u8> {
    let map: BTreeMap<&str, FileEntry> = set
        .by_qid
        .iter()
        .map(|(qid, p)| {
            (
                qid.as_str(),
                FileEntry {
                    text: p.text.clone(),
                    start_char: p.char_span.map(|s| s.start),
                    end_char: p.char_span.map(|s| s.end),
                    span_score: Score::Number(p.span_score),
                    null_score: Score::Number(p.null_score),
                },
            )
        })
        .collect();
    to_json_bytes(&map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_entry_with_margin() {
        let set = parse_predictions(
            br#"{"e1::per:date_of_birth::fwd": {"text":"1991","start_char":17,"end_char":21,"span_score":4.2,"null_score":1.0}}"#,
        )
        .unwrap();
        assert_eq!(set.len(), 1);
        let p = set.get("e1::per:date_of_birth::fwd").unwrap();
        assert_eq!(p.char_span, Some(CharSpan::new(17, 21)));
        assert_eq!(p.margin(), 4.2 - 1.0);
        assert!((p.margin() - 3.2).abs() < 1e-12);
    }

    #[test]
    fn duplicate_qid_rejected() {
        let err = parse_predictions(
            br#"{"q":{"text":"","span_score":0,"null_score":1},"q":{"text":"","span_score":0,"null_score":1}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate qid"), "{err}");
    }

    #[test]
    fn nan_score_rejected() {
        let err = parse_predictions(br#"{"q":{"text":"","span_score":"NaN","null_score":1}}"#).unwrap_err();
        assert!(err.to_string().contains("non-finite score"), "{err}");
        let err = parse_predictions(br#"{"q":{"text":"","span_score":0,"null_score":"-Infinity"}}"#).unwrap_err();
        assert!(err.to_string().contains("non-finite score"), "{err}");
    }

    #[test]
    fn string_scores_that_are_finite_are_accepted() {
        let set = parse_predictions(br#"{"q":{"text":"","span_score":"0.25","null_score":1}}"#).unwrap();
        assert_eq!(set.get("q").unwrap().span_score, 0.25);
    }

    #[test]
    fn offsets_must_match_text() {
        assert!(parse_predictions(br#"{"q":{"text":"ab","start_char":0,"end_char":5,"span_score":0,"null_score":0}}"#).is_err());
        assert!(parse_predictions(br#"{"q":{"text":"ab","span_score":0,"null_score":0}}"#).is_err());
        assert!(parse_predictions(br#"{"q":{"text":"","start_char":0,"end_char":2,"span_score":0,"null_score":0}}"#).is_err());
        assert!(parse_predictions(br#"{"q":{"text":"ab","start_char":0,"span_score":0,"null_score":0}}"#).is_err());
    }

    #[test]
    fn file_round_trip() {
        let mut set = PredictionSet::new("t");
        set.insert(SpanPrediction {
            qid: "a".into(),
            text: "1991".into(),
            char_span: Some(CharSpan::new(17, 21)),
            span_score: 0.1 + 0.2,
            null_score: -1.5,
        })
        .unwrap();
        set.insert(SpanPrediction::no_answer("b", -1.0, 1.0)).unwrap();
        let bytes = serialize_predictions(&set);
        let back = parse_predictions(&bytes).unwrap();
        assert_eq!(back.by_qid, set.by_qid);
        assert_eq!(serialize_predictions(&back), bytes);
    }
}
