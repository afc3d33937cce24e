//! SQuAD 2.0 interchange and the provenance sidecar.
//!
//! The SQuAD file carries what external trainers and predictors need. The
//! sidecar carries everything else the decoder needs (which RC instance,
//! relation and direction a question came from, and the expected entity span),
//! keyed by qid.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::to_json_bytes;
use crate::reduction::{split_qid, Answer, Provenance, SpDataset, SpInstance};
use crate::schema::{Direction, Variant};
use crate::span::{char_len, char_slice, CharSpan};

pub const SQUAD_VERSION: &str = "v2.0";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadDocument {
    pub version: String,
    pub data: Vec<SquadArticle>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadArticle {
    pub title: String,
    pub paragraphs: Vec<SquadParagraph>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadParagraph {
    pub context: String,
    pub qas: Vec<SquadQa>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadQa {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub is_impossible: bool,
    pub answers: Vec<SquadAnswer>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadAnswer {
    pub text: String,
    pub answer_start: usize,
}

/// Questions from the same RC instance share a paragraph. Foreign qids fall
/// back to grouping consecutive questions over the same context.
fn paragraph_key(inst: &SpInstance) -> Option<&str> {
    match &inst.provenance {
        Some(p) => Some(p.rc_id.as_str()),
        None => split_qid(&inst.qid).map(|(rc, _, _)| rc),
    }
}

pub fn to_squad_document(ds: &SpDataset) -> SquadDocument {
    let mut paragraphs: Vec<SquadParagraph> = Vec::new();
    let mut last_key: Option<Option<&str>> = None;
    for inst in &ds.instances {
        let key = paragraph_key(inst);
        let same = last_key == Some(key)
            && paragraphs.last().is_some_and(|p| p.context == inst.context);
        if !same {
            paragraphs.push(SquadParagraph {
                context: inst.context.clone(),
                qas: Vec::new(),
            });
        }
        last_key = Some(key);
        paragraphs.last_mut().expect("paragraph pushed").qas.push(SquadQa {
            id: inst.qid.clone(),
            question: inst.question.clone(),
            is_impossible: inst.answer.is_none(),
            answers: inst
                .answer
                .iter()
                .map(|a| SquadAnswer {
                    text: a.text.clone(),
                    answer_start: a.span.start,
                })
                .collect(),
        });
    }
    SquadDocument {
        version: SQUAD_VERSION.to_string(),
        data: vec![SquadArticle {
            title: ds.source.clone(),
            paragraphs,
        }],
    }
}

pub fn serialize_squad(ds: &SpDataset) -> Vec<u8> {
    let mut out = serde_json::to_vec(&to_squad_document(ds)).expect("squad serializes");
    out.push(b'\n');
    out
}

/// Parses a SQuAD 1.1/2.0 document. Provenance is not part of the format and
/// comes back empty; see [`attach_provenance`].
pub fn parse_squad(bytes: &[u8]) -> Result<SpDataset> {
    let doc: SquadDocument = serde_json::from_slice(bytes).map_err(|e| Error::syntax("squad", e))?;
    let mut instances = Vec::new();
    let mut seen = HashSet::new();
    let mut titles: Vec<String> = Vec::new();
    for article in doc.data {
        if !titles.contains(&article.title) {
            titles.push(article.title);
        }
        for para in article.paragraphs {
            let ctx_len = char_len(&para.context);
            for qa in para.qas {
                if !seen.insert(qa.id.clone()) {
                    return Err(Error::DuplicateId(qa.id));
                }
                let answer = match (qa.is_impossible, qa.answers.first()) {
                    (true, None) => None,
                    (true, Some(_)) => {
                        return Err(Error::Squad(format!(
                            "{}: is_impossible set but answers present",
                            qa.id
                        )))
                    }
                    (false, None) => {
                        return Err(Error::Squad(format!("{}: answerable question without answers", qa.id)))
                    }
                    (false, Some(a)) => {
                        let span = CharSpan::new(a.answer_start, a.answer_start + char_len(&a.text));
                        if span.is_empty() || span.end > ctx_len {
                            return Err(Error::Squad(format!(
                                "{}: answer_start {} with text {:?} falls outside the context",
                                qa.id, a.answer_start, a.text
                            )));
                        }
                        if char_slice(&para.context, span) != Some(a.text.as_str()) {
                            return Err(Error::Squad(format!(
                                "{}: context at answer_start {} does not match {:?}",
                                qa.id, a.answer_start, a.text
                            )));
                        }
                        Some(Answer {
                            span,
                            text: a.text.clone(),
                        })
                    }
                };
                instances.push(SpInstance {
                    qid: qa.id,
                    context: para.context.clone(),
                    question: qa.question,
                    answer,
                    provenance: None,
                });
            }
        }
    }
    Ok(SpDataset {
        instances,
        variant: None,
        source: titles.join("+"),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub qid: String,
    pub rc_id: String,
    pub relation: String,
    pub direction: Direction,
    pub variant: Variant,
    pub expected_start: usize,
    pub expected_end: usize,
    pub answerable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceFile {
    pub version: u32,
    pub seed: Option<u64>,
    pub source: String,
    pub variant: Option<Variant>,
    pub records: Vec<ProvenanceRecord>,
}

pub fn provenance_file(ds: &SpDataset, seed: Option<u64>) -> Result<ProvenanceFile> {
    let records = ds
        .instances
        .iter()
        .map(|inst| {
            let p = inst
                .provenance
                .as_ref()
                .ok_or_else(|| Error::MissingProvenance(inst.qid.clone()))?;
            Ok(ProvenanceRecord {
                qid: inst.qid.clone(),
                rc_id: p.rc_id.clone(),
                relation: p.relation.clone(),
                direction: p.direction,
                variant: p.variant,
                expected_start: p.expected_entity.start,
                expected_end: p.expected_entity.end,
                answerable: inst.is_answerable(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProvenanceFile {
        version: 1,
        seed,
        source: ds.source.clone(),
        variant: ds.variant,
        records,
    })
}

pub fn serialize_provenance(ds: &SpDataset, seed: Option<u64>) -> Result<Vec<u8>> {
    Ok(to_json_bytes(&provenance_file(ds, seed)?))
}

pub fn parse_provenance(bytes: &[u8]) -> Result<ProvenanceFile> {
    serde_json::from_slice(bytes).map_err(|e| Error::syntax("provenance sidecar", e))
}

/// Joins sidecar records onto a parsed SQuAD dataset by qid.
pub fn attach_provenance(mut ds: SpDataset, file: &ProvenanceFile) -> Result<SpDataset> {
    let by_qid: HashMap<&str, &ProvenanceRecord> =
        file.records.iter().map(|r| (r.qid.as_str(), r)).collect();
    for inst in &mut ds.instances {
        let r = by_qid
            .get(inst.qid.as_str())
            .ok_or_else(|| Error::MissingProvenance(inst.qid.clone()))?;
        if r.answerable != inst.is_answerable() {
            return Err(Error::Squad(format!(
                "{}: sidecar answerability disagrees with the dataset",
                inst.qid
            )));
        }
        let expected = CharSpan::new(r.expected_start, r.expected_end);
        if expected.is_empty() || expected.end > char_len(&inst.context) {
            return Err(Error::Squad(format!("{}: expected entity span out of range", inst.qid)));
        }
        inst.provenance = Some(Provenance {
            rc_id: r.rc_id.clone(),
            relation: r.relation.clone(),
            direction: r.direction,
            variant: r.variant,
            expected_entity: expected,
        });
    }
    if ds.variant.is_none() {
        ds.variant = file.variant;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn answerable() -> SpInstance {
        SpInstance {
            qid: "e1::per:date_of_birth::fwd".into(),
            context: "John was born on 1991".into(),
            question: "When was John born?".into(),
            answer: Some(Answer {
                span: CharSpan::new(17, 21),
                text: "1991".into(),
            }),
            provenance: Some(Provenance {
                rc_id: "e1".into(),
                relation: "per:date_of_birth".into(),
                direction: Direction::Fwd,
                variant: Variant::Question,
                expected_entity: CharSpan::new(17, 21),
            }),
        }
    }

    fn unanswerable() -> SpInstance {
        SpInstance {
            qid: "e1::per:date_of_death::fwd".into(),
            context: "John was born on 1991".into(),
            question: "When did John die?".into(),
            answer: None,
            provenance: Some(Provenance {
                rc_id: "e1".into(),
                relation: "per:date_of_death".into(),
                direction: Direction::Fwd,
                variant: Variant::Question,
                expected_entity: CharSpan::new(17, 21),
            }),
        }
    }

    fn ds(instances: Vec<SpInstance>) -> SpDataset {
        SpDataset {
            instances,
            variant: Some(Variant::Question),
            source: "fixture".into(),
        }
    }

    #[test]
    fn answerable_entry_shape() {
        let doc: serde_json::Value = serde_json::from_slice(&serialize_squad(&ds(vec![answerable()]))).unwrap();
        assert_eq!(doc["version"], "v2.0");
        let qa = &doc["data"][0]["paragraphs"][0]["qas"][0];
        assert_eq!(qa["is_impossible"], false);
        assert_eq!(qa["answers"], serde_json::json!([{"text": "1991", "answer_start": 17}]));
    }

    #[test]
    fn unanswerable_entry_shape() {
        let doc: serde_json::Value = serde_json::from_slice(&serialize_squad(&ds(vec![unanswerable()]))).unwrap();
        let qa = &doc["data"][0]["paragraphs"][0]["qas"][0];
        assert_eq!(qa["is_impossible"], true);
        assert_eq!(qa["answers"], serde_json::json!([]));
    }

    #[test]
    fn one_paragraph_per_rc_instance() {
        let mut other = answerable();
        other.qid = "e2::per:date_of_birth::fwd".into();
        other.provenance.as_mut().unwrap().rc_id = "e2".into();
        let doc = to_squad_document(&ds(vec![answerable(), unanswerable(), other]));
        let paras = &doc.data[0].paragraphs;
        assert_eq!(paras.len(), 2);
        assert_eq!(paras[0].qas.len(), 2);
    }

    #[test]
    fn round_trip_with_sidecar() {
        let original = ds(vec![answerable(), unanswerable()]);
        let parsed = parse_squad(&serialize_squad(&original)).unwrap();
        assert!(parsed.instances.iter().all(|i| i.provenance.is_none()));
        let side = parse_provenance(&serialize_provenance(&original, Some(13)).unwrap()).unwrap();
        assert_eq!(side.seed, Some(13));
        let joined = attach_provenance(parsed, &side).unwrap();
        assert_eq!(joined, original);
    }

    #[test]
    fn inconsistent_answer_rejected() {
        let bad = r#"{"version":"v2.0","data":[{"title":"t","paragraphs":[{"context":"John was born on 1991",
            "qas":[{"id":"q","question":"?","is_impossible":false,"answers":[{"text":"1992","answer_start":17}]}]}]}]}"#;
        assert!(matches!(parse_squad(bad.as_bytes()), Err(Error::Squad(_))));
        let flag = r#"{"version":"v2.0","data":[{"title":"t","paragraphs":[{"context":"abc",
            "qas":[{"id":"q","question":"?","is_impossible":true,"answers":[{"text":"a","answer_start":0}]}]}]}]}"#;
        assert!(matches!(parse_squad(flag.as_bytes()), Err(Error::Squad(_))));
        let oob = r#"{"version":"v2.0","data":[{"title":"t","paragraphs":[{"context":"abc",
            "qas":[{"id":"q","question":"?","answers":[{"text":"abc","answer_start":2}]}]}]}]}"#;
        assert!(matches!(parse_squad(oob.as_bytes()), Err(Error::Squad(_))));
    }

    #[test]
    fn malformed_document_rejected() {
        assert!(matches!(parse_squad(b"{\"version\":"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn foreign_squad_ids_group_by_context() {
        let doc = r#"{"version":"v2.0","data":[{"title":"Normans","paragraphs":[{"context":"The Normans were a people.",
            "qas":[{"id":"56ddde6b9a695914005b9628","question":"Who were the Normans?","answers":[{"text":"a people","answer_start":17}],"is_impossible":false},
                   {"id":"5ad39d53604f3c001a3fe8d1","question":"Who?","answers":[],"plausible_answers":[{"text":"x","answer_start":0}],"is_impossible":true}]}]}]}"#;
        let parsed = parse_squad(doc.as_bytes()).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed.source, "Normans");
        let again = to_squad_document(&parsed);
        assert_eq!(again.data[0].paragraphs.len(), 1);
    }

    #[test]
    fn missing_sidecar_record() {
        let parsed = parse_squad(&serialize_squad(&ds(vec![answerable()]))).unwrap();
        let side = ProvenanceFile {
            version: 1,
            seed: None,
            source: "fixture".into(),
            variant: None,
            records: vec![],
        };
        assert!(matches!(attach_provenance(parsed, &side), Err(Error::MissingProvenance(_))));
    }
}
