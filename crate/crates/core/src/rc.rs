//! Relation-classification records in the TACRED release convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::span::TokenSpan;

/// One labeled RC example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RcInstance {
    pub id: String,
    pub tokens: Vec<String>,
    pub subj: TokenSpan,
    pub obj: TokenSpan,
    pub subj_type: String,
    pub obj_type: String,
    pub relation: String,
    /// CRE-style binary gold: whether `relation` holds. `None` for ordinary
    /// multiclass data, where `relation` itself is the gold label.
    pub gold: Option<bool>,
}

impl RcInstance {
    /// The relation this instance is a positive example of, if any.
    pub fn effective_label<'a>(&'a self, null_label: &str) -> Option<&'a str> {
        if self.gold == Some(false) || self.relation == null_label {
            None
        } else {
            Some(&self.relation)
        }
    }

    pub fn subj_text(&self) -> String {
        self.tokens[self.subj.start..=self.subj.end].join(" ")
    }

    pub fn obj_text(&self) -> String {
        self.tokens[self.obj.start..=self.obj.end].join(" ")
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.tokens.is_empty() {
            return Err("empty token list".into());
        }
        if let Some(i) = self.tokens.iter().position(|t| t.is_empty() || t.contains('\n')) {
            return Err(format!("token {i} is empty or contains a newline"));
        }
        self.subj.check_bounds(self.tokens.len()).map_err(|e| format!("subject {e}"))?;
        self.obj.check_bounds(self.tokens.len()).map_err(|e| format!("object {e}"))?;
        Ok(())
    }
}

/// Wire form of a record. Unknown fields (POS tags, parses) are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RcRecord {
    pub id: String,
    pub token: Vec<String>,
    pub subj_start: usize,
    pub subj_end: usize,
    pub obj_start: usize,
    pub obj_end: usize,
    pub subj_type: String,
    pub obj_type: String,
    pub relation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<bool>,
}

impl From<RcRecord> for RcInstance {
    fn from(r: RcRecord) -> Self {
        RcInstance {
            id: r.id,
            tokens: r.token,
            subj: TokenSpan::new(r.subj_start, r.subj_end),
            obj: TokenSpan::new(r.obj_start, r.obj_end),
            subj_type: r.subj_type,
            obj_type: r.obj_type,
            relation: r.relation,
            gold: r.gold,
        }
    }
}

impl From<&RcInstance> for RcRecord {
    fn from(r: &RcInstance) -> Self {
        RcRecord {
            id: r.id.clone(),
            token: r.tokens.clone(),
            subj_start: r.subj.start,
            subj_end: r.subj.end,
            obj_start: r.obj.start,
            obj_end: r.obj.end,
            subj_type: r.subj_type.clone(),
            obj_type: r.obj_type.clone(),
            relation: r.relation.clone(),
            gold: r.gold,
        }
    }
}

/// Parses a JSON array of RC records, validating every span.
pub fn parse_rc_dataset(bytes: &[u8]) -> Result<Vec<RcInstance>> {
    let raw: Vec<serde_json::Value> =
        serde_json::from_slice(bytes).map_err(|e| Error::syntax("rc dataset", e))?;
    raw.into_iter()
        .enumerate()
        .map(|(index, value)| {
            let record: RcRecord = serde_json::from_value(value).map_err(|e| Error::Record {
                index,
                message: e.to_string(),
            })?;
            let rc = RcInstance::from(record);
            rc.validate().map_err(|message| Error::Record { index, message })?;
            Ok(rc)
        })
        .collect()
}

pub fn serialize_rc_dataset(instances: &[RcInstance]) -> Vec<u8> {
    let records: Vec<RcRecord> = instances.iter().map(RcRecord::from).collect();
    let mut out = serde_json::to_vec_pretty(&records).expect("records serialize");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIGURE: &str = r#"[{"id":"e1","token":["John","was","born","on","1991"],
        "subj_start":0,"subj_end":0,"obj_start":4,"obj_end":4,
        "subj_type":"PERSON","obj_type":"DATE","relation":"per:date_of_birth",
        "stanford_pos":["NNP","VBD","VBN","IN","CD"]}]"#;

    #[test]
    fn parses_figure_record() {
        let v = parse_rc_dataset(FIGURE.as_bytes()).unwrap();
        assert_eq!(v.len(), 1);
        let rc = &v[0];
        assert_eq!(rc.id, "e1");
        assert_eq!(rc.subj, TokenSpan::new(0, 0));
        assert_eq!(rc.obj, TokenSpan::new(4, 4));
        assert_eq!(rc.subj_text(), "John");
        assert_eq!(rc.obj_text(), "1991");
        assert_eq!(rc.gold, None);
    }

    #[test]
    fn out_of_bounds_span() {
        let bad = FIGURE.replace("\"subj_end\":0", "\"subj_end\":7");
        let err = parse_rc_dataset(bad.as_bytes()).unwrap_err();
        match err {
            Error::Record { index, message } => {
                assert_eq!(index, 0);
                assert!(message.contains("out of bounds"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_array() {
        assert!(parse_rc_dataset(b"[]").unwrap().is_empty());
    }

    #[test]
    fn missing_field_names_record() {
        let bad = r#"[{"id":"a","token":["x"],"subj_start":0,"subj_end":0,"obj_start":0,"obj_end":0,
            "subj_type":"A","obj_type":"B","relation":"r"},
            {"id":"b","token":["x"],"subj_start":0,"subj_end":0,"obj_start":0,"obj_end":0,
            "subj_type":"A","obj_type":"B"}]"#;
        let err = parse_rc_dataset(bad.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Record { index: 1, .. }), "{err}");
        assert!(err.to_string().contains("relation"));
    }

    #[test]
    fn malformed_document() {
        assert!(matches!(parse_rc_dataset(b"[{"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn cre_gold_flag() {
        let cre = FIGURE.replace("\"relation\"", "\"gold\":false,\"relation\"");
        let v = parse_rc_dataset(cre.as_bytes()).unwrap();
        assert_eq!(v[0].gold, Some(false));
        assert_eq!(v[0].effective_label("no_relation"), None);
        let back = parse_rc_dataset(&serialize_rc_dataset(&v)).unwrap();
        assert_eq!(back, v);
    }
}
