//! Relation inventory, entity-type signatures and question templates.
//!
//! A schema lists every relation in a fixed order. Each relation carries two
//! templates per variant: `fwd` takes the subject entity and asks for the
//! object, `rev` takes the object and asks for the subject. Templates hold a
//! single `{e}` slot; literal braces are written `{{` and `}}`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rc::RcInstance;

/// Matches any entity type in a signature.
pub const ANY_TYPE: &str = "*";

const TACRED_SCHEMA: &str = include_str!("../data/tacred_schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Question,
    Relation,
    Token,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Question, Variant::Relation, Variant::Token];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Question => "question",
            Variant::Relation => "relation",
            Variant::Token => "token",
        }
    }

    fn slot(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "question" => Ok(Variant::Question),
            "relation" => Ok(Variant::Relation),
            "token" => Ok(Variant::Token),
            other => Err(Error::Schema(format!("unknown template variant {other:?}"))),
        }
    }
}

/// Which entity a question is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Argument is the subject, answer is the object.
    Fwd,
    /// Argument is the object, answer is the subject.
    Rev,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Fwd, Direction::Rev];

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Fwd => "fwd",
            Direction::Rev => "rev",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fwd" => Ok(Direction::Fwd),
            "rev" => Ok(Direction::Rev),
            other => Err(Error::Schema(format!("unknown direction {other:?}"))),
        }
    }
}

/// A question pattern with exactly one entity slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pattern: String,
    variant: Variant,
    prefix: String,
    suffix: String,
}

impl Template {
    pub fn parse(pattern: &str, variant: Variant) -> Result<Self> {
        let fail = |message: &str| Error::Template {
            pattern: pattern.to_string(),
            message: message.to_string(),
        };
        if pattern.is_empty() {
            return Err(fail("pattern is empty"));
        }
        let mut prefix = String::new();
        let mut suffix = String::new();
        let mut slots = 0;
        let mut chars = pattern.chars().peekable();
        while let Some(c) = chars.next() {
            let out = if slots == 0 { &mut prefix } else { &mut suffix };
            match c {
                '{' if chars.peek() == Some(&'{') => {
                    chars.next();
                    out.push('{');
                }
                '}' if chars.peek() == Some(&'}') => {
                    chars.next();
                    out.push('}');
                }
                '{' => {
                    if chars.next() != Some('e') || chars.next() != Some('}') {
                        return Err(fail("unknown placeholder; only {e} is allowed"));
                    }
                    slots += 1;
                    if slots > 1 {
                        return Err(fail("more than one {e} slot"));
                    }
                }
                '}' => return Err(fail("unmatched '}'")),
                c => out.push(c),
            }
        }
        if slots == 0 {
            return Err(fail("missing {e} slot"));
        }
        Ok(Template {
            pattern: pattern.to_string(),
            variant,
            prefix,
            suffix,
        })
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn render(&self, entity: &str) -> String {
        let mut s = String::with_capacity(self.prefix.len() + entity.len() + self.suffix.len());
        s.push_str(&self.prefix);
        s.push_str(entity);
        s.push_str(&self.suffix);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplatePair {
    pub fwd: Template,
    pub rev: Template,
}

impl TemplatePair {
    pub fn get(&self, direction: Direction) -> &Template {
        match direction {
            Direction::Fwd => &self.fwd,
            Direction::Rev => &self.rev,
        }
    }
}

/// Where a relation's type signature came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignatureSource {
    /// Written in the schema file; derivation leaves it alone.
    Explicit,
    /// Collected from observed data.
    Derived,
    /// Not yet known.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationDef {
    pub name: String,
    pub subj_types: BTreeSet<String>,
    pub obj_types: BTreeSet<String>,
    pub signature: SignatureSource,
    templates: [TemplatePair; 3],
}

impl RelationDef {
    pub fn templates(&self, variant: Variant) -> &TemplatePair {
        &self.templates[variant.slot()]
    }

    pub fn template(&self, variant: Variant, direction: Direction) -> &Template {
        self.templates(variant).get(direction)
    }

    /// True when `(subj_type, obj_type)` falls inside the signature.
    pub fn accepts(&self, subj_type: &str, obj_type: &str) -> bool {
        type_matches(&self.subj_types, subj_type) && type_matches(&self.obj_types, obj_type)
    }
}

fn type_matches(set: &BTreeSet<String>, tag: &str) -> bool {
    set.contains(tag) || set.contains(ANY_TYPE)
}

/// The relation inventory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSchema {
    relations: Vec<RelationDef>,
    null_label: String,
    forced_choice: bool,
    index: HashMap<String, usize>,
}

// On-disk document.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaDocument {
    pub version: u32,
    #[serde(default = "default_null_label")]
    pub null_label: String,
    #[serde(default)]
    pub forced_choice: bool,
    #[serde(default = "default_true")]
    pub auto_templates: bool,
    pub relations: Vec<RelationEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationEntry {
    pub name: String,
    #[serde(default)]
    pub subj_types: Vec<String>,
    #[serde(default)]
    pub obj_types: Vec<String>,
    #[serde(default)]
    pub templates: BTreeMap<Variant, PatternPair>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternPair {
    pub fwd: String,
    pub rev: String,
}

fn default_null_label() -> String {
    "no_relation".to_string()
}

fn default_true() -> bool {
    true
}

fn escape_braces(s: &str) -> String {
    s.replace('{', "{{").replace('}', "}}")
}

/// Pattern generated for a variant that the schema file leaves out.
fn generated_pattern(variant: Variant, name: &str, position: usize, direction: Direction) -> Option<String> {
    let marker = match direction {
        Direction::Fwd => "t",
        Direction::Rev => "h",
    };
    match variant {
        Variant::Question => None,
        Variant::Relation => Some(format!("{} {marker} {{e}}", escape_braces(name))),
        Variant::Token => Some(format!("r{} {marker} {{e}}", position + 1)),
    }
}

/// Reads and validates a schema file.
pub fn load_schema(path: impl AsRef<Path>) -> Result<RelationSchema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RelationSchema::from_json(&text)
}

impl RelationSchema {
    /// The 41-relation TACRED inventory with its question templates.
    pub fn tacred() -> RelationSchema {
        RelationSchema::from_json(TACRED_SCHEMA).expect("bundled TACRED schema is valid")
    }

    pub fn from_json(text: &str) -> Result<RelationSchema> {
        let doc: SchemaDocument =
            serde_json::from_str(text).map_err(|e| Error::syntax("schema", e))?;
        RelationSchema::from_document(doc)
    }

    pub fn from_document(doc: SchemaDocument) -> Result<RelationSchema> {
        if doc.relations.is_empty() {
            return Err(Error::Schema("schema has no relations".into()));
        }
        if doc.null_label.is_empty() {
            return Err(Error::Schema("null_label is empty".into()));
        }
        let mut relations = Vec::with_capacity(doc.relations.len());
        let mut index = HashMap::new();
        for (position, entry) in doc.relations.into_iter().enumerate() {
            if entry.name.is_empty() {
                return Err(Error::Schema(format!("relation #{position} has an empty name")));
            }
            if entry.name.contains("::") {
                return Err(Error::Schema(format!(
                    "relation name {:?} contains the reserved separator '::'",
                    entry.name
                )));
            }
            if entry.name == doc.null_label {
                return Err(Error::Schema(format!(
                    "null label {:?} listed as a relation",
                    entry.name
                )));
            }
            if index.insert(entry.name.clone(), position).is_some() {
                return Err(Error::Schema(format!("duplicate relation name {:?}", entry.name)));
            }
            let mut pairs = Vec::with_capacity(3);
            for variant in Variant::ALL {
                let pair = match entry.templates.get(&variant) {
                    Some(p) => TemplatePair {
                        fwd: Template::parse(&p.fwd, variant)?,
                        rev: Template::parse(&p.rev, variant)?,
                    },
                    None => {
                        let generated = doc
                            .auto_templates
                            .then(|| {
                                Direction::BOTH.map(|d| generated_pattern(variant, &entry.name, position, d))
                            })
                            .and_then(|[f, r]| Some((f?, r?)));
                        let Some((fwd, rev)) = generated else {
                            return Err(Error::Schema(format!(
                                "relation {:?} has no {variant} templates",
                                entry.name
                            )));
                        };
                        TemplatePair {
                            fwd: Template::parse(&fwd, variant)?,
                            rev: Template::parse(&rev, variant)?,
                        }
                    }
                };
                pairs.push(pair);
            }
            let subj_types: BTreeSet<String> = entry.subj_types.into_iter().collect();
            let obj_types: BTreeSet<String> = entry.obj_types.into_iter().collect();
            let signature = match (subj_types.is_empty(), obj_types.is_empty()) {
                (false, false) => SignatureSource::Explicit,
                (true, true) => SignatureSource::Missing,
                _ => {
                    return Err(Error::Schema(format!(
                        "relation {:?} has a half-specified type signature",
                        entry.name
                    )))
                }
            };
            let templates: [TemplatePair; 3] = pairs.try_into().expect("three variants");
            relations.push(RelationDef {
                name: entry.name,
                subj_types,
                obj_types,
                signature,
                templates,
            });
        }
        let schema = RelationSchema {
            relations,
            null_label: doc.null_label,
            forced_choice: doc.forced_choice,
            index,
        };
        schema.check_distinct_questions()?;
        Ok(schema)
    }

    /// Token-variant patterns must be unique across the schema.
    fn check_distinct_questions(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for rel in &self.relations {
            for d in Direction::BOTH {
                let p = rel.template(Variant::Token, d).pattern().to_string();
                if let Some(prev) = seen.insert(p.clone(), rel.name.clone()) {
                    return Err(Error::Schema(format!(
                        "token template {p:?} shared by {prev:?} and {:?}",
                        rel.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_document(&self) -> SchemaDocument {
        SchemaDocument {
            version: 1,
            null_label: self.null_label.clone(),
            forced_choice: self.forced_choice,
            auto_templates: false,
            relations: self
                .relations
                .iter()
                .map(|r| RelationEntry {
                    name: r.name.clone(),
                    subj_types: r.subj_types.iter().cloned().collect(),
                    obj_types: r.obj_types.iter().cloned().collect(),
                    templates: Variant::ALL
                        .iter()
                        .map(|&v| {
                            let pair = r.templates(v);
                            (
                                v,
                                PatternPair {
                                    fwd: pair.fwd.pattern().to_string(),
                                    rev: pair.rev.pattern().to_string(),
                                },
                            )
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_document()).expect("schema serializes");
        s.push('\n');
        s
    }

    pub fn relations(&self) -> &[RelationDef] {
        &self.relations
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn null_label(&self) -> &str {
        &self.null_label
    }

    pub fn forced_choice(&self) -> bool {
        self.forced_choice
    }

    pub fn with_forced_choice(mut self, forced_choice: bool) -> Self {
        self.forced_choice = forced_choice;
        self
    }

    pub fn relation(&self, name: &str) -> Option<&RelationDef> {
        self.index.get(name).map(|&i| &self.relations[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Every relation has a non-empty signature.
    pub fn is_finalized(&self) -> bool {
        self.relations.iter().all(|r| r.signature != SignatureSource::Missing)
    }

    pub fn ensure_finalized(&self) -> Result<()> {
        match self.relations.iter().find(|r| r.signature == SignatureSource::Missing) {
            Some(r) => Err(Error::Schema(format!("relation {} has empty type signature", r.name))),
            None => Ok(()),
        }
    }

    /// Drops every signature so that [`derive_compatibility`] recomputes all of them.
    pub fn clear_signatures(mut self) -> Self {
        for r in &mut self.relations {
            r.subj_types.clear();
            r.obj_types.clear();
            r.signature = SignatureSource::Missing;
        }
        self
    }

    /// Relations whose signature admits `(subj_type, obj_type)`, in schema order.
    pub fn compatible_relations(&self, subj_type: &str, obj_type: &str) -> Vec<&str> {
        self.relations
            .iter()
            .filter(|r| r.accepts(subj_type, obj_type))
            .map(|r| r.name.as_str())
            .collect()
    }

    /// Renders the question for `relation` asked about `entity_text`.
    pub fn instantiate(
        &self,
        relation: &str,
        direction: Direction,
        variant: Variant,
        entity_text: &str,
    ) -> Result<String> {
        let rel = self
            .relation(relation)
            .ok_or_else(|| Error::Schema(format!("unknown relation {relation:?}")))?;
        if entity_text.is_empty() {
            return Err(Error::Schema("empty entity text".into()));
        }
        Ok(rel.template(variant, direction).render(entity_text))
    }
}

/// Fills missing type signatures from the entity types observed with each
/// relation. Signatures written in the schema file are kept as they are.
pub fn derive_compatibility(dataset: &[RcInstance], schema: &RelationSchema) -> Result<RelationSchema> {
    let mut observed: Vec<(BTreeSet<String>, BTreeSet<String>)> =
        vec![Default::default(); schema.relations.len()];
    for rc in dataset {
        let Some(label) = rc.effective_label(schema.null_label()) else {
            continue;
        };
        let pos = schema.position(label).ok_or_else(|| {
            Error::Schema(format!(
                "relation {label:?} in instance {:?} is absent from the schema",
                rc.id
            ))
        })?;
        observed[pos].0.insert(rc.subj_type.clone());
        observed[pos].1.insert(rc.obj_type.clone());
    }
    let mut out = schema.clone();
    for (rel, (subj, obj)) in out.relations.iter_mut().zip(observed) {
        if rel.signature == SignatureSource::Explicit {
            continue;
        }
        rel.subj_types = subj;
        rel.obj_types = obj;
        rel.signature = if rel.subj_types.is_empty() {
            SignatureSource::Missing
        } else {
            SignatureSource::Derived
        };
    }
    out.ensure_finalized()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::span::TokenSpan;

    fn small_schema() -> RelationSchema {
        RelationSchema::from_json(
            r#"{"version":1,"relations":[
              {"name":"per:date_of_birth","subj_types":["PERSON"],"obj_types":["DATE"],
               "templates":{"question":{"fwd":"When was {e} born?","rev":"Who was born in {e}?"}}},
              {"name":"per:date_of_death","subj_types":["PERSON"],"obj_types":["DATE"],
               "templates":{"question":{"fwd":"When did {e} die?","rev":"Who died on {e}?"}}},
              {"name":"per:title","subj_types":["PERSON"],"obj_types":["TITLE"],
               "templates":{"question":{"fwd":"What is {e}'s title?","rev":"Who has the title {e}"}}}
            ]}"#,
        )
        .unwrap()
    }

    fn rc(id: &str, rel: &str, st: &str, ot: &str) -> RcInstance {
        RcInstance {
            id: id.into(),
            tokens: vec!["a".into(), "b".into()],
            subj: TokenSpan::new(0, 0),
            obj: TokenSpan::new(1, 1),
            subj_type: st.into(),
            obj_type: ot.into(),
            relation: rel.into(),
            gold: None,
        }
    }

    #[test]
    fn tacred_schema_has_41_relations() {
        let s = RelationSchema::tacred();
        assert_eq!(s.len(), 41);
        assert_eq!(s.null_label(), "no_relation");
        assert!(s.is_finalized());
        assert!(!s.forced_choice());
    }

    #[test]
    fn empty_relation_list_is_rejected() {
        let err = RelationSchema::from_json(r#"{"version":1,"relations":[]}"#).unwrap_err();
        assert!(err.to_string().contains("schema has no relations"), "{err}");
    }

    #[test]
    fn duplicate_relation_is_rejected() {
        let err = RelationSchema::from_json(
            r#"{"version":1,"relations":[
              {"name":"per:title","templates":{"question":{"fwd":"{e}?","rev":"{e}!"}}},
              {"name":"per:title","templates":{"question":{"fwd":"{e}?","rev":"{e}!"}}}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate relation name"), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let err = RelationSchema::from_json("{\n\"version\": 1,\n\"relations\": [,]}").unwrap_err();
        match err {
            Error::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_variant_without_autogeneration() {
        let err = RelationSchema::from_json(
            r#"{"version":1,"auto_templates":false,"relations":[
              {"name":"r","templates":{"question":{"fwd":"{e}?","rev":"{e}!"}}}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("no relation templates"), "{err}");
        let err = RelationSchema::from_json(r#"{"version":1,"relations":[{"name":"r"}]}"#).unwrap_err();
        assert!(err.to_string().contains("no question templates"), "{err}");
    }

    #[test]
    fn null_label_cannot_be_a_relation() {
        let err = RelationSchema::from_json(
            r#"{"version":1,"relations":[
              {"name":"no_relation","templates":{"question":{"fwd":"{e}?","rev":"{e}!"}}}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn template_slot_rules() {
        assert!(Template::parse("", Variant::Question).is_err());
        assert!(Template::parse("no slot", Variant::Question).is_err());
        assert!(Template::parse("{e} and {e}", Variant::Question).is_err());
        assert!(Template::parse("{x} is", Variant::Question).is_err());
        assert!(Template::parse("a } b {e}", Variant::Question).is_err());
        let t = Template::parse("{{literal}} {e}?", Variant::Question).unwrap();
        assert_eq!(t.render("Sam"), "{literal} Sam?");
    }

    #[test]
    fn instantiates_all_variants() {
        let s = RelationSchema::tacred();
        assert_eq!(
            s.instantiate("per:date_of_birth", Direction::Fwd, Variant::Question, "Sam").unwrap(),
            "When was Sam born?"
        );
        assert_eq!(
            s.instantiate("per:title", Direction::Fwd, Variant::Relation, "John").unwrap(),
            "per:title t John"
        );
        assert_eq!(
            s.instantiate("per:title", Direction::Rev, Variant::Relation, "CEO").unwrap(),
            "per:title h CEO"
        );
        assert_eq!(s.position("per:title"), Some(1));
        assert_eq!(
            s.instantiate("per:title", Direction::Fwd, Variant::Token, "John").unwrap(),
            "r2 t John"
        );
        assert_eq!(
            s.instantiate("per:title", Direction::Rev, Variant::Token, "CEO").unwrap(),
            "r2 h CEO"
        );
    }

    #[test]
    fn instantiate_errors() {
        let s = small_schema();
        assert!(s.instantiate("per:foo", Direction::Fwd, Variant::Question, "Sam").is_err());
        assert!(s.instantiate("per:title", Direction::Fwd, Variant::Question, "").is_err());
    }

    #[test]
    fn compatible_relations_in_schema_order() {
        let s = small_schema();
        assert_eq!(
            s.compatible_relations("PERSON", "DATE"),
            vec!["per:date_of_birth", "per:date_of_death"]
        );
        assert!(s.compatible_relations("ORGANIZATION", "DATE").is_empty());
        assert_eq!(s.compatible_relations("PERSON", "TITLE"), vec!["per:title"]);
    }

    #[test]
    fn wildcard_signature_accepts_everything() {
        let s = RelationSchema::from_json(
            r#"{"version":1,"forced_choice":true,"relations":[
              {"name":"Cause-Effect(e1,e2)","subj_types":["*"],"obj_types":["*"],
               "templates":{"question":{"fwd":"What did {e} cause?","rev":"What caused {e}?"}}}]}"#,
        )
        .unwrap();
        assert_eq!(s.compatible_relations("", "anything"), vec!["Cause-Effect(e1,e2)"]);
        assert!(s.forced_choice());
    }

    #[test]
    fn derives_observed_signatures() {
        let base = small_schema().clear_signatures();
        let data = vec![
            rc("1", "per:date_of_birth", "PERSON", "DATE"),
            rc("2", "per:date_of_death", "PERSON", "DATE"),
            rc("3", "per:title", "PERSON", "TITLE"),
            rc("4", "no_relation", "ORGANIZATION", "DATE"),
        ];
        let s = derive_compatibility(&data, &base).unwrap();
        let dob = s.relation("per:date_of_birth").unwrap();
        assert_eq!(dob.subj_types.iter().collect::<Vec<_>>(), ["PERSON"]);
        assert_eq!(dob.obj_types.iter().collect::<Vec<_>>(), ["DATE"]);
        assert_eq!(dob.signature, SignatureSource::Derived);
    }

    #[test]
    fn derivation_counts_distinct_observed_types() {
        let schema = RelationSchema::from_json(
            r#"{"version":1,"relations":[
              {"name":"per:employee_of","templates":{"question":{"fwd":"Where does {e} work?","rev":"Who is an employee of {e}?"}}},
              {"name":"per:title","templates":{"question":{"fwd":"What is {e}'s title?","rev":"Who has the title {e}"}}}]}"#,
        )
        .unwrap();
        // Ten instances: employee_of under (PERSON, ORGANIZATION) x4 and
        // (PERSON, LOCATION) x2, title under (PERSON, TITLE) x3, one null.
        let mut data = Vec::new();
        for i in 0..4 {
            data.push(rc(&format!("o{i}"), "per:employee_of", "PERSON", "ORGANIZATION"));
        }
        for i in 0..2 {
            data.push(rc(&format!("l{i}"), "per:employee_of", "PERSON", "LOCATION"));
        }
        for i in 0..3 {
            data.push(rc(&format!("t{i}"), "per:title", "PERSON", "TITLE"));
        }
        data.push(rc("n", "no_relation", "ORGANIZATION", "PERSON"));
        let s = derive_compatibility(&data, &schema).unwrap();
        let emp = s.relation("per:employee_of").unwrap();
        assert_eq!(emp.subj_types.len(), 1);
        assert_eq!(
            emp.obj_types.iter().map(String::as_str).collect::<Vec<_>>(),
            ["LOCATION", "ORGANIZATION"]
        );
        assert_eq!(s.compatible_relations("PERSON", "LOCATION"), vec!["per:employee_of"]);
    }

    #[test]
    fn explicit_signature_wins_over_data() {
        let s = small_schema();
        let data = vec![rc("1", "per:title", "PERSON", "MISC")];
        let d = derive_compatibility(&data, &s).unwrap();
        let title = d.relation("per:title").unwrap();
        assert_eq!(title.obj_types.iter().collect::<Vec<_>>(), ["TITLE"]);
        assert_eq!(title.signature, SignatureSource::Explicit);
    }

    #[test]
    fn unobserved_relation_without_signature_fails() {
        let schema = RelationSchema::from_json(
            r#"{"version":1,"relations":[
              {"name":"per:title","templates":{"question":{"fwd":"{e}?","rev":"{e}!"}}},
              {"name":"per:foo","templates":{"question":{"fwd":"{e}?","rev":"{e}!"}}}]}"#,
        )
        .unwrap();
        let err = derive_compatibility(&[rc("1", "per:title", "PERSON", "TITLE")], &schema).unwrap_err();
        assert_eq!(err.to_string(), "schema error: relation per:foo has empty type signature");
    }

    #[test]
    fn data_relation_missing_from_schema_fails() {
        let err = derive_compatibility(&[rc("1", "per:bar", "PERSON", "TITLE")], &small_schema()).unwrap_err();
        assert!(err.to_string().contains("absent from the schema"));
    }

    #[test]
    fn document_round_trip() {
        let s = RelationSchema::tacred();
        let again = RelationSchema::from_json(&s.to_json()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn token_templates_are_distinct() {
        let s = RelationSchema::tacred();
        let mut seen = BTreeSet::new();
        for r in s.relations() {
            for d in Direction::BOTH {
                assert!(seen.insert(r.template(Variant::Token, d).pattern().to_string()));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn instantiate_is_injective(a in "[A-Za-z ]{1,12}", b in "[A-Za-z ]{1,12}") {
            let s = RelationSchema::tacred();
            for r in s.relations() {
                for v in Variant::ALL {
                    for d in Direction::BOTH {
                        let qa = s.instantiate(&r.name, d, v, &a).unwrap();
                        let qb = s.instantiate(&r.name, d, v, &b).unwrap();
                        proptest::prop_assert_eq!(qa == qb, a == b);
                    }
                }
            }
        }

        #[test]
        fn compatible_is_ordered_subset(st in "(PERSON|ORGANIZATION|DATE)", ot in "(PERSON|DATE|TITLE|CITY|NUMBER)") {
            let s = RelationSchema::tacred();
            let got = s.compatible_relations(&st, &ot);
            let positions: Vec<usize> = got.iter().map(|n| s.position(n).unwrap()).collect();
            proptest::prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));
            proptest::prop_assert_eq!(got, s.compatible_relations(&st, &ot));
        }
    }
}
