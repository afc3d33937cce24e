//! Seeded synthetic RC corpora for tests and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rc::RcInstance;
use crate::schema::RelationSchema;
use crate::span::TokenSpan;

const SCHEMA: &str = r#"{
  "version": 1,
  "null_label": "no_relation",
  "relations": [
    {"name": "per:date_of_birth", "subj_types": ["PERSON"], "obj_types": ["DATE"],
     "templates": {"question": {"fwd": "When was {e} born?", "rev": "Who was born on {e}?"}}},
    {"name": "per:date_of_death", "subj_types": ["PERSON"], "obj_types": ["DATE"],
     "templates": {"question": {"fwd": "When did {e} die?", "rev": "Who died on {e}?"}}},
    {"name": "per:employee_of", "subj_types": ["PERSON"], "obj_types": ["ORGANIZATION"],
     "templates": {"question": {"fwd": "Where does {e} work?", "rev": "Who works for {e}?"}}},
    {"name": "per:city_of_birth", "subj_types": ["PERSON"], "obj_types": ["CITY"],
     "templates": {"question": {"fwd": "In which city was {e} born?", "rev": "Who was born in {e}?"}}},
    {"name": "org:founded", "subj_types": ["ORGANIZATION"], "obj_types": ["DATE"],
     "templates": {"question": {"fwd": "When was {e} founded?", "rev": "Which organization was founded on {e}?"}}},
    {"name": "org:city_of_headquarters", "subj_types": ["ORGANIZATION"], "obj_types": ["CITY"],
     "templates": {"question": {"fwd": "Where is {e} headquartered?", "rev": "Which organization is based in {e}?"}}}
  ]
}"#;

/// The six-relation schema the synthetic corpus is labeled with.
pub fn synthetic_schema() -> RelationSchema {
    RelationSchema::from_json(SCHEMA).expect("built-in synthetic schema")
}

const FIRST: &[&str] = &["Ada", "Grace", "Alan", "Marie", "Zoë", "Kofi", "Ines", "Ravi", "Lena", "Omar"];
const LAST: &[&str] = &["Lovelace", "Hopper", "Turing", "Curie", "Okafor", "Mendes", "Shah", "Berg"];
const ORG_HEAD: &[&str] = &["Acme", "Globex", "Initech", "Umbrella", "Stark", "Wayne", "Hooli"];
const ORG_TAIL: &[&str] = &["Corp", "Labs", "Industries", "Group", "Holdings"];
const CITIES: &[&str] = &["Paris", "Lagos", "Osaka", "Lima", "Oslo", "Pune", "New York", "São Paulo"];
const MONTHS: &[&str] = &["January", "March", "May", "July", "September", "November"];
const FILLER: &[&str] = &[
    "the", "report", "said", "that", "in", "a", "statement", "on", "Tuesday", "officials", "noted", "and",
    "according", "to", "sources", ",", "also", "later", "confirmed", "(", ")", "was", "with",
];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty word list")
}

fn entity(rng: &mut ChaCha8Rng, ty: &str) -> Vec<String> {
    let words: Vec<&str> = match ty {
        "PERSON" => vec![pick(rng, FIRST), pick(rng, LAST)],
        "ORGANIZATION" => vec![pick(rng, ORG_HEAD), pick(rng, ORG_TAIL)],
        "CITY" => pick(rng, CITIES).split(' ').collect(),
        _ => {
            let day = rng.gen_range(1..=28).to_string();
            let year = rng.gen_range(1900..2020).to_string();
            return vec![pick(rng, MONTHS).to_string(), day, year];
        }
    };
    words.into_iter().map(String::from).collect()
}

fn filler(rng: &mut ChaCha8Rng, max: usize) -> Vec<String> {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| pick(rng, FILLER).to_string()).collect()
}

/// Entity type pairs, including one no relation accepts.
const PAIRS: &[(&str, &str)] = &[
    ("PERSON", "DATE"),
    ("PERSON", "ORGANIZATION"),
    ("PERSON", "CITY"),
    ("ORGANIZATION", "DATE"),
    ("ORGANIZATION", "CITY"),
    ("ORGANIZATION", "PERSON"),
];

/// `n` instances labeled against [`synthetic_schema`]; gold labels are always
/// type-compatible or null. Identical seeds give identical corpora.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<RcInstance> {
    let schema = synthetic_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n.to_string().len();
    (0..n)
        .map(|i| {
            let (st, ot) = *PAIRS.choose(&mut rng).expect("pairs");
            let compatible = schema.compatible_relations(st, ot);
            let relation = if compatible.is_empty() || rng.gen_bool(0.3) {
                schema.null_label().to_string()
            } else {
                compatible.choose(&mut rng).expect("non-empty").to_string()
            };
            let subj = entity(&mut rng, st);
            let obj = entity(&mut rng, ot);
            let subj_first = rng.gen_bool(0.7);
            let mut tokens = filler(&mut rng, 4);
            let place = |tokens: &mut Vec<String>, words: &[String]| {
                let start = tokens.len();
                tokens.extend_from_slice(words);
                TokenSpan::new(start, tokens.len() - 1)
            };
            let (s, o) = if subj_first {
                let s = place(&mut tokens, &subj);
                tokens.extend(filler(&mut rng, 6));
                let o = place(&mut tokens, &obj);
                (s, o)
            } else {
                let o = place(&mut tokens, &obj);
                tokens.extend(filler(&mut rng, 6));
                let s = place(&mut tokens, &subj);
                (s, o)
            };
            tokens.extend(filler(&mut rng, 4));
            tokens.push(".".into());
            RcInstance {
                id: format!("syn{i:0width$}"),
                tokens,
                subj: s,
                obj: o,
                subj_type: st.into(),
                obj_type: ot.into(),
                relation,
                gold: None,
            }
        })
        .collect()
}
