//! RC → SP reduction.
//!
//! Every RC instance becomes two questions per compatible relation: one asked
//! about the subject (answer: the object) and one asked about the object
//! (answer: the subject). Only the gold relation's questions are answerable.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rc::RcInstance;
use crate::schema::{Direction, RelationSchema, Variant};
use crate::span::{render_context, CharSpan};

/// Gold answer of an answerable question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub span: CharSpan,
    pub text: String,
}

/// Links a question back to the RC instance and template it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub rc_id: String,
    pub relation: String,
    pub direction: Direction,
    pub variant: Variant,
    /// Span of the entity the question asks for, whether or not it is the answer.
    pub expected_entity: CharSpan,
}

/// One generated question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpInstance {
    pub qid: String,
    pub context: String,
    pub question: String,
    pub answer: Option<Answer>,
    pub provenance: Option<Provenance>,
}

impl SpInstance {
    pub fn is_answerable(&self) -> bool {
        self.answer.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpDataset {
    pub instances: Vec<SpInstance>,
    /// `None` for datasets not produced by reduction (e.g. SQuAD or mixtures).
    pub variant: Option<Variant>,
    pub source: String,
}

impl SpDataset {
    pub fn empty(source: impl Into<String>, variant: Option<Variant>) -> Self {
        SpDataset {
            instances: Vec::new(),
            variant,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn qids(&self) -> impl Iterator<Item = &str> {
        self.instances.iter().map(|i| i.qid.as_str())
    }

    pub fn get(&self, qid: &str) -> Option<&SpInstance> {
        self.instances.iter().find(|i| i.qid == qid)
    }
}

/// `{rc_id}::{relation}::{fwd|rev}`.
pub fn make_qid(rc_id: &str, relation: &str, direction: Direction) -> String {
    format!("{rc_id}::{relation}::{direction}")
}

/// Inverse of [`make_qid`]; `None` for foreign ids.
pub fn split_qid(qid: &str) -> Option<(&str, &str, Direction)> {
    let mut parts = qid.rsplitn(3, "::");
    let direction = parts.next()?.parse().ok()?;
    let relation = parts.next()?;
    let rc_id = parts.next()?;
    Some((rc_id, relation, direction))
}

/// Questions generated for one RC instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reduced {
    pub instances: Vec<SpInstance>,
    /// Gold relation is a real relation but fails the type-compatibility check.
    pub gold_incompatible: bool,
}

pub fn reduce_instance(rc: &RcInstance, schema: &RelationSchema, variant: Variant) -> Result<Reduced> {
    let ctx = render_context(&rc.tokens)?;
    let subj_span = ctx.char_span(rc.subj);
    let obj_span = ctx.char_span(rc.obj);
    let subj_text = rc.subj_text();
    let obj_text = rc.obj_text();
    let gold = rc.effective_label(schema.null_label());

    let compatible = schema.compatible_relations(&rc.subj_type, &rc.obj_type);
    let gold_incompatible = gold.is_some_and(|g| !compatible.contains(&g));

    let mut instances = Vec::with_capacity(2 * compatible.len());
    for relation in compatible {
        let positive = gold == Some(relation);
        for direction in Direction::BOTH {
            let (arg, expected_span, expected_text) = match direction {
                Direction::Fwd => (&subj_text, obj_span, &obj_text),
                Direction::Rev => (&obj_text, subj_span, &subj_text),
            };
            let question = schema.instantiate(relation, direction, variant, arg)?;
            instances.push(SpInstance {
                qid: make_qid(&rc.id, relation, direction),
                context: ctx.text.clone(),
                question,
                answer: positive.then(|| Answer {
                    span: expected_span,
                    text: expected_text.clone(),
                }),
                provenance: Some(Provenance {
                    rc_id: rc.id.clone(),
                    relation: relation.to_string(),
                    direction,
                    variant,
                    expected_entity: expected_span,
                }),
            });
        }
    }
    Ok(Reduced {
        instances,
        gold_incompatible,
    })
}

/// Counts reported by [`reduce_dataset`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionSummary {
    pub rc_instances: usize,
    pub sp_instances: usize,
    pub positives: usize,
    pub negatives: usize,
    /// RC instances with no compatible relation.
    pub skipped: usize,
    /// Gold relations dropped to negatives by the type check.
    pub gold_incompatible: usize,
}

/// Reduces a corpus. `workers == 0` uses rayon's default pool size; the
/// output does not depend on the worker count.
pub fn reduce_dataset(
    dataset: &[RcInstance],
    schema: &RelationSchema,
    variant: Variant,
    source: &str,
    workers: usize,
) -> Result<(SpDataset, ReductionSummary)> {
    schema.ensure_finalized()?;
    let mut seen = HashSet::with_capacity(dataset.len());
    for rc in dataset {
        if !seen.insert(rc.id.as_str()) {
            return Err(Error::DuplicateId(rc.id.clone()));
        }
    }

    let reduced: Vec<Reduced> = with_pool(workers, || {
        dataset
            .par_iter()
            .map(|rc| reduce_instance(rc, schema, variant))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut summary = ReductionSummary {
        rc_instances: dataset.len(),
        ..Default::default()
    };
    let mut instances = Vec::new();
    for r in reduced {
        if r.instances.is_empty() {
            summary.skipped += 1;
        }
        if r.gold_incompatible {
            summary.gold_incompatible += 1;
        }
        instances.extend(r.instances);
    }
    instances.sort_by(|a, b| a.qid.cmp(&b.qid));
    summary.sp_instances = instances.len();
    summary.positives = instances.iter().filter(|i| i.is_answerable()).count();
    summary.negatives = summary.sp_instances - summary.positives;
    if summary.gold_incompatible > 0 {
        tracing::warn!(
            count = summary.gold_incompatible,
            "gold relations outside the type signature were kept as negatives"
        );
    }
    Ok((
        SpDataset {
            instances,
            variant: Some(variant),
            source: source.to_string(),
        },
        summary,
    ))
}

/// Runs `f` on a dedicated pool of `workers` threads (0: rayon default).
pub fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
        .install(f)
}
