//! Metrics for relation classification and for binary (CRE-style) decisions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decode::{decode_dataset, CombineMode, DecodeReport, DecodingConfig, Directions, ThresholdTable};
use crate::error::{Error, Result};
use crate::predict::PredictionSet;
use crate::rc::RcInstance;
use crate::schema::RelationSchema;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RcMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: usize,
    /// Instances predicted as a non-null relation.
    pub pred_positive: usize,
    /// Instances whose gold label is a non-null relation.
    pub gold_positive: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_same_ids<A, B>(gold: &BTreeMap<String, A>, pred: &BTreeMap<String, B>) -> Result<()> {
    let only_gold: Vec<&String> = gold.keys().filter(|k| !pred.contains_key(*k)).take(5).collect();
    let only_pred: Vec<&String> = pred.keys().filter(|k| !gold.contains_key(*k)).take(5).collect();
    if only_gold.is_empty() && only_pred.is_empty() {
        return Ok(());
    }
    Err(Error::Evaluation(format!(
        "instance ids differ: without prediction {only_gold:?}, without gold {only_pred:?}"
    )))
}

/// Micro-averaged precision, recall and F1 over non-null labels.
pub fn evaluate_rc(
    gold: &BTreeMap<String, String>,
    pred: &BTreeMap<String, String>,
    null_label: &str,
) -> Result<RcMetrics> {
    check_same_ids(gold, pred)?;
    let mut m = RcMetrics::default();
    for (id, g) in gold {
        let p = &pred[id];
        if g != null_label {
            m.gold_positive += 1;
        }
        if p != null_label {
            m.pred_positive += 1;
            if p == g {
                m.correct += 1;
            }
        }
    }
    m.precision = ratio(m.correct, m.pred_positive);
    m.recall = ratio(m.correct, m.gold_positive);
    m.f1 = if m.precision + m.recall == 0.0 {
        0.0
    } else {
        2.0 * m.precision * m.recall / (m.precision + m.recall)
    };
    Ok(m)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CreMetrics {
    /// Accuracy on instances whose queried relation holds; absent without any.
    pub acc_pos: Option<f64>,
    pub acc_neg: Option<f64>,
    pub acc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub correct_pos: usize,
    pub correct_neg: usize,
}

pub fn evaluate_cre(gold: &BTreeMap<String, bool>, pred: &BTreeMap<String, bool>) -> Result<CreMetrics> {
    check_same_ids(gold, pred)?;
    if gold.is_empty() {
        return Err(Error::Evaluation("no instances to evaluate".into()));
    }
    let mut m = CreMetrics::default();
    for (id, &g) in gold {
        let hit = pred[id] == g;
        if g {
            m.n_pos += 1;
            m.correct_pos += usize::from(hit);
        } else {
            m.n_neg += 1;
            m.correct_neg += usize::from(hit);
        }
    }
    m.acc_pos = (m.n_pos > 0).then(|| ratio(m.correct_pos, m.n_pos));
    m.acc_neg = (m.n_neg > 0).then(|| ratio(m.correct_neg, m.n_neg));
    m.acc = ratio(m.correct_pos + m.correct_neg, m.n_pos + m.n_neg);
    Ok(m)
}

/// Gold labels keyed by instance id; a false binary flag counts as null.
pub fn gold_labels(dataset: &[RcInstance], null_label: &str) -> BTreeMap<String, String> {
    dataset
        .iter()
        .map(|rc| (rc.id.clone(), rc.effective_label(null_label).unwrap_or(null_label).to_string()))
        .collect()
}

/// Gold binary flags; errors on an instance without one.
pub fn gold_flags(dataset: &[RcInstance]) -> Result<BTreeMap<String, bool>> {
    dataset
        .iter()
        .map(|rc| {
            rc.gold
                .map(|g| (rc.id.clone(), g))
                .ok_or_else(|| Error::Evaluation(format!("{}: no gold flag", rc.id)))
        })
        .collect()
}

pub fn predicted_flags(report: &DecodeReport) -> Result<BTreeMap<String, bool>> {
    report
        .decisions
        .iter()
        .map(|d| {
            d.queried_present
                .map(|p| (d.rc_id.clone(), p))
                .ok_or_else(|| Error::Evaluation(format!("{}: not a binary instance", d.rc_id)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub config: DecodingConfig,
    pub rc: RcMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cre: Option<CreMetrics>,
    pub multi_present: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetChecks {
    /// (instance, relation) pairs present under AND but not under OR.
    pub and_not_in_or: usize,
    /// Pairs present with the forward question alone but not under OR.
    pub fwd_not_in_or: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub version: u32,
    pub seed: Option<u64>,
    pub rows: Vec<AblationRow>,
    pub subset_checks: SubsetChecks,
}

pub const ABLATION_ROWS: [(&str, CombineMode, Directions); 3] = [
    ("OR", CombineMode::Or, Directions::Both),
    ("AND", CombineMode::And, Directions::Both),
    ("Single Question", CombineMode::Or, Directions::FwdOnly),
];

fn present_pairs(report: &DecodeReport) -> BTreeSet<(String, String)> {
    report
        .decisions
        .iter()
        .flat_map(|d| {
            d.verdicts
                .iter()
                .filter(|v| v.present)
                .map(move |v| (d.rc_id.clone(), v.relation.clone()))
        })
        .collect()
}

/// Runs OR, AND and forward-only decoding over the same predictions.
/// `base` supplies the options shared by all rows.
pub fn ablation_report(
    dataset: &[RcInstance],
    schema: &RelationSchema,
    preds: &PredictionSet,
    thresholds: &ThresholdTable,
    base: &DecodingConfig,
    workers: usize,
    seed: Option<u64>,
) -> Result<AblationReport> {
    let gold = gold_labels(dataset, schema.null_label());
    let gold_cre = if dataset.iter().all(|rc| rc.gold.is_some()) && !dataset.is_empty() {
        Some(gold_flags(dataset)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut present = Vec::new();
    for (label, mode, directions) in ABLATION_ROWS {
        let config = DecodingConfig {
            mode,
            directions,
            ..*base
        };
        let report = decode_dataset(dataset, schema, preds, thresholds, &config, workers)?;
        let rc = evaluate_rc(&gold, &report.labels(), schema.null_label())?;
        let cre = match &gold_cre {
            Some(g) => Some(evaluate_cre(g, &predicted_flags(&report)?)?),
            None => None,
        };
        present.push(present_pairs(&report));
        rows.push(AblationRow {
            label: label.to_string(),
            config,
            rc,
            cre,
            multi_present: report.counters.multi_present,
        });
    }
    let subset_checks = SubsetChecks {
        and_not_in_or: present[1].difference(&present[0]).count(),
        fwd_not_in_or: present[2].difference(&present[0]).count(),
    };
    Ok(AblationReport {
        version: 1,
        seed,
        rows,
        subset_checks,
    })
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn opt_pct(v: Option<f64>) -> String {
    v.map(pct).unwrap_or_else(|| "-".into())
}

/// Plain-text table, one line per row.
pub fn render_table(rows: &[AblationRow]) -> String {
    let with_cre = rows.iter().any(|r| r.cre.is_some());
    let mut out = String::new();
    let _ = write!(out, "{:<16} {:>7} {:>7} {:>7}", "mode", "P", "R", "F1");
    if with_cre {
        let _ = write!(out, " {:>7} {:>7} {:>7}", "Acc+", "Acc-", "Acc");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{:<16} {:>7} {:>7} {:>7}",
            r.label,
            pct(r.rc.precision),
            pct(r.rc.recall),
            pct(r.rc.f1)
        );
        if let Some(c) = &r.cre {
            let _ = write!(out, " {:>7} {:>7} {:>7}", opt_pct(c.acc_pos), opt_pct(c.acc_neg), pct(c.acc));
        }
        out.push('\n');
    }
    out
}
