//! From per-question predictions to relation labels.
//!
//! A directional question "hits" when its predicted span is compatible with
//! the expected entity and its margin clears the template's threshold. The two
//! directions of a relation are combined with OR or AND; across relations the
//! present verdict with the largest combined margin wins.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::to_json_bytes;
use crate::predict::{PredictionSet, SpanPrediction};
use crate::rc::RcInstance;
use crate::reduction::{make_qid, with_pool, SpDataset};
use crate::schema::{Direction, RelationSchema};
use crate::span::{render_context, CharSpan};

/// Two non-empty spans are compatible when one contains the other.
pub fn spans_compatible(a: CharSpan, b: CharSpan) -> bool {
    !a.is_empty() && !b.is_empty() && (a.contains(&b) || b.contains(&a))
}

/// The predicted span with surrounding whitespace removed, if anything is left.
pub fn trimmed_span(pred: &SpanPrediction) -> Option<CharSpan> {
    let span = pred.char_span?;
    let lead = pred.text.chars().take_while(|c| c.is_whitespace()).count();
    let trail = pred.text.chars().rev().take_while(|c| c.is_whitespace()).count();
    let trimmed = CharSpan::new(span.start + lead, span.end.saturating_sub(trail));
    (!trimmed.is_empty() && lead < span.len()).then_some(trimmed)
}

/// `pred` answers, with margin strictly above `threshold`, a span compatible with `expected`.
pub fn question_hit(pred: &SpanPrediction, expected: CharSpan, threshold: f64) -> bool {
    pred.margin() > threshold && trimmed_span(pred).is_some_and(|s| spans_compatible(s, expected))
}

fn answers_compatibly(pred: &SpanPrediction, expected: CharSpan) -> bool {
    trimmed_span(pred).is_some_and(|s| spans_compatible(s, expected))
}

/// Threshold per (relation, direction) with a global fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    pub by_template: BTreeMap<(String, Direction), f64>,
    pub global_fallback: f64,
}

pub const GLOBAL_KEY: &str = "::global";

impl ThresholdTable {
    pub fn uniform(threshold: f64) -> Self {
        ThresholdTable {
            by_template: BTreeMap::new(),
            global_fallback: threshold,
        }
    }

    pub fn get(&self, relation: &str, direction: Direction) -> f64 {
        self.by_template
            .get(&(relation.to_string(), direction))
            .copied()
            .unwrap_or(self.global_fallback)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut map: BTreeMap<String, f64> = self
            .by_template
            .iter()
            .map(|((r, d), t)| (make_template_key(r, *d), *t))
            .collect();
        map.insert(GLOBAL_KEY.to_string(), self.global_fallback);
        to_json_bytes(&map)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let map: BTreeMap<String, f64> =
            serde_json::from_slice(bytes).map_err(|e| Error::syntax("threshold table", e))?;
        let mut global = None;
        let mut by_template = BTreeMap::new();
        for (key, value) in map {
            if !value.is_finite() {
                return Err(Error::Calibration(format!("{key}: non-finite threshold")));
            }
            if key == GLOBAL_KEY {
                global = Some(value);
                continue;
            }
            let (rel, dir) = key
                .rsplit_once("::")
                .ok_or_else(|| Error::Calibration(format!("bad threshold key {key:?}")))?;
            let dir: Direction = dir
                .parse()
                .map_err(|_| Error::Calibration(format!("bad threshold key {key:?}")))?;
            by_template.insert((rel.to_string(), dir), value);
        }
        let global_fallback =
            global.ok_or_else(|| Error::Calibration(format!("threshold table lacks {GLOBAL_KEY:?}")))?;
        Ok(ThresholdTable {
            by_template,
            global_fallback,
        })
    }
}

fn make_template_key(relation: &str, direction: Direction) -> String {
    format!("{relation}::{direction}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CombineMode {
    Or,
    And,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directions {
    Both,
    FwdOnly,
}

impl FromStr for CombineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "or" => Ok(CombineMode::Or),
            "and" => Ok(CombineMode::And),
            _ => Err(Error::Schema(format!("unknown combination mode {s:?}"))),
        }
    }
}

impl FromStr for Directions {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(Directions::Both),
            "fwd_only" | "fwd-only" => Ok(Directions::FwdOnly),
            _ => Err(Error::Schema(format!("unknown direction setting {s:?}"))),
        }
    }
}

impl fmt::Display for CombineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CombineMode::Or => "OR",
            CombineMode::And => "AND",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub mode: CombineMode,
    pub directions: Directions,
    pub forced_choice: bool,
    /// Treat a missing prediction as a miss and count it instead of failing.
    pub allow_missing: bool,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            mode: CombineMode::Or,
            directions: Directions::Both,
            forced_choice: false,
            allow_missing: false,
        }
    }
}

impl DecodingConfig {
    pub fn new(mode: CombineMode, directions: Directions) -> Result<Self> {
        let c = DecodingConfig {
            mode,
            directions,
            ..Default::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.directions == Directions::FwdOnly && self.mode == CombineMode::And {
            return Err(Error::Schema("fwd_only decoding requires OR mode".into()));
        }
        Ok(())
    }
}

/// Decision for one (instance, relation).
#[derive(Debug, Clone, PartialEq)]
pub struct RelationVerdict {
    pub relation: String,
    pub present: bool,
    pub hit_fwd: bool,
    pub hit_rev: bool,
    /// Margin above threshold of the deciding direction(s); −∞ when absent.
    pub combined_margin: f64,
    /// Same combination computed without requiring hits; ranks candidates
    /// under forced choice.
    pub score: f64,
    pub missing_predictions: usize,
}

/// Expected entity spans of one RC instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntitySpans {
    pub subj: CharSpan,
    pub obj: CharSpan,
}

impl EntitySpans {
    pub fn from_rc(rc: &RcInstance) -> Result<Self> {
        let ctx = render_context(&rc.tokens)?;
        Ok(EntitySpans {
            subj: ctx.char_span(rc.subj),
            obj: ctx.char_span(rc.obj),
        })
    }

    /// The entity a question in `direction` asks for.
    pub fn expected(&self, direction: Direction) -> CharSpan {
        match direction {
            Direction::Fwd => self.obj,
            Direction::Rev => self.subj,
        }
    }
}

pub fn decode_binary(
    rc_id: &str,
    relation: &str,
    spans: EntitySpans,
    preds: &PredictionSet,
    thresholds: &ThresholdTable,
    config: &DecodingConfig,
) -> Result<RelationVerdict> {
    let mut missing = 0;
    let mut direction = |d: Direction| -> Result<(bool, f64)> {
        let qid = make_qid(rc_id, relation, d);
        let Some(pred) = preds.get(&qid) else {
            if config.allow_missing {
                missing += 1;
                return Ok((false, f64::NEG_INFINITY));
            }
            return Err(Error::MissingPrediction(qid));
        };
        let tau = thresholds.get(relation, d);
        let term = pred.margin() - tau;
        Ok((question_hit(pred, spans.expected(d), tau), term))
    };

    let (hit_fwd, term_fwd) = direction(Direction::Fwd)?;
    let (hit_rev, term_rev) = match config.directions {
        Directions::Both => direction(Direction::Rev)?,
        Directions::FwdOnly => (false, f64::NEG_INFINITY),
    };

    let (present, combined, score) = match (config.directions, config.mode) {
        (Directions::FwdOnly, _) => (hit_fwd, term_fwd, term_fwd),
        (Directions::Both, CombineMode::Or) => {
            let combined = match (hit_fwd, hit_rev) {
                (true, true) => term_fwd.max(term_rev),
                (true, false) => term_fwd,
                (false, true) => term_rev,
                (false, false) => f64::NEG_INFINITY,
            };
            (hit_fwd || hit_rev, combined, term_fwd.max(term_rev))
        }
        (Directions::Both, CombineMode::And) => {
            let m = term_fwd.min(term_rev);
            (hit_fwd && hit_rev, m, m)
        }
    };

    Ok(RelationVerdict {
        relation: relation.to_string(),
        present,
        hit_fwd,
        hit_rev,
        combined_margin: if present { combined } else { f64::NEG_INFINITY },
        score,
        missing_predictions: missing,
    })
}

/// Decision for one RC instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDecision {
    pub rc_id: String,
    pub label: String,
    pub verdicts: Vec<RelationVerdict>,
    /// More than one relation present.
    pub multi_present: bool,
    /// Label picked by forced choice with no relation present.
    pub forced: bool,
    /// For binary (CRE-style) instances: whether the queried relation is present.
    pub queried_present: Option<bool>,
}

fn pick_max<'a>(verdicts: impl Iterator<Item = (&'a str, f64)>) -> Option<&'a str> {
    let mut best: Option<(&str, f64)> = None;
    for (name, m) in verdicts {
        best = match best {
            None => Some((name, m)),
            Some((bn, bm)) if m > bm || (m == bm && name < bn) => Some((name, m)),
            keep => keep,
        };
    }
    best.map(|(n, _)| n)
}

pub fn decode_multiclass(
    rc: &RcInstance,
    schema: &RelationSchema,
    preds: &PredictionSet,
    thresholds: &ThresholdTable,
    config: &DecodingConfig,
) -> Result<InstanceDecision> {
    let spans = EntitySpans::from_rc(rc)?;
    let verdicts = schema
        .compatible_relations(&rc.subj_type, &rc.obj_type)
        .into_iter()
        .map(|r| decode_binary(&rc.id, r, spans, preds, thresholds, config))
        .collect::<Result<Vec<_>>>()?;

    let present = verdicts.iter().filter(|v| v.present).count();
    let chosen = if present > 0 {
        pick_max(verdicts.iter().filter(|v| v.present).map(|v| (v.relation.as_str(), v.combined_margin)))
    } else if config.forced_choice {
        pick_max(verdicts.iter().map(|v| (v.relation.as_str(), v.score)))
    } else {
        None
    };
    let queried_present = rc
        .gold
        .map(|_| verdicts.iter().any(|v| v.present && v.relation == rc.relation));
    Ok(InstanceDecision {
        rc_id: rc.id.clone(),
        label: chosen.unwrap_or(schema.null_label()).to_string(),
        forced: present == 0 && chosen.is_some(),
        multi_present: present > 1,
        verdicts,
        queried_present,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeCounters {
    pub instances: usize,
    pub multi_present: usize,
    pub multi_present_rate: f64,
    pub forced: usize,
    pub missing_predictions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    pub config: DecodingConfig,
    pub decisions: Vec<InstanceDecision>,
    pub counters: DecodeCounters,
}

impl DecodeReport {
    pub fn labels(&self) -> BTreeMap<String, String> {
        self.decisions.iter().map(|d| (d.rc_id.clone(), d.label.clone())).collect()
    }
}

/// Decodes every instance; output is ordered by rc id and independent of `workers`.
pub fn decode_dataset(
    dataset: &[RcInstance],
    schema: &RelationSchema,
    preds: &PredictionSet,
    thresholds: &ThresholdTable,
    config: &DecodingConfig,
    workers: usize,
) -> Result<DecodeReport> {
    config.validate()?;
    let mut decisions = with_pool(workers, || {
        dataset
            .par_iter()
            .map(|rc| decode_multiclass(rc, schema, preds, thresholds, config))
            .collect::<Result<Vec<_>>>()
    })?;
    decisions.sort_by(|a, b| a.rc_id.cmp(&b.rc_id));
    let multi = decisions.iter().filter(|d| d.multi_present).count();
    let counters = DecodeCounters {
        instances: decisions.len(),
        multi_present: multi,
        multi_present_rate: if decisions.is_empty() { 0.0 } else { multi as f64 / decisions.len() as f64 },
        forced: decisions.iter().filter(|d| d.forced).count(),
        missing_predictions: decisions
            .iter()
            .flat_map(|d| &d.verdicts)
            .map(|v| v.missing_predictions)
            .sum(),
    };
    Ok(DecodeReport {
        config: *config,
        decisions,
        counters,
    })
}

// Report file.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub relation: String,
    pub present: bool,
    pub hit_fwd: bool,
    pub hit_rev: bool,
    /// `null` stands for −∞.
    pub combined_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub rc_id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queried_present: Option<bool>,
    pub multi_present: bool,
    pub verdicts: Vec<VerdictRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeReportFile {
    pub version: u32,
    pub seed: Option<u64>,
    pub config: DecodingConfig,
    pub counters: DecodeCounters,
    pub instances: Vec<DecisionRecord>,
}

impl DecodeReportFile {
    pub fn labels(&self) -> BTreeMap<String, String> {
        self.instances.iter().map(|d| (d.rc_id.clone(), d.label.clone())).collect()
    }

    pub fn binary_predictions(&self) -> Result<BTreeMap<String, bool>> {
        self.instances
            .iter()
            .map(|d| {
                d.queried_present
                    .map(|p| (d.rc_id.clone(), p))
                    .ok_or_else(|| Error::Evaluation(format!("{}: not a binary (CRE) instance", d.rc_id)))
            })
            .collect()
    }
}

pub fn decode_report_file(report: &DecodeReport, seed: Option<u64>) -> DecodeReportFile {
    DecodeReportFile {
        version: 1,
        seed,
        config: report.config,
        counters: report.counters,
        instances: report
            .decisions
            .iter()
            .map(|d| DecisionRecord {
                rc_id: d.rc_id.clone(),
                label: d.label.clone(),
                queried_present: d.queried_present,
                multi_present: d.multi_present,
                verdicts: d
                    .verdicts
                    .iter()
                    .map(|v| VerdictRecord {
                        relation: v.relation.clone(),
                        present: v.present,
                        hit_fwd: v.hit_fwd,
                        hit_rev: v.hit_rev,
                        combined_margin: v.combined_margin.is_finite().then_some(v.combined_margin),
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn serialize_decode_report(report: &DecodeReport, seed: Option<u64>) -> Vec<u8> {
    to_json_bytes(&decode_report_file(report, seed))
}

pub fn parse_decode_report(bytes: &[u8]) -> Result<DecodeReportFile> {
    serde_json::from_slice(bytes).map_err(|e| Error::syntax("decode report", e))
}

// Calibration.

/// One dev question as seen by the threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    pub margin: f64,
    /// Gold answerability.
    pub gold: bool,
    /// The prediction proposes a span at all.
    pub has_span: bool,
    /// The proposed span is compatible with the expected entity.
    pub compatible: bool,
}

impl CalibrationPoint {
    fn answers(&self, threshold: f64) -> bool {
        self.has_span && self.margin > threshold
    }

    fn correct(&self) -> bool {
        self.gold && self.has_span && self.compatible
    }
}

/// Outcome of a threshold sweep over one group of questions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepResult {
    pub threshold: f64,
    pub f1: f64,
}

/// Distance of the outer sentinels from the extreme observed margins.
const SENTINEL_GAP: f64 = 1.0;

/// Binary F1 at `threshold`: a question counts as answered when it has a span
/// and its margin is above the threshold; it is a true positive when also
/// gold-answerable and compatible.
pub fn binary_f1(points: &[CalibrationPoint], threshold: f64) -> f64 {
    let mut tp = 0usize;
    let mut answered = 0usize;
    for p in points.iter().filter(|p| p.answers(threshold)) {
        answered += 1;
        tp += usize::from(p.correct());
    }
    let gold = points.iter().filter(|p| p.gold).count();
    f1_from_counts(tp, answered - tp, gold - tp)
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Candidate thresholds: midpoints between consecutive distinct margins, plus
/// one below the minimum and one above the maximum.
pub fn candidate_thresholds(points: &[CalibrationPoint]) -> Vec<f64> {
    let mut margins: Vec<f64> = points.iter().map(|p| p.margin).collect();
    margins.sort_by(f64::total_cmp);
    margins.dedup();
    let (Some(&lo), Some(&hi)) = (margins.first(), margins.last()) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(margins.len() + 1);
    out.push(lo - SENTINEL_GAP);
    out.extend(margins.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.push(hi + SENTINEL_GAP);
    out
}

/// Picks the candidate threshold with the best binary F1, preferring the
/// largest threshold on ties.
pub fn sweep_threshold(points: &[CalibrationPoint]) -> Result<SweepResult> {
    if points.is_empty() {
        return Err(Error::Calibration("no questions to calibrate on".into()));
    }
    if let Some(p) = points.iter().find(|p| !p.margin.is_finite()) {
        return Err(Error::Calibration(format!("non-finite margin {}", p.margin)));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.margin.total_cmp(&b.margin));
    // Suffix counts over sorted[i..]: spans proposed and true positives.
    let mut suffix_spans = vec![0usize; sorted.len() + 1];
    let mut suffix_tp = vec![0usize; sorted.len() + 1];
    for i in (0..sorted.len()).rev() {
        suffix_spans[i] = suffix_spans[i + 1] + usize::from(sorted[i].has_span);
        suffix_tp[i] = suffix_tp[i + 1] + usize::from(sorted[i].correct());
    }
    let gold = sorted.iter().filter(|p| p.gold).count();

    let mut best = SweepResult {
        threshold: f64::NEG_INFINITY,
        f1: -1.0,
    };
    for threshold in candidate_thresholds(&sorted) {
        let first_answered = sorted.partition_point(|p| p.margin <= threshold);
        let answered = suffix_spans[first_answered];
        let tp = suffix_tp[first_answered];
        let f1 = f1_from_counts(tp, answered - tp, gold - tp);
        if f1 >= best.f1 {
            best = SweepResult { threshold, f1 };
        }
    }
    Ok(best)
}

fn calibration_point(pred: &SpanPrediction, gold: bool, expected: CharSpan) -> CalibrationPoint {
    CalibrationPoint {
        margin: pred.margin(),
        gold,
        has_span: pred.char_span.is_some(),
        compatible: answers_compatibly(pred, expected),
    }
}

/// Per-template calibration details.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub table: ThresholdTable,
    pub per_template: BTreeMap<(String, Direction), SweepResult>,
    pub global: SweepResult,
}

/// Calibrates a threshold per (relation, direction) on dev questions.
/// Templates without any answerable dev question use the global threshold,
/// which is swept over all dev questions pooled.
pub fn calibrate_thresholds(dev: &SpDataset, preds: &PredictionSet) -> Result<Calibration> {
    if dev.is_empty() {
        return Err(Error::Calibration("empty dev set".into()));
    }
    preds.validate_against(dev)?;
    let mut groups: BTreeMap<(String, Direction), Vec<CalibrationPoint>> = BTreeMap::new();
    let mut pooled = Vec::with_capacity(dev.len());
    for inst in &dev.instances {
        let p = inst
            .provenance
            .as_ref()
            .ok_or_else(|| Error::MissingProvenance(inst.qid.clone()))?;
        let pred = preds.get(&inst.qid).ok_or_else(|| Error::MissingPrediction(inst.qid.clone()))?;
        let point = calibration_point(pred, inst.is_answerable(), p.expected_entity);
        pooled.push(point);
        groups.entry((p.relation.clone(), p.direction)).or_default().push(point);
    }
    let global = sweep_threshold(&pooled)?;
    let mut per_template = BTreeMap::new();
    for (key, points) in groups {
        if points.iter().any(|p| p.gold) {
            per_template.insert(key, sweep_threshold(&points)?);
        }
    }
    let table = ThresholdTable {
        by_template: per_template.iter().map(|(k, r)| (k.clone(), r.threshold)).collect(),
        global_fallback: global.threshold,
    };
    Ok(Calibration {
        table,
        per_template,
        global,
    })
}
